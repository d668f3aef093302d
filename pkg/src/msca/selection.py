"""Criteria for picking which frequency components an assignment uses.

Three routes are supported:

* ``lf``: take the k lowest-frequency components under a zigzag order
  (ascending u+v, ties by u then v), the standard compression-style
  ordering that puts (0, 0) first.
* ``ts``: score every component individually first, then keep the k
  best scores (ties broken toward lower frequency).
* ``nas``: relax the discrete choice into a softmax mixture over the
  whole grid (see ``attention.NasMixture``), train the logits, and read
  the result off with an argmax per part.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .attention import FrequencyAssignment
from .dct import dct2_stack


@dataclass(frozen=True)
class FrequencyGrid:
    """The full set of component indices of an H x W map."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid extents must be positive")

    @property
    def size(self):
        return self.height * self.width

    def components(self):
        return [(u, v) for u in range(self.height) for v in range(self.width)]


@dataclass(frozen=True)
class ComponentScore:
    component: tuple
    score: float

    def __post_init__(self):
        object.__setattr__(self, "component", tuple(int(c) for c in self.component))
        if not np.isfinite(self.score):
            raise ValueError(f"score for {self.component} is not finite")


@dataclass
class NasState:
    """Per-part mixture logits over one grid."""

    alpha: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 3:
            raise ValueError("alpha must be n x H x W")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def parts(self):
        return self.alpha.shape[0]

    @property
    def grid(self):
        return FrequencyGrid(self.alpha.shape[1], self.alpha.shape[2])


def init_nas_state(parts, H, W, temperature=1.0):
    """All-zero logits: the search starts from the uniform mixture."""
    return NasState(alpha=np.zeros((parts, H, W)), temperature=temperature)


def lf_order(grid):
    """All components sorted low-frequency first: by u+v, then u, then v."""
    return sorted(grid.components(), key=lambda c: (c[0] + c[1], c[0], c[1]))


def _lf_rank(grid):
    return {c: i for i, c in enumerate(lf_order(grid))}


def assign_lf(C, k, grid):
    """Assignment over the k lowest-frequency components of the grid."""
    if k < 1 or C % k != 0:
        raise ValueError(f"k={k} must be positive and divide C={C}")
    if k > grid.size:
        raise ValueError(f"k={k} exceeds the {grid.height}x{grid.width} grid")
    return FrequencyAssignment(
        channels=C,
        height=grid.height,
        width=grid.width,
        components=tuple(lf_order(grid)[:k]),
    )


def assign_ts(C, k, scores, grid=None):
    """Assignment over the k best-scoring components, best first.

    Score ties go to the lower-frequency component.  The grid extents are
    taken from ``grid`` when given, otherwise inferred as the smallest
    grid containing every scored component.
    """
    comps = [s.component for s in scores]
    if len(set(comps)) != len(comps):
        raise ValueError("duplicate components in scores")
    if k < 1 or C % k != 0:
        raise ValueError(f"k={k} must be positive and divide C={C}")
    if k > len(scores):
        raise ValueError(f"k={k} exceeds the {len(scores)} scored components")
    if grid is None:
        grid = FrequencyGrid(
            max(u for u, _ in comps) + 1, max(v for _, v in comps) + 1
        )
    rank = _lf_rank(grid)
    ordered = sorted(scores, key=lambda s: (-s.score, rank[s.component]))
    return FrequencyAssignment(
        channels=C,
        height=grid.height,
        width=grid.width,
        components=tuple(s.component for s in ordered[:k]),
    )


def _softmax(a):
    a = a - a.max()
    e = np.exp(a)
    return e / e.sum()


def nas_mix(Xpart, alpha_part, temperature=1.0):
    """Softmax(alpha)-weighted sum of every single-frequency projection.

    Equal logits give the plain average over the grid; a strongly
    dominant logit reproduces the corresponding single-component pool.
    """
    Xpart = np.asarray(Xpart, dtype=np.float64)
    alpha_part = np.asarray(alpha_part, dtype=np.float64)
    if Xpart.ndim != 3:
        raise ValueError(f"expected a rank-3 C x H x W array, got rank {Xpart.ndim}")
    if alpha_part.shape != Xpart.shape[1:]:
        raise ValueError(
            f"alpha grid {alpha_part.shape} does not match map {Xpart.shape[1:]}"
        )
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    w = _softmax(alpha_part / temperature)
    spectra = dct2_stack(Xpart)
    return (spectra * w).sum(axis=(1, 2))


def nas_derive(state, channels):
    """Collapse trained logits to one component per part (argmax).

    Exact ties are broken by low-frequency rank, so an untrained state
    derives (0, 0) everywhere.
    """
    grid = state.grid
    rank = _lf_rank(grid)
    comps = []
    for p in range(state.parts):
        a = state.alpha[p]
        best = a.max()
        tied = [
            (u, v)
            for u in range(grid.height)
            for v in range(grid.width)
            if a[u, v] == best
        ]
        comps.append(min(tied, key=lambda c: rank[c]))
    return FrequencyAssignment(
        channels=channels,
        height=grid.height,
        width=grid.width,
        components=tuple(comps),
    )


def save_scores_csv(path, scores):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "score"])
        for s in scores:
            writer.writerow([s.component[0], s.component[1], repr(float(s.score))])


def load_scores_csv(path):
    scores = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["u", "v", "score"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            scores.append(ComponentScore((int(row[0]), int(row[1])), float(row[2])))
    return scores

"""Two-dimensional discrete cosine transform kernels.

The transform family used throughout the package is the plain cosine basis

    B(u, v)[i, j] = cos(pi*u*(i + 1/2) / H) * cos(pi*v*(j + 1/2) / W)

with no normalization constants: the forward transform is the raw double
sum over the input, so the (0, 0) coefficient equals the plain sum of the
input, i.e. H*W times its mean.  That convention is what the attention
path relies on.  The orthonormal inverse exists so the forward transform
can be inverted exactly when needed (tests, synthetic data).

The separable fast path (two small matrix products) is the default; the
naive double-sum evaluation is kept permanently as a cross-checking
oracle, selectable with ``dct2(x, naive=True)``.
"""

import enum
import threading
from dataclasses import dataclass

import numpy as np

from .tensor import as_tensor, save_tensor


class Normalization(enum.Enum):
    UNNORMALIZED = "unnormalized"
    ORTHONORMAL = "orthonormal"


@dataclass(frozen=True)
class DctBasis:
    """A single cosine basis plane for frequency pair (u, v) on an H x W grid."""

    height: int
    width: int
    u: int
    v: int
    values: np.ndarray

    def __post_init__(self):
        if not (0 <= self.u < self.height and 0 <= self.v < self.width):
            raise ValueError(
                f"frequency ({self.u}, {self.v}) out of range for "
                f"{self.height}x{self.width}"
            )


@dataclass(frozen=True)
class FilterBank:
    """An ordered stack of distinct basis planes sharing one grid size."""

    height: int
    width: int
    components: tuple
    stacked: np.ndarray


def cosine_axis(n, k):
    """cos(pi*k*(i + 1/2)/n) sampled at i = 0..n-1."""
    i = np.arange(n, dtype=np.float64)
    return np.cos(np.pi * k * (i + 0.5) / n)


def cosine_matrix(n):
    """Rows are cosine_axis(n, k) for k = 0..n-1; row 0 is exactly all ones."""
    k = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(n, dtype=np.float64)[None, :]
    return np.cos(np.pi * k * (i + 0.5) / n)


def basis(H, W, u, v):
    """Basis plane for frequency (u, v) on an H x W grid.

    (0, 0) is exactly the all-ones plane; every entry lies in [-1, 1].
    """
    _check_component(H, W, u, v)
    values = np.outer(cosine_axis(H, u), cosine_axis(W, v))
    return DctBasis(height=H, width=W, u=u, v=v, values=values)


def _check_component(H, W, u, v):
    if H < 1 or W < 1:
        raise ValueError(f"grid extents must be positive, got {H}x{W}")
    if not (0 <= u < H and 0 <= v < W):
        raise ValueError(f"frequency ({u}, {v}) out of range for {H}x{W} grid")


def dct2(x, naive=False):
    """Forward 2D transform of a rank-2 array.

    ``f[h, w]`` is the double sum of ``x`` against the (h, w) basis plane.
    The default path factors the sum into a row pass and a column pass;
    ``naive=True`` evaluates the double sum against the full 4-index basis
    tensor instead and is the reference the fast path is checked against.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a rank-2 array, got rank {x.ndim}")
    if naive:
        return _dct2_naive(x)
    H, W = x.shape
    return cosine_matrix(H) @ x @ cosine_matrix(W).T


def _dct2_naive(x):
    H, W = x.shape
    i = np.arange(H, dtype=np.float64)
    j = np.arange(W, dtype=np.float64)
    h = np.arange(H, dtype=np.float64)
    w = np.arange(W, dtype=np.float64)
    # full B[h, w, i, j] basis tensor, evaluated straight from the definition
    bh = np.cos(np.pi * h[:, None] * (i[None, :] + 0.5) / H)
    bw = np.cos(np.pi * w[:, None] * (j[None, :] + 0.5) / W)
    b4 = bh[:, None, :, None] * bw[None, :, None, :]
    return np.einsum("hwij,ij->hw", b4, x)


def dct2_stack(x):
    """Separable forward transform over the trailing two axes of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("need at least two axes")
    H, W = x.shape[-2], x.shape[-1]
    return cosine_matrix(H) @ x @ cosine_matrix(W).T


def dct2_stack_adjoint(g):
    """Adjoint of :func:`dct2_stack` (gradient of the forward transform)."""
    g = np.asarray(g, dtype=np.float64)
    H, W = g.shape[-2], g.shape[-1]
    return cosine_matrix(H).T @ g @ cosine_matrix(W)


def idct2(f, normalization=Normalization.ORTHONORMAL):
    """Inverse 2D transform.

    UNNORMALIZED evaluates the bare double sum of coefficients against the
    basis planes; composed with the forward transform it is a fixed linear
    map, not the identity.  ORTHONORMAL applies the standard inverse
    scaling (the 0-frequency row and column weighted by 1/N, the rest by
    2/N) so that ``idct2(dct2(x))`` recovers ``x``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"expected a rank-2 array, got rank {f.ndim}")
    H, W = f.shape
    if normalization is Normalization.UNNORMALIZED:
        scaled = f
    elif normalization is Normalization.ORTHONORMAL:
        dh = np.full(H, 2.0 / H)
        dh[0] = 1.0 / H
        dw = np.full(W, 2.0 / W)
        dw[0] = 1.0 / W
        scaled = dh[:, None] * f * dw[None, :]
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return cosine_matrix(H).T @ scaled @ cosine_matrix(W)


def spectral_pool(X, u, v):
    """Project each channel of a C x H x W array onto one basis plane.

    At (0, 0) this is H*W times the per-channel spatial mean.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a rank-3 C x H x W array, got rank {X.ndim}")
    C, H, W = X.shape
    b = basis(H, W, u, v).values
    return (X * b).sum(axis=(1, 2))


def orthonormal_basis_2d(H, W, u, v):
    """Unit-norm version of the (u, v) basis plane; planes are orthonormal."""
    _check_component(H, W, u, v)
    su = np.sqrt((1.0 if u == 0 else 2.0) / H)
    sv = np.sqrt((1.0 if v == 0 else 2.0) / W)
    return (su * cosine_axis(H, u))[:, None] * (sv * cosine_axis(W, v))[None, :]


def make_filter_bank(H, W, components):
    """Stack the basis planes for an ordered list of distinct components."""
    components = tuple((int(u), int(v)) for u, v in components)
    if len(set(components)) != len(components):
        raise ValueError(f"duplicate components in {components}")
    for u, v in components:
        _check_component(H, W, u, v)
    stacked = np.stack([basis(H, W, u, v).values for u, v in components])
    stacked.flags.writeable = False
    return FilterBank(height=H, width=W, components=components, stacked=stacked)


_bank_cache = {}
_bank_lock = threading.Lock()


def get_filter_bank(H, W, components):
    """Cached :func:`make_filter_bank`; the cached stack is read-only."""
    key = (H, W, tuple((int(u), int(v)) for u, v in components))
    bank = _bank_cache.get(key)
    if bank is None:
        with _bank_lock:
            bank = _bank_cache.get(key)
            if bank is None:
                bank = make_filter_bank(H, W, key[2])
                _bank_cache[key] = bank
    return bank


_stack_cache = {}
_stack_lock = threading.Lock()


def component_stack(H, W, components):
    """Per-part basis stack for an assignment; repeats are allowed here.

    Unlike a filter bank, an attention assignment may legitimately give
    several parts the same frequency (every part on a 1x1 map, say), so
    this stack has no uniqueness constraint.
    """
    key = (H, W, tuple((int(u), int(v)) for u, v in components))
    stack = _stack_cache.get(key)
    if stack is None:
        with _stack_lock:
            stack = _stack_cache.get(key)
            if stack is None:
                for u, v in key[2]:
                    _check_component(H, W, u, v)
                stack = np.stack([basis(H, W, u, v).values for u, v in key[2]])
                stack.flags.writeable = False
                _stack_cache[key] = stack
    return stack


def export_filter_bank(path, bank):
    """Write a bank's stacked planes in the binary tensor format."""
    save_tensor(path, as_tensor(bank.stacked))

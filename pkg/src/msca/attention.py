"""Channel attention with pluggable compression strategies.

The operator maps a C x H x W feature block to one weight per channel:

    att = sigmoid(W2 @ relu(W1 @ (s * compress(X)) + b1) + b2)

and rescales each channel by its weight.  ``compress`` reduces every
channel to a scalar; the strategies are the spatial mean (``Gap``), a
fixed per-part cosine-basis projection (``MultiSpectral``), a free
per-part weight map (``LearnableTensor``), and a softmax mixture over
every frequency of the grid (``NasMixture``, used while searching for
components).  ``s`` is an optional fixed pre-scale on the fc input
(``freq_scale``, default 1) so spectral features can be brought onto the
same magnitude as means.

All gradients are analytic and cover the full composition
``apply_attention(X, attention_forward(X))``, including the path through
the attention weights themselves.

The public operations take a single rank-3 block.  The `_batch` variants
used by the training harness take N x C x H x W and are the same math.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dct import component_stack, dct2_stack, dct2_stack_adjoint


# ---------------------------------------------------------------------------
# assignments and strategies


@dataclass(frozen=True)
class FrequencyAssignment:
    """Mapping from channel parts to frequency pairs.

    The C channels are split into n = len(components) equal contiguous
    parts in ascending channel order; part i pools with components[i].
    """

    channels: int
    height: int
    width: int
    components: tuple

    def __post_init__(self):
        comps = tuple((int(u), int(v)) for u, v in self.components)
        object.__setattr__(self, "components", comps)
        if self.n == 0:
            raise ValueError("assignment needs at least one component")
        if self.channels % self.n != 0:
            raise ValueError(
                f"{self.channels} channels not divisible into {self.n} parts"
            )
        for u, v in comps:
            if not (0 <= u < self.height and 0 <= v < self.width):
                raise ValueError(
                    f"component ({u}, {v}) out of range for "
                    f"{self.height}x{self.width}"
                )
        if self.height == 1 and self.width == 1 and self.n > 1:
            warnings.warn(
                "1x1 map: all parts necessarily pool with (0, 0)",
                stacklevel=2,
            )

    @property
    def n(self):
        return len(self.components)

    @property
    def part_channels(self):
        return self.channels // self.n

    def part_of(self, c):
        return c // self.part_channels

    def to_json(self):
        return {
            "n": self.n,
            "H": self.height,
            "W": self.width,
            "channels": self.channels,
            "components": [list(c) for c in self.components],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            channels=doc["channels"],
            height=doc["H"],
            width=doc["W"],
            components=tuple(tuple(c) for c in doc["components"]),
        )


class Gap:
    """Spatial mean per channel."""

    tag = "gap"
    trainable_arrays = ()

    def pooled(self, x):
        return x.mean(axis=(2, 3)), None

    def backward(self, dfreq, x, cache):
        H, W = x.shape[2], x.shape[3]
        dx = np.broadcast_to(
            dfreq[:, :, None, None] / (H * W), x.shape
        ).copy()
        return dx, {}

    def extra_params(self):
        return 0

    def to_json(self):
        return {"strategy": self.tag}


def _channel_maps(assignment, planes):
    """Expand n per-part H x W planes into one plane per channel."""
    cp = assignment.part_channels
    return np.repeat(planes, cp, axis=0)


class MultiSpectral:
    """Fixed cosine-basis projection, one frequency per channel part."""

    tag = "ms"

    def __init__(self, assignment):
        self.assignment = assignment
        self._maps = _channel_maps(
            assignment,
            component_stack(assignment.height, assignment.width, assignment.components),
        )

    trainable_arrays = ()

    def pooled(self, x):
        self._check(x)
        return (x * self._maps).sum(axis=(2, 3)), None

    def backward(self, dfreq, x, cache):
        dx = dfreq[:, :, None, None] * self._maps[None]
        return dx, {}

    def _check(self, x):
        a = self.assignment
        if x.shape[1:] != (a.channels, a.height, a.width):
            raise ValueError(
                f"input {x.shape[1:]} does not match assignment "
                f"({a.channels}, {a.height}, {a.width})"
            )

    def extra_params(self):
        return 0

    def to_json(self):
        return {"strategy": self.tag, "assignment": self.assignment.to_json()}


class LearnableTensor:
    """Free per-part weight maps in place of the fixed cosine planes.

    ``init='dct'`` starts each part exactly at its assigned basis plane;
    ``init='random'`` draws uniform values in [-1, 1] (matching the basis
    value range).  With ``trainable=False`` the maps stay frozen and the
    strategy has no parameters of its own.
    """

    tag = "learnable"

    def __init__(self, assignment, init="dct", trainable=True, rng=None):
        if init not in ("dct", "random"):
            raise ValueError(f"unknown init {init!r}")
        self.assignment = assignment
        self.init = init
        self.trainable = trainable
        if init == "dct":
            self.values = np.array(
                component_stack(
                    assignment.height, assignment.width, assignment.components
                )
            )
        else:
            if rng is None:
                rng = np.random.default_rng()
            self.values = rng.uniform(
                -1.0, 1.0, size=(assignment.n, assignment.height, assignment.width)
            )

    @property
    def trainable_arrays(self):
        return ("T",) if self.trainable else ()

    def pooled(self, x):
        maps = _channel_maps(self.assignment, self.values)
        return (x * maps).sum(axis=(2, 3)), maps

    def backward(self, dfreq, x, maps):
        dx = dfreq[:, :, None, None] * maps[None]
        grads = {}
        if self.trainable:
            per_channel = np.einsum("nc,nchw->chw", dfreq, x)
            a = self.assignment
            grads["T"] = per_channel.reshape(
                a.n, a.part_channels, a.height, a.width
            ).sum(axis=1)
        return dx, grads

    def extra_params(self):
        if not self.trainable:
            return 0
        a = self.assignment
        return a.n * a.height * a.width

    def to_json(self):
        return {
            "strategy": self.tag,
            "assignment": self.assignment.to_json(),
            "init": self.init,
            "trainable": self.trainable,
        }


class NasMixture:
    """Softmax-weighted mixture over every frequency of the grid.

    Each part carries its own logits ``alpha`` over the H x W grid; the
    pooled value is the mixture of all single-frequency projections under
    softmax(alpha / temperature).  Gradients flow to alpha as well, which
    is what makes the component search differentiable.
    """

    tag = "nas"

    def __init__(self, alpha, temperature=1.0):
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.ndim != 3:
            raise ValueError("alpha must be n x H x W")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.alpha = alpha
        self.temperature = float(temperature)

    trainable_arrays = ("alpha",)

    def weights(self):
        a = self.alpha / self.temperature
        a = a - a.max(axis=(1, 2), keepdims=True)
        e = np.exp(a)
        return e / e.sum(axis=(1, 2), keepdims=True)

    def pooled(self, x):
        n, C = self.alpha.shape[0], x.shape[1]
        if C % n != 0:
            raise ValueError(f"{C} channels not divisible into {n} parts")
        if x.shape[2:] != self.alpha.shape[1:]:
            raise ValueError(
                f"map {x.shape[2:]} does not match alpha grid {self.alpha.shape[1:]}"
            )
        spectra = dct2_stack(x)
        w = self.weights()
        wmaps = np.repeat(w, C // n, axis=0)
        freq = (spectra * wmaps).sum(axis=(2, 3))
        return freq, (spectra, w, wmaps)

    def backward(self, dfreq, x, cache):
        spectra, w, wmaps = cache
        n = self.alpha.shape[0]
        dspectra = dfreq[:, :, None, None] * wmaps[None]
        dx = dct2_stack_adjoint(dspectra)
        g = np.einsum("nc,nchw->chw", dfreq, spectra)
        g = g.reshape(n, -1, *g.shape[1:]).sum(axis=1)
        inner = (g * w).sum(axis=(1, 2), keepdims=True)
        dalpha = w * (g - inner) / self.temperature
        return dx, {"alpha": dalpha}

    def extra_params(self):
        return int(np.prod(self.alpha.shape))

    def to_json(self):
        return {
            "strategy": self.tag,
            "alpha": self.alpha.tolist(),
            "temperature": self.temperature,
        }


# ---------------------------------------------------------------------------
# parameters


@dataclass
class AttentionParams:
    """fc-head weights plus the compression strategy.

    The head is the usual two-layer bottleneck C -> C/r -> C.  Its
    parameter count depends only on (C, r), never on the strategy;
    strategies may add their own trainable arrays on top.
    """

    channels: int
    reduction: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    strategy: object = field(default_factory=Gap)
    freq_scale: float = 1.0

    def __post_init__(self):
        C, r = self.channels, self.reduction
        if r <= 0 or C % r != 0:
            raise ValueError(f"reduction {r} must divide {C} channels")
        cr = C // r
        expect = {"w1": (cr, C), "b1": (cr,), "w2": (C, cr), "b2": (C,)}
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")


def fc_param_count(C, r):
    if r <= 0 or C % r != 0:
        raise ValueError(f"reduction {r} must divide {C} channels")
    cr = C // r
    return C * cr + cr + cr * C + C


def param_count(C, r, strategy):
    """Trainable parameter count of an attention block."""
    return fc_param_count(C, r) + strategy.extra_params()


def init_attention_params(
    C,
    r,
    strategy=None,
    rng=None,
    freq_scale=1.0,
    w2_zero=False,
    b2_init=0.0,
):
    """Fresh fc weights: scaled-normal W1, zero b1, scaled-normal or zero W2.

    ``w2_zero=True`` with a positive ``b2_init`` starts the block as a
    uniform near-pass-through gate (every attention value sigmoid(b2)),
    which is how the harness makes an untrained block behaviour-neutral.
    """
    if rng is None:
        rng = np.random.default_rng()
    if strategy is None:
        strategy = Gap()
    cr = C // r if r > 0 else 0
    if r <= 0 or C % r != 0:
        raise ValueError(f"reduction {r} must divide {C} channels")
    w1 = rng.standard_normal((cr, C)) * np.sqrt(2.0 / C)
    b1 = np.zeros(cr)
    w2 = np.zeros((C, cr)) if w2_zero else rng.standard_normal((C, cr)) * np.sqrt(2.0 / cr)
    b2 = np.full(C, float(b2_init))
    return AttentionParams(
        channels=C,
        reduction=r,
        w1=w1,
        b1=b1,
        w2=w2,
        b2=b2,
        strategy=strategy,
        freq_scale=freq_scale,
    )


def sigmoid(z):
    """Numerically stable logistic function, split by sign.

    Exact saturation to 0.0 / 1.0 happens in float64 once |z| passes
    about 36.7; below that the output is strictly inside (0, 1).
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class AttentionCache:
    x: np.ndarray
    freq: np.ndarray
    freq_scaled: np.ndarray
    z1: np.ndarray
    h: np.ndarray
    att: np.ndarray
    strategy_cache: object
    params: AttentionParams


def _check_rank3(X, params):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a rank-3 C x H x W array, got rank {X.ndim}")
    if X.shape[0] != params.channels:
        raise ValueError(
            f"input has {X.shape[0]} channels, params expect {params.channels}"
        )
    return X


def compress(X, params):
    """Reduce each channel to one scalar using the params' strategy.

    This is the raw pooled vector; the fc pre-scale is not applied here.
    """
    X = _check_rank3(X, params)
    freq, _ = params.strategy.pooled(X[None])
    return freq[0]


def compress_batch(X, params):
    freq, _ = params.strategy.pooled(np.asarray(X, dtype=np.float64))
    return freq


def attention_forward(X, params):
    """Attention weights for one block; returns (att, cache)."""
    X = _check_rank3(X, params)
    att, cache = attention_forward_batch(X[None], params)
    return att[0], cache


def attention_forward_batch(x, params):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected N x C x H x W, got rank {x.ndim}")
    freq, scache = params.strategy.pooled(x)
    freq_scaled = freq * params.freq_scale
    z1 = freq_scaled @ params.w1.T + params.b1
    h = np.maximum(z1, 0.0)
    z2 = h @ params.w2.T + params.b2
    att = sigmoid(z2)
    cache = AttentionCache(
        x=x,
        freq=freq,
        freq_scaled=freq_scaled,
        z1=z1,
        h=h,
        att=att,
        strategy_cache=scache,
        params=params,
    )
    return att, cache


def apply_attention(X, att):
    """Scale each channel of X by its attention value."""
    X = np.asarray(X, dtype=np.float64)
    att = np.asarray(att, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a rank-3 C x H x W array, got rank {X.ndim}")
    if att.shape != (X.shape[0],):
        raise ValueError(
            f"attention vector has shape {att.shape}, expected ({X.shape[0]},)"
        )
    return X * att[:, None, None]


def attention_backward(grad_out, cache, direct_only=False):
    """Gradients of a scalar loss through scaling-by-attention.

    ``grad_out`` is the loss gradient at ``apply_attention``'s output.
    Returns (grad_X, grads) where grads maps 'w1', 'b1', 'w2', 'b2' (and
    any strategy arrays such as 'T' or 'alpha') to their gradients.
    grad_X combines the direct scaling path with the path through the
    attention weights; ``direct_only=True`` keeps just the former (debug
    aid for checking the path split).
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if cache.x.shape[0] != 1:
        raise ValueError("cache came from a batched forward; use the _batch variant")
    if grad_out.shape != cache.x.shape[1:]:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match the cached "
            f"forward input {cache.x.shape[1:]}"
        )
    dx, grads = attention_backward_batch(grad_out[None], cache, direct_only)
    return dx[0], grads


def attention_backward_batch(grad_out, cache, direct_only=False):
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.x.shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match the cached "
            f"forward input {cache.x.shape}"
        )
    p = cache.params
    x, att = cache.x, cache.att

    datt = (grad_out * x).sum(axis=(2, 3))
    dx = att[:, :, None, None] * grad_out

    dz2 = datt * att * (1.0 - att)
    grads = {
        "b2": dz2.sum(axis=0),
        "w2": dz2.T @ cache.h,
    }
    dh = dz2 @ p.w2
    dz1 = dh * (cache.z1 > 0.0)
    grads["b1"] = dz1.sum(axis=0)
    grads["w1"] = dz1.T @ cache.freq_scaled
    dfreq = (dz1 @ p.w1) * p.freq_scale

    dx_pool, sgrads = p.strategy.backward(dfreq, x, cache.strategy_cache)
    grads.update(sgrads)
    if not direct_only:
        dx = dx + dx_pool
    return dx, grads


# ---------------------------------------------------------------------------
# serialization


def save_attention_params(path, params, weights="inline"):
    """Write params as JSON; ``weights='files'`` stores the fc arrays
    as sibling binary tensor files referenced by name."""
    doc = {
        "channels": params.channels,
        "reduction": params.reduction,
        "freq_scale": params.freq_scale,
        "strategy": params.strategy.to_json(),
    }
    arrays = {"w1": params.w1, "b1": params.b1, "w2": params.w2, "b2": params.b2}
    if weights == "inline":
        doc["weights"] = {k: v.tolist() for k, v in arrays.items()}
    elif weights == "files":
        import os

        refs = {}
        for k, v in arrays.items():
            ref = f"{os.path.basename(path)}.{k}.bin"
            T.save_tensor(os.path.join(os.path.dirname(path) or ".", ref), v)
            refs[k] = ref
        doc["weight_files"] = refs
    else:
        raise ValueError(f"unknown weights mode {weights!r}")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _strategy_from_json(doc, rng=None):
    tag = doc["strategy"]
    if tag == "gap":
        return Gap()
    if tag == "ms":
        return MultiSpectral(FrequencyAssignment.from_json(doc["assignment"]))
    if tag == "learnable":
        return LearnableTensor(
            FrequencyAssignment.from_json(doc["assignment"]),
            init=doc["init"],
            trainable=doc["trainable"],
            rng=rng,
        )
    if tag == "nas":
        return NasMixture(np.array(doc["alpha"]), doc["temperature"])
    raise ValueError(f"unknown strategy tag {tag!r}")


def load_attention_params(path):
    import os

    with open(path) as fh:
        doc = json.load(fh)
    if "weights" in doc:
        arrays = {k: np.array(v, dtype=np.float64) for k, v in doc["weights"].items()}
    else:
        base = os.path.dirname(path) or "."
        arrays = {
            k: T.load_tensor(os.path.join(base, ref))
            for k, ref in doc["weight_files"].items()
        }
    return AttentionParams(
        channels=doc["channels"],
        reduction=doc["reduction"],
        strategy=_strategy_from_json(doc["strategy"]),
        freq_scale=doc["freq_scale"],
        **arrays,
    )

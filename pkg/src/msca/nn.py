"""Small batched conv net with hand-written backprop.

Architecture: a fixed chain of 3x3 convolutions (no biases), ReLU, an
optional attention block per stage, then global average pooling and a
bias-free linear classifier.  Keeping every layer positively homogeneous
means that a uniform per-channel attention constant only rescales the
logits, so an untrained near-pass-through attention block leaves the
argmax (and hence accuracy) of the underlying net exactly unchanged.

Parameters live in a flat name -> array dict; attention parameter objects
share the same arrays, so in-place optimizer updates reach them.
"""

import numpy as np

from . import kernels
from .attention import attention_backward_batch, attention_forward_batch


def conv_out_hw(h, w, stride, k=3, pad=1):
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


class ConvNet:
    def __init__(
        self,
        stage_channels,
        strides,
        num_classes,
        in_shape,
        attention_factory,
        rng,
    ):
        if len(stage_channels) != len(strides):
            raise ValueError("one stride per stage required")
        c_prev, h, w = in_shape
        self.in_shape = tuple(in_shape)
        self.params = {}
        self.stages = []
        self.site_shapes = []
        self.force_attention_ones = False
        for s, (c, stride) in enumerate(zip(stage_channels, strides), start=1):
            wkey = f"conv{s}.w"
            self.params[wkey] = rng.standard_normal((c, c_prev, 3, 3)) * np.sqrt(
                2.0 / (c_prev * 9)
            )
            h, w = conv_out_hw(h, w, stride)
            att = attention_factory(c, h, w) if attention_factory else None
            if att is not None:
                for name in ("w1", "b1", "w2", "b2"):
                    self.params[f"att{s}.{name}"] = getattr(att, name)
                for name in att.strategy.trainable_arrays:
                    key = "T" if name == "T" else name
                    arr = (
                        att.strategy.values if name == "T" else att.strategy.alpha
                    )
                    self.params[f"att{s}.{key}"] = arr
            self.stages.append({"w": wkey, "stride": stride, "att": att})
            self.site_shapes.append((c, h, w))
            c_prev = c
        self.params["fc.w"] = rng.standard_normal((num_classes, c_prev)) * np.sqrt(
            1.0 / c_prev
        )
        self.num_classes = num_classes

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        ctx = []
        for stage in self.stages:
            w = self.params[stage["w"]]
            pre = kernels.conv2d_forward(x, w, stage["stride"], 1)
            act = np.maximum(pre, 0.0)
            att_cache = None
            out = act
            if stage["att"] is not None and not self.force_attention_ones:
                att, att_cache = attention_forward_batch(act, stage["att"])
                out = act * att[:, :, None, None]
            ctx.append({"x_in": x, "pre": pre, "att_cache": att_cache})
            x = out
        feat = x.mean(axis=(2, 3))
        logits = feat @ self.params["fc.w"].T
        ctx.append({"feat": feat, "last_hw": x.shape[2:]})
        return logits, ctx

    def backward(self, dlogits, ctx):
        grads = {}
        tail = ctx[-1]
        grads["fc.w"] = dlogits.T @ tail["feat"]
        dfeat = dlogits @ self.params["fc.w"]
        h, w = tail["last_hw"]
        dx = np.broadcast_to(
            dfeat[:, :, None, None] / (h * w),
            dfeat.shape + (h, w),
        ).copy()
        for stage, sctx in zip(reversed(self.stages), reversed(ctx[:-1])):
            if sctx["att_cache"] is not None:
                dx, agf = attention_backward_batch(dx, sctx["att_cache"])
                sname = stage["w"].split(".")[0].replace("conv", "att")
                for k, g in agf.items():
                    grads[f"{sname}.{k}"] = g
            dpre = dx * (sctx["pre"] > 0.0)
            wk = stage["w"]
            warr = self.params[wk]
            grads[wk] = kernels.conv2d_backward_w(
                dpre, sctx["x_in"], 3, 3, stage["stride"], 1
            )
            x_in = sctx["x_in"]
            dx = kernels.conv2d_backward_x(
                dpre, warr, x_in.shape[2], x_in.shape[3], stage["stride"], 1
            )
        return grads

    def loss_and_grads(self, x, labels):
        logits, ctx = self.forward(x)
        loss, dlogits = softmax_cross_entropy(logits, labels)
        return loss, self.backward(dlogits, ctx)

    def predict(self, x):
        logits, _ = self.forward(x)
        return logits.argmax(axis=1)

    def state(self):
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state, strict=True):
        """Copy matching arrays into this model (in place, keeping shares)."""
        for k, v in state.items():
            if k not in self.params:
                if strict:
                    raise KeyError(f"unknown parameter {k}")
                continue
            np.copyto(self.params[k], v)


def accuracy(model, x, labels):
    return float((model.predict(x) == labels).mean())


class SGD:
    """Plain momentum SGD over a parameter dict, updating in place."""

    def __init__(self, params, lr, momentum=0.9, lr_mult=None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.lr_mult = lr_mult or {}
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= (self.lr * self.lr_mult.get(k, 1.0)) * g
            self.params[k] += v

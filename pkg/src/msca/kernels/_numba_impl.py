"""Jit-compiled direct convolution loops.

Signatures mirror _numpy_impl exactly.  fastmath stays off so results are
reproducible bit-for-bit across runs of the same build.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_forward(x, w, stride, pad):
    N, Cin, H, W = x.shape
    Cout, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((N, Cout, Ho, Wo))
    for n in range(N):
        for co in range(Cout):
            for ho in range(Ho):
                for wo in range(Wo):
                    acc = 0.0
                    for ci in range(Cin):
                        for i in range(kh):
                            h = ho * stride - pad + i
                            if h < 0 or h >= H:
                                continue
                            for j in range(kw):
                                ww = wo * stride - pad + j
                                if ww < 0 or ww >= W:
                                    continue
                                acc += x[n, ci, h, ww] * w[co, ci, i, j]
                    out[n, co, ho, wo] = acc
    return out


@njit(cache=True)
def conv2d_backward_x(dout, w, H, W, stride, pad):
    N, Cout, Ho, Wo = dout.shape
    _, Cin, kh, kw = w.shape
    dx = np.zeros((N, Cin, H, W))
    for n in range(N):
        for co in range(Cout):
            for ho in range(Ho):
                for wo in range(Wo):
                    g = dout[n, co, ho, wo]
                    for ci in range(Cin):
                        for i in range(kh):
                            h = ho * stride - pad + i
                            if h < 0 or h >= H:
                                continue
                            for j in range(kw):
                                ww = wo * stride - pad + j
                                if ww < 0 or ww >= W:
                                    continue
                                dx[n, ci, h, ww] += g * w[co, ci, i, j]
    return dx


@njit(cache=True)
def conv2d_backward_w(dout, x, kh, kw, stride, pad):
    N, Cout, Ho, Wo = dout.shape
    _, Cin, H, W = x.shape
    dw = np.zeros((Cout, Cin, kh, kw))
    for n in range(N):
        for co in range(Cout):
            for ho in range(Ho):
                for wo in range(Wo):
                    g = dout[n, co, ho, wo]
                    for ci in range(Cin):
                        for i in range(kh):
                            h = ho * stride - pad + i
                            if h < 0 or h >= H:
                                continue
                            for j in range(kw):
                                ww = wo * stride - pad + j
                                if ww < 0 or ww >= W:
                                    continue
                                dw[co, ci, i, j] += g * x[n, ci, h, ww]
    return dw

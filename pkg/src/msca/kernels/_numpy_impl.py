"""Pure-numpy convolution via im2col / col2im."""

import numpy as np


def _im2col(x, kh, kw, stride, pad):
    N, Cin, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # (N, Cin, Ho, Wo, kh, kw)
    Ho, Wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(N, Cin * kh * kw, Ho * Wo)
    return np.ascontiguousarray(cols), Ho, Wo


def conv2d_forward(x, w, stride, pad):
    Cout, Cin, kh, kw = w.shape
    cols, Ho, Wo = _im2col(x, kh, kw, stride, pad)
    out = w.reshape(Cout, -1) @ cols
    return out.reshape(x.shape[0], Cout, Ho, Wo)


def conv2d_backward_x(dout, w, H, W, stride, pad):
    N, Cout, Ho, Wo = dout.shape
    _, Cin, kh, kw = w.shape
    dcols = w.reshape(Cout, -1).T @ dout.reshape(N, Cout, Ho * Wo)
    dcols = dcols.reshape(N, Cin, kh, kw, Ho, Wo)
    dxp = np.zeros((N, Cin, H + 2 * pad, W + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                dcols[:, :, i, j]
            )
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d_backward_w(dout, x, kh, kw, stride, pad):
    N, Cout, Ho, Wo = dout.shape
    Cin = x.shape[1]
    cols, _, _ = _im2col(x, kh, kw, stride, pad)
    dw = np.einsum("nol,nkl->ok", dout.reshape(N, Cout, Ho * Wo), cols)
    return dw.reshape(Cout, Cin, kh, kw)

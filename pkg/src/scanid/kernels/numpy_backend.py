"""Pure-numpy implementations of the convolution/pooling hot kernels.

Same contracts as the compiled backend in ``_fast.pyx``; used as the
fallback when the extension is unavailable (or forced via
``SCANID_FORCE_NUMPY=1``). All arrays are NCHW, stride-1 convolutions.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, ph, pw):
    """Unfold x (N,C,H,W) into columns of shape (N*OH*OW, C*kh*kw).

    Column ordering along the second axis is (C, kh, kw), matching a
    weight tensor reshaped from (F, C, kh, kw) to (F, C*kh*kw).
    """
    n, c, h, w = x.shape
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N,C,OH,OW,kh,kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, n, c, h, w, kh, kw, ph, pw):
    """Scatter-add columns back to an (N,C,H,W) gradient (inverse of im2col)."""
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + oh, j:j + ow] += cols[:, :, i, j]
    if ph or pw:
        return np.ascontiguousarray(dxp[:, :, ph:ph + h, pw:pw + w])
    return dxp


def maxpool_forward(x, k, stride, pad):
    """Max pooling. Returns (out, argmax) with argmax the in-window flat index."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                   constant_values=-np.inf)
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(win.shape[:4] + (k * k,))
    argmax = flat.argmax(axis=4).astype(np.int32)
    out = np.take_along_axis(flat, argmax[..., None].astype(np.intp), axis=4)[..., 0]
    return np.ascontiguousarray(out), argmax


def maxpool_backward(dout, argmax, n, c, h, w, k, stride, pad):
    """Route output gradients back to the argmax positions."""
    hp, wp = h + 2 * pad, w + 2 * pad
    oh, ow = dout.shape[2], dout.shape[3]
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    ni, ci, oi, oj = np.indices((n, c, oh, ow), sparse=False)
    ki, kj = argmax // k, argmax % k
    rows = oi * stride + ki
    cols_ = oj * stride + kj
    np.add.at(dxp, (ni, ci, rows, cols_), dout)
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])
    return dxp

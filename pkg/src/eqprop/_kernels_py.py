"""Pure-numpy backend for the batched convolution/pooling kernels.

All kernels take C-contiguous float64 arrays with a leading batch axis and
are the reference implementations for the compiled backend in _kernels_c.
Shapes follow the unpadded-input convention: a convolution with padding P
and filter size F maps spatial extent D to D + 2P - F + 1 (stride 1).

Index conventions (0-based here; callers validate shapes):

    conv2d_batch      out[b,o,i,j] = sum_{c,r,s} W[o,c,r,s] * Xp[b,c,i+r,j+s]
    kernel_grad_batch kg[o,c,r,s]  = sum_{b,i,j} G[b,o,i,j] * Xp[b,c,i+r,j+s]
    maxpool_batch     Y[b,c,i,j]   = max of the FxF window, ind = (r*, s*)
                      per window, ties broken by first occurrence in
                      row-major window scan
    inverse_pool_batch routes Y[b,c,i,j] to the stored (r*, s*) position,
                      zeros elsewhere
    pool_sample_batch Z sampled at the stored positions (the adjoint of
                      inverse_pool)

where Xp is X zero-padded by P on both spatial axes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_batch(w: np.ndarray, x: np.ndarray, pad: int) -> np.ndarray:
    """W (Co,Ci,F,F), X (B,Ci,D,D) -> (B,Co,Do,Do) with Do = D+2*pad-F+1."""
    cout, cin, f, _ = w.shape
    b = x.shape[0]
    xp = _pad(x, pad)
    dout = xp.shape[2] - f + 1
    # im2col: windows (B,Ci,Do,Do,F,F) -> (B, Do*Do, Ci*F*F), then one GEMM.
    win = sliding_window_view(xp, (f, f), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, dout * dout, cin * f * f)
    out = cols @ w.reshape(cout, cin * f * f).T
    return np.ascontiguousarray(out.transpose(0, 2, 1).reshape(b, cout, dout, dout))


def kernel_grad_batch(g: np.ndarray, x: np.ndarray, pad: int, f: int) -> np.ndarray:
    """G (B,Co,Do,Do), X (B,Ci,D,D) -> (Co,Ci,F,F), batch-summed."""
    b, cout, dout, _ = g.shape
    cin = x.shape[1]
    xp = _pad(x, pad)
    # windows (B,Ci,F,F,Do,Do): slide a Do-sized window; F = Dp - Do + 1.
    win = sliding_window_view(xp, (dout, dout), axis=(2, 3))
    cols = win.transpose(1, 2, 3, 0, 4, 5).reshape(cin * f * f, b * dout * dout)
    gmat = g.transpose(1, 0, 2, 3).reshape(cout, b * dout * dout)
    return np.ascontiguousarray((gmat @ cols.T).reshape(cout, cin, f, f))


def maxpool_batch(x: np.ndarray, f: int):
    """X (B,C,D,D) -> (Y (B,C,D/f,D/f), ind int64 (B,C,D/f,D/f,2))."""
    b, c, d, _ = x.shape
    dp = d // f
    blocks = x.reshape(b, c, dp, f, dp, f).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(b, c, dp, dp, f * f)
    arg = np.argmax(flat, axis=-1)  # first occurrence on ties, row-major
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ind = np.stack(np.divmod(arg, f), axis=-1).astype(np.int64)
    return np.ascontiguousarray(y), np.ascontiguousarray(ind)


def inverse_pool_batch(y: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    """Y (B,C,Dp,Dp), ind (B,C,Dp,Dp,2) -> (B,C,Dp*f,Dp*f)."""
    b, c, dp, _ = y.shape
    out = np.zeros((b, c, dp, dp, f, f), dtype=np.float64)
    bi, ci, ii, ji = np.ogrid[:b, :c, :dp, :dp]
    out[bi, ci, ii, ji, ind[..., 0], ind[..., 1]] = y
    return np.ascontiguousarray(
        out.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, dp * f, dp * f)
    )


def pool_sample_batch(z: np.ndarray, ind: np.ndarray, f: int) -> np.ndarray:
    """Z (B,C,Dp*f,Dp*f), ind (B,C,Dp,Dp,2) -> (B,C,Dp,Dp)."""
    b, c, d, _ = z.shape
    dp = d // f
    blocks = z.reshape(b, c, dp, f, dp, f).transpose(0, 1, 2, 4, 3, 5)
    bi, ci, ii, ji = np.ogrid[:b, :c, :dp, :dp]
    return np.ascontiguousarray(blocks[bi, ci, ii, ji, ind[..., 0], ind[..., 1]])

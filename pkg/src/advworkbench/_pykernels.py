"""Numpy implementations of the hot kernels.

Selected by :mod:`advworkbench.kernels` when the compiled ``_native`` module
is not importable. Signatures and results match ``_native.pyx`` (up to
floating-point summation order for the convolution).
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_MASK = (1 << 64) - 1
_XS_MULT = 0x2545F4914F6CDD1D


def _windows(x, k, stride):
    # [B, C, H', W', k, k] view, no copy
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, w, b, stride):
    k = w.shape[2]
    win = _windows(x, k, stride)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # [B, H', W', O]
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(gout, x, w, stride):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    Ho, Wo = gout.shape[2], gout.shape[3]
    win = _windows(x, k, stride)
    gw = np.tensordot(gout, win, axes=([0, 2, 3], [0, 2, 3]))  # [O, C, k, k]
    gb = gout.sum(axis=(0, 2, 3))
    gx = np.zeros_like(x)
    # one strided scatter per kernel offset
    contrib = np.tensordot(gout, w, axes=([1], [0]))  # [B, Ho, Wo, C, k, k]
    for p in range(k):
        for q in range(k):
            gx[:, :, p:p + stride * (Ho - 1) + 1:stride, q:q + stride * (Wo - 1) + 1:stride] += (
                contrib[:, :, :, :, p, q].transpose(0, 3, 1, 2)
            )
    return gx, gw, gb


def xorshift_block(state, n):
    """Advance a xorshift64* generator ``n`` times.

    Returns the raw 64-bit outputs as a ``uint64`` array and the new state.
    """
    out = np.empty(n, dtype=np.uint64)
    x = int(state)
    for i in range(n):
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        out[i] = (x * _XS_MULT) & _MASK
    return out, x

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: patch unfolding for valid convolution and the xorshift64* stream.

Mirrors ``_pykernels``. The copy/scatter loops run without the GIL and
single-threaded so results are reproducible run to run; the products go
through BLAS.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()


cdef void _im2col(double[:, :, :, ::1] x, double[:, ::1] cols, Py_ssize_t k,
                  Py_ssize_t stride, Py_ssize_t Ho, Py_ssize_t Wo) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t n, c, p, q, i, j, row, col
    for n in range(B):
        for i in range(Ho):
            for j in range(Wo):
                row = (n * Ho + i) * Wo + j
                col = 0
                for c in range(C):
                    for p in range(k):
                        for q in range(k):
                            cols[row, col] = x[n, c, i * stride + p, j * stride + q]
                            col += 1


def im2col(double[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    """Unfold ``x`` [B, C, H, W] into patch rows [B*H'*W', C*k*k]."""
    cdef Py_ssize_t Ho = (x.shape[2] - k) // stride + 1, Wo = (x.shape[3] - k) // stride + 1
    cols_arr = np.empty((x.shape[0] * Ho * Wo, x.shape[1] * k * k), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    with nogil:
        _im2col(x, cols, k, stride, Ho, Wo)
    return cols_arr


def col2im(double[:, ::1] cols, tuple shape, Py_ssize_t k, Py_ssize_t stride):
    """Adjoint of ``im2col``: scatter-add patch rows back into [B, C, H, W]."""
    cdef Py_ssize_t B = shape[0], C = shape[1], H = shape[2], W = shape[3]
    cdef Py_ssize_t Ho = (H - k) // stride + 1, Wo = (W - k) // stride + 1
    gx_arr = np.zeros((B, C, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, c, p, q, i, j, row, col
    with nogil:
        for n in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    row = (n * Ho + i) * Wo + j
                    col = 0
                    for c in range(C):
                        for p in range(k):
                            for q in range(k):
                                gx[n, c, i * stride + p, j * stride + q] += cols[row, col]
                                col += 1
    return gx_arr


def conv2d_forward(x, w, b, Py_ssize_t stride):
    B, H, W = x.shape[0], x.shape[2], x.shape[3]
    O, k = w.shape[0], w.shape[2]
    Ho, Wo = (H - k) // stride + 1, (W - k) // stride + 1
    cols = im2col(np.ascontiguousarray(x), k, stride)
    out = cols @ w.reshape(O, -1).T + b
    return np.ascontiguousarray(out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))


def conv2d_backward(gout, x, w, Py_ssize_t stride):
    O, k = w.shape[0], w.shape[2]
    x = np.ascontiguousarray(x)
    g2 = gout.transpose(0, 2, 3, 1).reshape(-1, O)
    cols = im2col(x, k, stride)
    gw = (g2.T @ cols).reshape(w.shape)
    gb = g2.sum(axis=0)
    gx = col2im(np.ascontiguousarray(g2 @ w.reshape(O, -1)), x.shape, k, stride)
    return gx, gw, gb


def xorshift_block(state, Py_ssize_t n):
    """Advance a xorshift64* generator ``n`` times; return (uint64 outputs, new state)."""
    out_arr = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t s = <uint64_t>int(state)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            s ^= s >> 12
            s ^= s << 25
            s ^= s >> 27
            out[i] = s * <uint64_t>0x2545F4914F6CDD1DULL
    return out_arr, int(s)

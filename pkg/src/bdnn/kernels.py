"""Compiled hot loops for layer-level forward passes.

The binary kernels walk packed 64-bit words with AND + popcount; the
popcount is the classic SWAR reduction, which LLVM lowers to the native
population-count instruction where the host has one.  Both kernels keep
the per-(column, plane) dot products integer-exact and accumulate the real
contractions in float64, in the same order as bitkernel.approx_dot so the
two paths agree to the last bit.

scalar_matvec / scalar_matmat are the deliberately plain float reference
used as the timing baseline: one scalar multiply-accumulate per element,
float64 accumulator, no hand vectorization or blocking.
"""

import numpy as np
from numba import njit, uint64

_M1 = uint64(0x5555555555555555)
_M2 = uint64(0x3333333333333333)
_M4 = uint64(0x0F0F0F0F0F0F0F0F)
_H01 = uint64(0x0101010101010101)


@njit(cache=True, nogil=True)
def _popcount64(v):
    v = v - ((v >> uint64(1)) & _M1)
    v = (v & _M2) + ((v >> uint64(2)) & _M2)
    v = (v + (v >> uint64(4))) & _M4
    return (v * _H01) >> uint64(56)


@njit(cache=True, nogil=True)
def binary_fc_forward(basis_words, coeffs, colsums, plane_words, plane_pops,
                      r, x_min, out):
    """out[n] = c_n . (M_n^T B) r + (c_n . colsum_n) * x_min

    basis_words: (N, k, W) uint64, plane_words: (Q, W) uint64.
    """
    n_units, k, n_words = basis_words.shape
    n_planes = plane_words.shape[0]
    for n in range(n_units):
        acc = 0.0
        for j in range(k):
            srj = 0.0
            for q in range(n_planes):
                pc = uint64(0)
                for w in range(n_words):
                    pc += _popcount64(basis_words[n, j, w] & plane_words[q, w])
                srj += r[q] * (2.0 * pc - plane_pops[q])
            acc += coeffs[n, j] * srj
        offset = 0.0
        for j in range(k):
            offset += coeffs[n, j] * colsums[n, j]
        out[n] = acc + x_min * offset


@njit(cache=True, nogil=True)
def binary_conv_forward(basis_words, coeffs, colsums, col_plane_words,
                        col_plane_pops, r, x_min, out):
    """out[n, p] for every filter n and patch column p.

    col_plane_words: (P, Q, W) uint64 packed bitplanes of each patch.
    """
    n_filters, k, n_words = basis_words.shape
    n_cols, n_planes = col_plane_pops.shape
    for n in range(n_filters):
        for p in range(n_cols):
            acc = 0.0
            for j in range(k):
                srj = 0.0
                for q in range(n_planes):
                    pc = uint64(0)
                    for w in range(n_words):
                        pc += _popcount64(
                            basis_words[n, j, w] & col_plane_words[p, q, w]
                        )
                    srj += r[q] * (2.0 * pc - col_plane_pops[p, q])
                acc += coeffs[n, j] * srj
            offset = 0.0
            for j in range(k):
                offset += coeffs[n, j] * colsums[n, j]
            out[n, p] = acc + x_min * offset


@njit(cache=True, nogil=True)
def scalar_matvec(weights, x, out):
    """Plain scalar dot products: out[n] = sum_d weights[n, d] * x[d]."""
    n_units, dim = weights.shape
    for n in range(n_units):
        acc = 0.0
        for d in range(dim):
            acc += weights[n, d] * x[d]
        out[n] = acc


@njit(cache=True, nogil=True)
def scalar_matmat(weights, cols_t, out):
    """Plain scalar products against row-major patch columns.

    cols_t is (P, D) so the inner loop reads contiguously; out is (N, P).
    """
    n_units, dim = weights.shape
    n_cols = cols_t.shape[0]
    for n in range(n_units):
        for p in range(n_cols):
            acc = 0.0
            for d in range(dim):
                acc += weights[n, d] * cols_t[p, d]
            out[n, p] = acc


def warmup():
    """Compile the kernels on tiny inputs (numba caches to disk after)."""
    bw = np.zeros((1, 1, 1), dtype=np.uint64)
    cf = np.zeros((1, 1))
    cs = np.zeros((1, 1), dtype=np.int64)
    pw = np.zeros((1, 1), dtype=np.uint64)
    pp = np.zeros(1, dtype=np.int64)
    r = np.zeros(1)
    binary_fc_forward(bw, cf, cs, pw, pp, r, 0.0, np.zeros(1))
    binary_conv_forward(bw, cf, cs, np.zeros((1, 1, 1), dtype=np.uint64),
                        np.zeros((1, 1), dtype=np.int64), r, 0.0,
                        np.zeros((1, 1)))
    w32 = np.zeros((1, 1), dtype=np.float32)
    scalar_matvec(w32, np.zeros(1, dtype=np.float32), np.zeros(1))
    scalar_matmat(w32, np.zeros((1, 1), dtype=np.float32), np.zeros((1, 1)))

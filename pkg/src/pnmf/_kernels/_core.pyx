# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused KL passes, per-column NNLS loop, FNV-1a hash.

Matrix products stay on BLAS via numpy; the compiled code fuses the
elementwise passes around them and runs the small per-column solver
loops without interpreter overhead.  Semantics match
``pnmf._kernels._pycore`` (see the parity tests).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log

cnp.import_array()


def fnv1a64(data):
    """FNV-1a 64-bit hash of a bytes-like object."""
    cdef const unsigned char[::1] buf = bytes(data) if not isinstance(data, (bytes, bytearray, memoryview)) else data
    cdef unsigned long long h = 0xCBF29CE484222325ULL
    cdef unsigned long long prime = 0x00000100000001B3ULL
    cdef Py_ssize_t i, n = buf.shape[0]
    with nogil:
        for i in range(n):
            h = (h ^ <unsigned long long>buf[i]) * prime
    return int(h)


def kl_div(cnp.ndarray[cnp.float64_t, ndim=2] V not None,
           cnp.ndarray[cnp.float64_t, ndim=2] WH not None,
           double eps):
    """Generalized KL divergence sum(V*log(V/WH) - V + WH), WH floored at eps."""
    cdef double[:, ::1] v = np.ascontiguousarray(V)
    cdef double[:, ::1] wh = np.ascontiguousarray(WH)
    cdef Py_ssize_t i, j, rows = v.shape[0], cols = v.shape[1]
    cdef double total = 0.0, vv, c
    with nogil:
        for i in range(rows):
            for j in range(cols):
                c = wh[i, j]
                if c < eps:
                    c = eps
                vv = v[i, j]
                if vv > 0.0:
                    total += vv * log(vv / c) - vv + c
                else:
                    total += c
    return total


cdef void _scaled_ratio_update(double[:, ::1] target,
                               const double[:, ::1] numer,
                               const double[::1] denom,
                               double eps,
                               bint denom_per_col) nogil:
    # target *= numer / max(denom, eps); denom indexed by column or by row.
    cdef Py_ssize_t i, j, rows = target.shape[0], cols = target.shape[1]
    cdef double d
    for i in range(rows):
        for j in range(cols):
            d = denom[j] if denom_per_col else denom[i]
            if d < eps:
                d = eps
            target[i, j] *= numer[i, j] / d


cdef void _floored_ratio(const double[:, ::1] V,
                         const double[:, ::1] WH,
                         double[:, ::1] out,
                         double eps) nogil:
    cdef Py_ssize_t i, j, rows = V.shape[0], cols = V.shape[1]
    cdef double c
    for i in range(rows):
        for j in range(cols):
            c = WH[i, j]
            if c < eps:
                c = eps
            out[i, j] = V[i, j] / c


def kl_update(cnp.ndarray[cnp.float64_t, ndim=2] V not None,
              cnp.ndarray[cnp.float64_t, ndim=2] W not None,
              cnp.ndarray[cnp.float64_t, ndim=2] H not None,
              double eps):
    """One multiplicative-update iteration for the KL objective.

    Basis update, reconstruction refresh, coefficient update; returns
    new (W, H) arrays and leaves the inputs untouched.
    """
    V = np.ascontiguousarray(V)
    W = np.array(W, dtype=np.float64, order="C", copy=True)
    H = np.array(H, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ratio = np.empty_like(V)

    _floored_ratio(V, np.matmul(W, H), ratio, eps)
    _scaled_ratio_update(W, np.matmul(ratio, H.T), H.sum(axis=1), eps, True)
    _floored_ratio(V, np.matmul(W, H), ratio, eps)
    _scaled_ratio_update(H, np.matmul(W.T, ratio), W.sum(axis=0), eps, False)
    return W, H


def nnls_pg(cnp.ndarray[cnp.float64_t, ndim=2] WtW not None,
            cnp.ndarray[cnp.float64_t, ndim=2] WtV not None,
            cnp.ndarray[cnp.float64_t, ndim=1] vsq not None,
            double step,
            int max_iters,
            double tol):
    """Projected-gradient NNLS on normal equations, one loop per column.

    Same iteration and stopping rule as the fallback backend: start at
    h = 0, take steps ``h <- max(h - step*(WtW h - Wtv), 0)``, stop when
    the objective change falls below ``tol`` relative to its previous
    value or after ``max_iters`` iterations.
    """
    cdef double[:, ::1] G = np.ascontiguousarray(WtW)
    cdef double[:, ::1] B = np.ascontiguousarray(WtV)
    cdef double[::1] v2 = np.ascontiguousarray(vsq)
    cdef Py_ssize_t R = G.shape[0], N = B.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((R, N), dtype=np.float64)
    cdef double[:, ::1] Hm = out
    cdef double[::1] h, g
    cdef Py_ssize_t j, r, q, it
    cdef double f_old, f_new, s, lin, quad, thresh

    h_buf = np.zeros(R, dtype=np.float64)
    g_buf = np.zeros(R, dtype=np.float64)
    h = h_buf
    g = g_buf

    with nogil:
        for j in range(N):
            for r in range(R):
                h[r] = 0.0
            f_old = v2[j]
            for it in range(max_iters):
                for r in range(R):
                    s = 0.0
                    for q in range(R):
                        s += G[r, q] * h[q]
                    g[r] = s - B[r, j]
                for r in range(R):
                    s = h[r] - step * g[r]
                    h[r] = s if s > 0.0 else 0.0
                lin = 0.0
                for r in range(R):
                    lin += B[r, j] * h[r]
                quad = 0.0
                for r in range(R):
                    s = 0.0
                    for q in range(R):
                        s += G[r, q] * h[q]
                    quad += h[r] * s
                f_new = v2[j] - 2.0 * lin + quad
                thresh = fabs(f_old)
                if thresh < 1e-12:
                    thresh = 1e-12
                if fabs(f_old - f_new) <= tol * thresh:
                    f_old = f_new
                    break
                f_old = f_new
            for r in range(R):
                Hm[r, j] = h[r]
    return out

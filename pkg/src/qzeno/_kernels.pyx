# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics are identical to ``_fallback``."""
import numpy as np

from libc.math cimport sqrt, cos


def lindblad_rhs(const double complex[:, :, :, ::1] rho,
                 const double complex[:, ::1] hs_left,
                 const double complex[:, ::1] hs_right,
                 double omega,
                 const double[::1] coup_left,
                 const double[::1] coup_right,
                 double gamma_phase,
                 double gamma_up,
                 double gamma_down):
    cdef Py_ssize_t S = rho.shape[0]
    cdef Py_ssize_t N = rho.shape[1]
    if rho.shape[2] != S or rho.shape[3] != N:
        raise ValueError("rho must have shape (S, N, S, N)")
    cdef Py_ssize_t a, b, c, j, k, row, col
    # strides of the flat (S, N, S, N) layout
    cdef Py_ssize_t sj = S * N
    cdef Py_ssize_t sa = N * sj
    cdef Py_ssize_t sb = N
    cdef double complex acc, r, qr, rq
    cdef double djk, bbd_j, bbd_k
    cdef double complex I = 1j
    out_arr = np.empty((S, N, S, N), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] out_view = out_arr
    cdef double complex* out = &out_view[0, 0, 0, 0]
    cdef const double complex* p = &rho[0, 0, 0, 0]
    cdef const double complex* x
    sq_arr = np.sqrt(np.arange(N + 1, dtype=np.float64))
    cdef double[::1] sq = sq_arr

    for a in range(S):
        for j in range(N):
            bbd_j = j + 1.0 if j < N - 1 else 0.0
            row = a * sa + j * sj
            for b in range(S):
                for k in range(N):
                    col = b * sb + k
                    x = p + row + col
                    r = x[0]
                    acc = 0.0
                    for c in range(S):
                        acc = acc + hs_left[a, c] * p[c * sa + j * sj + col] - p[row + c * sb + k] * hs_right[c, b]
                    djk = <double>(j - k)
                    acc = acc + omega * djk * r
                    qr = 0.0
                    if j > 0:
                        qr = qr + sq[j] * x[-sj]
                    if j < N - 1:
                        qr = qr + sq[j + 1] * x[sj]
                    rq = 0.0
                    if k > 0:
                        rq = rq + sq[k] * x[-1]
                    if k < N - 1:
                        rq = rq + sq[k + 1] * x[1]
                    acc = acc + coup_left[a] * qr - coup_right[b] * rq
                    acc = -I * acc
                    acc = acc - 0.5 * gamma_phase * djk * djk * r
                    bbd_k = k + 1.0 if k < N - 1 else 0.0
                    if j > 0 and k > 0:
                        acc = acc + gamma_up * sq[j] * sq[k] * x[-sj - 1]
                    acc = acc - 0.5 * gamma_up * (bbd_j + bbd_k) * r
                    if j < N - 1 and k < N - 1:
                        acc = acc + gamma_down * sq[j + 1] * sq[k + 1] * x[sj + 1]
                    acc = acc - 0.5 * gamma_down * (j + k) * r
                    out[row + col] = acc
    return out_arr


def cosine_transform(const double[::1] u, const double[::1] wh, const double[::1] delta):
    cdef Py_ssize_t M = u.shape[0]
    cdef Py_ssize_t K = delta.shape[0]
    cdef Py_ssize_t m, k
    cdef double s, d
    out_arr = np.empty(K, dtype=np.float64)
    cdef double[::1] out = out_arr
    for k in range(K):
        d = delta[k]
        s = 0.0
        for m in range(M):
            s += wh[m] * cos(d * u[m])
        out[k] = s
    return out_arr

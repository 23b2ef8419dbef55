# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels. Semantics match ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


cdef extern from *:
    int __builtin_parityll(unsigned long long) nogil


def lfsr_bits(unsigned long long poly, int degree, unsigned long long state):
    cdef Py_ssize_t length = (1 << degree) - 1
    cdef unsigned long long taps = poly & <unsigned long long>length
    cdef int top = degree - 1
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] bits = np.empty(length, dtype=np.uint8)
    cdef unsigned long long reg = state
    cdef Py_ssize_t i, first_return = 0
    cdef unsigned long long fb
    with nogil:
        for i in range(length):
            bits[i] = reg & 1
            fb = __builtin_parityll(reg & taps)
            reg = (reg >> 1) | (fb << top)
            if reg == state and first_return == 0:
                first_return = i + 1
    return bits, first_return


def apply_paths(x, gains, delays, dopplers, double denom):
    cdef const double complex[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef const double complex[::1] hv = np.ascontiguousarray(gains, dtype=np.complex128)
    cdef const long long[::1] dv = np.ascontiguousarray(delays, dtype=np.int64)
    cdef const double[::1] kv = np.ascontiguousarray(dopplers, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], p = hv.shape[0]
    out = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] y = out
    cdef Py_ssize_t i, t, d
    cdef double step, rc, rs, pr, pi, tmp
    cdef double complex h, xt
    with nogil:
        for i in range(p):
            d = dv[i]
            if d >= n:
                continue
            h = hv[i]
            step = 2.0 * M_PI * kv[i] / denom
            rc = cos(step)
            rs = sin(step)
            for t in range(n - d):
                if t % 256 == 0:
                    # re-anchor the recurrence so rounding never accumulates
                    pr = cos(step * t)
                    pi = sin(step * t)
                xt = h * xv[t]
                y[t + d] = y[t + d] + (xt.real * pr - xt.imag * pi) + 1j * (xt.real * pi + xt.imag * pr)
                tmp = pr * rc - pi * rs
                pi = pr * rs + pi * rc
                pr = tmp
    return out


cdef inline void _dot_cyclic(const double[:, ::1] Rd, Py_ssize_t m, const double[::1] av,
                             Py_ssize_t ks, Py_ssize_t N, double* re, double* im) noexcept nogil:
    # sum_n a[(n - ks) mod N] R[m, n], split at the wrap point so both loops are contiguous
    cdef double sr = 0.0, si = 0.0, w
    cdef Py_ssize_t n
    for n in range(ks, N):
        w = av[n - ks]
        sr = sr + w * Rd[m, 2 * n]
        si = si + w * Rd[m, 2 * n + 1]
    for n in range(ks):
        w = av[n - ks + N]
        sr = sr + w * Rd[m, 2 * n]
        si = si + w * Rd[m, 2 * n + 1]
    re[0] = sr
    im[0] = si


def correlation_map(R, a, b, dopplers, delays, int cp_length, bint compensate):
    R_arr = np.ascontiguousarray(R, dtype=np.complex128)
    cdef Py_ssize_t M = R_arr.shape[0], N = R_arr.shape[1]
    cdef const double[:, ::1] Rd = R_arr.view(np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const long long[::1] kv = np.ascontiguousarray(dopplers, dtype=np.int64)
    cdef const long long[::1] lv = np.ascontiguousarray(delays, dtype=np.int64)
    cdef Py_ssize_t K = kv.shape[0], L = lv.shape[0]
    acc_arr = np.zeros((K, 2 * M), dtype=np.float64)
    out_arr = np.zeros((K, L), dtype=np.complex128)
    cdef double[:, ::1] acc = acc_arr
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t m, j, i, ks, ls, idx
    cdef double denom = N * (M + cp_length)
    cdef double ang, c, s, re, im, sr, si, w, scale = 1.0 / (M * N)
    with nogil:
        # Doppler-axis correlation, de-rotated per delay row: acc[j, m]
        for j in range(K):
            ks = kv[j] % N
            if ks < 0:
                ks = ks + N
            for m in range(M):
                _dot_cyclic(Rd, m, av, ks, N, &re, &im)
                if compensate:
                    ang = -2.0 * M_PI * m * kv[j] / denom
                    c = cos(ang)
                    s = sin(ang)
                    acc[j, 2 * m] = re * c - im * s
                    acc[j, 2 * m + 1] = re * s + im * c
                else:
                    acc[j, 2 * m] = re
                    acc[j, 2 * m + 1] = im
        # delay-axis correlation with the per-hypothesis phase offset
        for j in range(K):
            for i in range(L):
                ls = lv[i] % M
                if ls < 0:
                    ls = ls + M
                sr = 0.0
                si = 0.0
                for m in range(M):
                    idx = m - ls
                    if idx < 0:
                        idx = idx + M
                    w = bv[idx]
                    sr = sr + w * acc[j, 2 * m]
                    si = si + w * acc[j, 2 * m + 1]
                if compensate:
                    ang = -2.0 * M_PI * (cp_length - lv[i]) * kv[j] / denom
                    c = cos(ang)
                    s = sin(ang)
                    out[j, i] = (sr * c - si * s) * scale + 1j * (sr * s + si * c) * scale
                else:
                    out[j, i] = sr * scale + 1j * si * scale
    return out_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-site symbol scan. Mirrors ``_scan_py.scan_symbols``."""

from libc.math cimport exp, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np


def scan_symbols(double complex[::1] resid,
                 long long[::1] point_idx,
                 long long[::1] labels,
                 long long[::1] counts,
                 const double complex[::1] h,
                 const double complex[::1] points,
                 const long long[::1] pair_point,
                 const long long[::1] pair_label,
                 const double[::1] log_prior,
                 double inv_temp,
                 const double[::1] uniforms):
    cdef Py_ssize_t N = resid.shape[0]
    cdef Py_ssize_t L = h.shape[0]
    cdef Py_ssize_t n_sym = point_idx.shape[0]
    cdef Py_ssize_t P = points.shape[0]
    cdef Py_ssize_t Q = pair_point.shape[0]
    cdef Py_ssize_t i, n, k, k0, k1, j, p, q, pick, old, lab
    cdef double complex s_old, v, e
    cdef double d, top, total, target, acc
    if n_sym != N + L - 1 or uniforms.shape[0] != n_sym:
        raise ValueError("inconsistent block geometry")

    cdef double complex* stripped = <double complex*> malloc(L * sizeof(double complex))
    cdef double* dist = <double*> malloc(P * sizeof(double))
    cdef double* w = <double*> malloc(Q * sizeof(double))
    if stripped == NULL or dist == NULL or w == NULL:
        free(stripped); free(dist); free(w)
        raise MemoryError()
    try:
        for i in range(n_sym):
            n = i - (L - 1)
            k0 = n if n > 0 else 0
            k1 = n + L - 1
            if k1 > N - 1:
                k1 = N - 1
            old = point_idx[i]
            s_old = points[old]
            # residual with this symbol's contribution removed
            for k in range(k0, k1 + 1):
                stripped[k - k0] = resid[k] + s_old * h[k - n]
            for p in range(P):
                v = points[p]
                d = 0.0
                for k in range(k0, k1 + 1):
                    e = stripped[k - k0] - v * h[k - n]
                    d += e.real * e.real + e.imag * e.imag
                dist[p] = d
            top = -INFINITY
            for q in range(Q):
                w[q] = log_prior[q] - dist[pair_point[q]] * inv_temp
                if w[q] > top:
                    top = w[q]
            total = 0.0
            for q in range(Q):
                w[q] = exp(w[q] - top)
                total += w[q]
            target = uniforms[i] * total
            acc = 0.0
            pick = -1
            for q in range(Q):
                acc += w[q]
                if acc > target:
                    pick = q
                    break
            if pick < 0:
                q = Q - 1
                while q > 0 and w[q] <= 0.0:
                    q -= 1
                pick = q
            p = pair_point[pick]
            lab = pair_label[pick]
            counts[labels[i]] -= 1
            counts[lab] += 1
            labels[i] = lab
            point_idx[i] = p
            v = points[p]
            for k in range(k0, k1 + 1):
                resid[k] = stripped[k - k0] - v * h[k - n]
    finally:
        free(stripped)
        free(dist)
        free(w)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``mdiqkd._kernels_py.bsm_probabilities``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, sqrt

cnp.import_array()

N_PHASE = 48


def bsm_probabilities(a, b, double overlap, double q, int n_phase=N_PHASE):
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] aa = np.ascontiguousarray(a, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] bb = np.ascontiguousarray(b, dtype=np.complex128)
    cdef Py_ssize_t n = aa.shape[0], i, k, p
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, 2), dtype=np.float64)
    cdef double sk = sqrt(overlap), logq = log(q)
    cdef double ar[2]
    cdef double ai[2]
    cdef double br[2]
    cdef double bi[2]
    cdef double inc[2]
    cdef double m[4]
    cdef double s0[4]
    cdef double s1[4]
    cdef double cph, sph, cr, ci, xr, xi, acc_p, acc_m, ls
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ctab = np.cos(2.0 * np.pi * np.arange(n_phase) / n_phase)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] stab = np.sin(2.0 * np.pi * np.arange(n_phase) / n_phase)
    for i in range(n):
        for p in range(2):
            ar[p] = aa[i, p].real
            ai[p] = aa[i, p].imag
            br[p] = bb[i, p].real
            bi[p] = bb[i, p].imag
            inc[p] = (1.0 - overlap) * (br[p] * br[p] + bi[p] * bi[p])
        acc_p = 0.0
        acc_m = 0.0
        for k in range(n_phase):
            cph = ctab[k]
            sph = stab[k]
            for p in range(2):
                cr = sk * (br[p] * cph - bi[p] * sph)
                ci = sk * (br[p] * sph + bi[p] * cph)
                xr = ar[p] + cr
                xi = ai[p] + ci
                m[p] = 0.5 * (xr * xr + xi * xi + inc[p])
                xr = ar[p] - cr
                xi = ai[p] - ci
                m[2 + p] = 0.5 * (xr * xr + xi * xi + inc[p])
            for p in range(4):
                ls = logq - m[p]
                s0[p] = exp(ls)
                s1[p] = -expm1(ls)
            acc_p += s1[0] * s1[1] * s0[2] * s0[3] + s0[0] * s0[1] * s1[2] * s1[3]
            acc_m += s1[0] * s1[3] * s0[1] * s0[2] + s1[1] * s1[2] * s0[0] * s0[3]
        out[i, 0] = acc_p / n_phase
        out[i, 1] = acc_m / n_phase
    return out

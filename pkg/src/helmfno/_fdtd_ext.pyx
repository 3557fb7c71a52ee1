# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled leapfrog loop for the 2-D acoustic wave equation.

Mirrors ``helmfno._kernels.leapfrog`` operation for operation; arrays carry a
two-cell ring of zero ghosts so the 4th-order stencil never goes one-sided.
"""
import numpy as np

cdef double C0 = -2.5
cdef double C1 = 4.0 / 3.0
cdef double C2 = -1.0 / 12.0


def leapfrog(double[:, ::1] v2dt2, double[:, ::1] damp, Py_ssize_t src_iz,
             Py_ssize_t src_ix, double[::1] src, double idx2, double idz2,
             Py_ssize_t n_t, Py_ssize_t pad, Py_ssize_t nz, Py_ssize_t nx):
    cdef Py_ssize_t NZ = v2dt2.shape[0]
    cdef Py_ssize_t NX = v2dt2.shape[1]
    cdef double[:, ::1] pp = np.zeros((NZ + 4, NX + 4))
    cdef double[:, ::1] pc = np.zeros((NZ + 4, NX + 4))
    cdef double[:, ::1] pn = np.zeros((NZ + 4, NX + 4))
    cdef double[:, ::1] tmp
    out_arr = np.zeros((n_t, nz, nx))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, i, j, gi, gj
    cdef double lx, lz, lap, g
    cdef Py_ssize_t si = src_iz + 2
    cdef Py_ssize_t sj = src_ix + 2

    for n in range(n_t - 1):
        for i in range(NZ):
            gi = i + 2
            for j in range(NX):
                gj = j + 2
                lx = (C2 * (pc[gi, gj - 2] + pc[gi, gj + 2])
                      + C1 * (pc[gi, gj - 1] + pc[gi, gj + 1])) + C0 * pc[gi, gj]
                lz = (C2 * (pc[gi - 2, gj] + pc[gi + 2, gj])
                      + C1 * (pc[gi - 1, gj] + pc[gi + 1, gj])) + C0 * pc[gi, gj]
                lap = lx * idx2 + lz * idz2
                pn[gi, gj] = (2.0 * pc[gi, gj] - pp[gi, gj]) + v2dt2[i, j] * lap
        pn[si, sj] = pn[si, sj] - v2dt2[src_iz, src_ix] * src[n]
        for i in range(NZ):
            gi = i + 2
            for j in range(NX):
                gj = j + 2
                g = damp[i, j]
                pn[gi, gj] = pn[gi, gj] * g
                pc[gi, gj] = pc[gi, gj] * g
        tmp = pp
        pp = pc
        pc = pn
        pn = tmp
        for i in range(nz):
            for j in range(nx):
                out[n + 1, i, j] = pc[i + pad + 2, j + pad + 2]
        if pc[si, sj] != pc[si, sj]:
            raise FloatingPointError(f"non-finite pressure at step {n + 1}")
    return out_arr

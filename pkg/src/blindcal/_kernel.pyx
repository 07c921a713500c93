# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled synchronous round loop; see ``_kernel_py.advance`` for the contract."""
import numpy as np

from libc.math cimport fabs


def advance(double[:, ::1] theta, double[:, ::1] yhist, Py_ssize_t[::1] hist,
            const double[::1] alpha, const double[::1] beta,
            const Py_ssize_t[::1] src, const Py_ssize_t[::1] dst, const double[::1] gam,
            const unsigned char[::1] frozen, const double[::1] comp, Py_ssize_t lag,
            const double[::1] x, const double[:, ::1] eta,
            const unsigned char[:, ::1] up, const double[:, ::1] xi,
            const double[::1] delta,
            Py_ssize_t t0, Py_ssize_t cadence, double[:, :, ::1] snaps, double guard):
    cdef Py_ssize_t n = theta.shape[0]
    cdef Py_ssize_t m = src.shape[0]
    cdef Py_ssize_t rounds = x.shape[0]
    cdef Py_ssize_t depth = yhist.shape[0]
    cdef Py_ssize_t pos = hist[0]
    cdef Py_ssize_t count = hist[1]
    cdef Py_ssize_t r, i, k, row, taken = 0
    cdef double xt, y, d, a, g
    cdef double[::1] z = np.empty(n)
    cdef double[::1] acc = np.empty(n)

    for r in range(rounds):
        xt = x[r]
        pos = (pos + 1) % depth
        for i in range(n):
            y = alpha[i] * xt + beta[i] + eta[r, i]
            yhist[pos, i] = y
            z[i] = theta[i, 0] * y + theta[i, 1]
            acc[i] = 0.0
        if count < depth:
            count += 1
        for k in range(m):
            if up[r, k]:
                acc[dst[k]] += gam[k] * ((z[src[k]] + xi[r, k]) - z[dst[k]])
        if count == depth:
            d = delta[r]
            row = (pos - lag + depth) % depth
            for i in range(n):
                if frozen[i]:
                    continue
                a = theta[i, 0]
                theta[i, 0] = a + d * (acc[i] * yhist[row, i] + comp[i] * a)
                theta[i, 1] = theta[i, 1] + d * acc[i]
        for i in range(n):
            g = theta[i, 0] * alpha[i]
            if not fabs(g) <= guard:
                hist[0] = pos
                hist[1] = count
                return taken, t0 + r + 1, i
        if (t0 + r + 1) % cadence == 0:
            for i in range(n):
                snaps[taken, i, 0] = theta[i, 0]
                snaps[taken, i, 1] = theta[i, 1]
            taken += 1
    hist[0] = pos
    hist[1] = count
    return taken, -1, -1

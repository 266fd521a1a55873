# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics are defined by ``_kernels_py``; keep both in step."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def shear_factor(const double[::1] alpha, const double[::1] eta,
                 double s0, double tau, double nu):
    cdef Py_ssize_t nx = alpha.shape[0], ny = eta.shape[0], i, j
    cdef double a, a2, k0, tau2 = tau * tau, tau3 = tau * tau * tau / 3.0
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] o = out
    # the exponent is formed without temporaries; numpy's vectorized exp finishes it
    with nogil:
        for i in range(nx):
            a = alpha[i]
            a2 = a * a
            for j in range(ny):
                k0 = eta[j] - a * s0
                o[i, j] = -nu * (a2 * tau + k0 * k0 * tau - k0 * a * tau2 + a2 * tau3)
    np.exp(out, out=out)
    return out


def oracle_rk4(const double complex[:, ::1] coeffs, const double[::1] alpha,
               const double[::1] eta, double s0, double tau, double nu, long substeps):
    cdef Py_ssize_t nx = coeffs.shape[0], ny = coeffs.shape[1], i, j
    cdef long n
    cdef double h = tau / substeps, a, a2, k0, t, km, l1, l2, l3
    cdef double r1, r2, r3, r4, amp
    out = np.empty((nx, ny), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    with nogil:
        for i in range(nx):
            a = alpha[i]
            a2 = a * a
            for j in range(ny):
                k0 = eta[j] - a * s0
                amp = 1.0
                for n in range(substeps):
                    t = n * h
                    km = k0 - a * t
                    l1 = nu * (a2 + km * km)
                    km = k0 - a * (t + 0.5 * h)
                    l2 = nu * (a2 + km * km)
                    km = k0 - a * (t + h)
                    l3 = nu * (a2 + km * km)
                    r1 = -l1
                    r2 = -l2 * (1.0 + 0.5 * h * r1)
                    r3 = -l2 * (1.0 + 0.5 * h * r2)
                    r4 = -l3 * (1.0 + h * r3)
                    amp = amp * (1.0 + h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4))
                    if fabs(amp) < 1e-300:
                        amp = 0.0
                        break
                o[i, j] = coeffs[i, j] * amp
    return out


def packed_dot(const double complex[:, ::1] p, const double complex[:, ::1] q):
    cdef Py_ssize_t nx = p.shape[0], ny = p.shape[1], i, j
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                o[i, j] = p[i, j].real * q[i, j].real + p[i, j].imag * q[i, j].imag
    return out


def schur_sums(const double[:, ::1] kernel):
    cdef Py_ssize_t n = kernel.shape[0], m = kernel.shape[1], i, j
    cdef double acc, v
    rows = np.zeros(n, dtype=np.float64)
    cols = np.zeros(m, dtype=np.float64)
    cdef double[::1] r = rows
    cdef double *c = <double *> cnp.PyArray_DATA(cols)
    cdef const double *row
    with nogil:
        for i in range(n):
            row = &kernel[i, 0]
            acc = 0.0
            for j in range(m):
                v = row[j]
                acc = acc + v
                c[j] = c[j] + v
            r[i] = acc
    return rows, cols

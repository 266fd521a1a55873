"""Reference numpy implementations of the hot kernels.

These define the semantics; ``_kernels.pyx`` must agree with them to rounding.
"""
import numpy as np


def shear_factor(alpha, eta, s0, tau, nu):
    """exp(-nu * int_0^tau (a^2 + (k0 - a u)^2) du) with k0 = eta - a*s0, on the (alpha, eta) mesh."""
    a = np.asarray(alpha, dtype=np.float64)[:, None]
    k0 = np.asarray(eta, dtype=np.float64)[None, :] - a * s0
    a2 = a * a
    expo = a2 * tau + k0 * k0 * tau - k0 * a * tau**2 + a2 * tau**3 / 3.0
    return np.exp(-nu * expo)


def oracle_rk4(coeffs, alpha, eta, s0, tau, nu, substeps):
    """Classical RK4 on dW/du = -nu (a^2 + (k0 - a u)^2) W, one scalar ODE per mode."""
    a = np.asarray(alpha, dtype=np.float64)[:, None]
    k0 = np.asarray(eta, dtype=np.float64)[None, :] - a * s0
    a2 = a * a
    h = tau / substeps
    amp = np.ones(np.broadcast_shapes(a.shape, k0.shape))
    for n in range(int(substeps)):
        t = n * h
        l1 = nu * (a2 + (k0 - a * t) ** 2)
        l2 = nu * (a2 + (k0 - a * (t + 0.5 * h)) ** 2)
        l3 = nu * (a2 + (k0 - a * (t + h)) ** 2)
        r1 = -l1
        r2 = -l2 * (1.0 + 0.5 * h * r1)
        r3 = -l2 * (1.0 + 0.5 * h * r2)
        r4 = -l3 * (1.0 + h * r3)
        amp *= 1.0 + h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        amp[np.abs(amp) < 1e-300] = 0.0
    return np.asarray(coeffs, dtype=np.complex128) * amp


def packed_dot(p, q):
    return p.real * q.real + p.imag * q.imag


def schur_sums(kernel):
    k = np.asarray(kernel, dtype=np.float64)
    return k.sum(axis=1), k.sum(axis=0)

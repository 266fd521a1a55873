"""
Exact solution operator of the linearized problem around Couette flow.

In the sheared frame a nonzero x-mode obeys the scalar ODE

    dW/du = -nu * (alpha^2 + (k0 - alpha*u)^2) * W,   k0 = eta - alpha*s0,

which integrates in closed form; :func:`propagate` applies that factor and
:func:`propagate_oracle` integrates the ODE numerically as an independent check.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy import integrate, optimize

from . import kernels
from .functionals import snapshot, stream_function, wavenumbers
from .rates import RateFit, fit_decay
from .spectral import Frame, GridSpec, SpectralField, enforce_hermitian

__all__ = [
    "PropagatorSpec",
    "LinearEstimateReport",
    "ESTIMATE_IDS",
    "propagate",
    "propagate_oracle",
    "exact_factor",
    "biot_savart",
    "shift_frame",
    "reframe",
    "to_stationary",
    "linear_series",
    "linear_half_life",
    "evaluate_linear_estimates",
    "write_linear_reports",
]


@dataclass(frozen=True)
class PropagatorSpec:
    nu: float
    t_from: float
    t_to: float

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.t_from < 0 or self.t_to < self.t_from:
            raise ValueError(f"need 0 <= t_from <= t_to, got [{self.t_from}, {self.t_to}]")

    @property
    def tau(self) -> float:
        return self.t_to - self.t_from


def _require_mean_free(field: SpectralField, tol: float = 1e-14):
    scale = np.abs(field.coeffs).max()
    if scale and np.abs(field.coeffs[0]).max() > tol * scale:
        raise ValueError("field has x-mean (P_0) content; the propagator acts on nonzero modes only")


def exact_factor(grid: GridSpec, s0: float, tau: float, nu: float) -> np.ndarray:
    """Amplitude factor of every mode over [s0, s0 + tau] of shear time."""
    return kernels.shear_factor(grid.alpha, grid.eta, float(s0), float(tau), float(nu))


def propagate(field: SpectralField, spec: PropagatorSpec) -> SpectralField:
    """Apply S(t_to, t_from). The result is in the sheared frame, offset advanced by tau.

    A stationary input is read as the sheared frame at offset 0.
    """
    _require_mean_free(field)
    s0 = field.frame.offset
    f = exact_factor(field.grid, s0, spec.tau, spec.nu)
    return SpectralField(field.grid, field.coeffs * f, Frame.sheared(s0 + spec.tau))


def propagate_oracle(field: SpectralField, spec: PropagatorSpec, substeps: int) -> SpectralField:
    """Classical RK4 with ``substeps`` uniform steps on the per-mode ODE."""
    if int(substeps) < 1:
        raise ValueError("substeps must be >= 1")
    _require_mean_free(field)
    s0 = field.frame.offset
    g = field.grid
    c = np.ascontiguousarray(field.coeffs, dtype=np.complex128)
    out = kernels.oracle_rk4(c, g.alpha, g.eta, float(s0), float(spec.tau), float(spec.nu), int(substeps))
    return SpectralField(g, np.asarray(out), Frame.sheared(s0 + spec.tau))


def biot_savart(omega: SpectralField) -> tuple[SpectralField, SpectralField, SpectralField]:
    """(V1, V2, psi) with V = (d_y psi, -d_x psi), -Lap psi = omega, (0,0) mode gauged to zero.

    In a sheared frame the physical y-wavenumber eta - alpha*s is used, so the
    outputs are the velocity and stream function expressed in that frame.
    """
    g, s = omega.grid, omega.frame.offset
    a, ky, _ = wavenumbers(g, s)
    psi = stream_function(omega.coeffs, g, s)
    v1 = 1j * ky * psi
    v2 = -1j * a * psi
    return (
        omega.with_coeffs(v1),
        omega.with_coeffs(v2),
        omega.with_coeffs(psi),
    )


def _relabel(coeffs: np.ndarray, shift_units: int) -> tuple[np.ndarray, float]:
    """new(alpha, m) = old(alpha, m - alpha*shift_units) in centered eta-index m."""
    nx, ny = coeffs.shape
    cen = np.fft.fftshift(coeffs)
    alphas = np.arange(nx) - nx // 2
    out = np.zeros_like(cen)
    total = float(np.sum(np.abs(cen) ** 2))
    lost = 0.0
    for i, al in enumerate(alphas):
        d = int(al) * shift_units
        if d == 0:
            out[i] = cen[i]
            continue
        row = cen[i]
        if abs(d) >= ny:
            lost += float(np.sum(np.abs(row) ** 2))
            continue
        if d > 0:
            out[i, d:] = row[: ny - d]
            lost += float(np.sum(np.abs(row[ny - d:]) ** 2))
        else:
            out[i, : ny + d] = row[-d:]
            lost += float(np.sum(np.abs(row[:-d]) ** 2))
    frac = lost / total if total > 0 else 0.0
    return np.fft.ifftshift(out), frac


def shift_frame(field: SpectralField, delta: float, tol: float = 1e-9) -> tuple[SpectralField, float]:
    """Exact relabeling to offset s + delta, where delta is a multiple of pi/Ly.

    Returns the new field and the fraction of |coeff|^2 pushed off the grid.
    """
    g = field.grid
    units = delta / g.deta
    k = int(round(units))
    if abs(units - k) > tol:
        raise ValueError(f"shift {delta} is not a multiple of the eta spacing {g.deta}")
    new_s = field.frame.offset + delta
    if new_s < -tol:
        raise ValueError("frame offset would become negative")
    new_s = max(new_s, 0.0)
    coeffs, lost = _relabel(np.asarray(field.coeffs), k)
    frame = Frame.stationary() if (new_s == 0.0 and field.frame.kind == "stationary") else Frame.sheared(new_s)
    return SpectralField(g, enforce_hermitian(coeffs), frame), lost


def reframe(field: SpectralField, s_new: float) -> SpectralField:
    """Express the field in the frame with offset ``s_new``.

    Integer multiples of the eta spacing are relabeled exactly. Other shifts go
    through the y-profiles, W'(alpha, y) = W(alpha, y) exp(i alpha y (s_new - s)),
    which is accurate only for fields negligible near y = +-Ly.
    """
    g = field.grid
    delta = s_new - field.frame.offset
    units = delta / g.deta
    if abs(units - round(units)) <= 1e-9:
        out = shift_frame(field, delta)[0]
        return out if s_new > 0 else SpectralField(g, out.coeffs, Frame.stationary())
    prof = sfft.ifft(field.coeffs * g.y_phase[None, :], axis=1)
    prof *= np.exp(1j * g.alpha[:, None] * g.y[None, :] * delta)
    coeffs = sfft.fft(prof, axis=1) * g.y_phase[None, :]
    frame = Frame.sheared(s_new) if s_new > 0 else Frame.stationary()
    return SpectralField(g, enforce_hermitian(coeffs), frame)


def to_stationary(field: SpectralField) -> SpectralField:
    return reframe(field, 0.0)


# ---------------------------------------------------------------------------
# linear estimates
# ---------------------------------------------------------------------------
# id -> (series column, how it is reduced over time, scaling power of nu in the bound)
ESTIMATE_IDS = {
    "hlog_decay": ("nonzero_hlog", "weighted_sup", 0.0),
    "grad": ("grad_hlog", "l2t", -0.5),
    "dxL1": ("dx_hlog", "l1t", -0.5),
    "Linf": ("log_linf", "l2t", -0.5),
    "v2Linf": ("v2_linf", "l2t", 0.0),
    "v2half": ("v2_half", "l2t", 0.0),
    "dxv1": ("dxv1_hlog", "l2t", 0.0),
    "v1Linf": ("v1_linf", "sup", 0.0),
}


@dataclass(frozen=True)
class LinearEstimateReport:
    quantity: str
    value: float
    rhs_norm: float
    ratio: float
    nu: float
    fitted_c: float
    truncated: bool
    note: str = ""


def linear_series(omega_in: SpectralField, nu: float, times) -> dict[str, np.ndarray]:
    """Snapshot functionals of S(t, 0) omega_in at each time."""
    _require_mean_free(omega_in)
    g = omega_in.grid
    s0 = omega_in.frame.offset
    cols: dict[str, list] = {}
    for t in np.asarray(times, dtype=float):
        c = omega_in.coeffs * exact_factor(g, s0, t, nu)
        for k, v in snapshot(c, g, s0 + t).items():
            cols.setdefault(k, []).append(v)
    out = {k: np.asarray(v) for k, v in cols.items()}
    out["time"] = np.asarray(times, dtype=float)
    return out


def sampled_max(t: np.ndarray, y: np.ndarray) -> float:
    """Maximum of a sampled smooth series; an interior peak is refined by the parabola
    through the largest sample and its neighbours."""
    k = int(np.argmax(y))
    best = float(y[k])
    if 0 < k < y.size - 1:
        t0, t1, t2 = t[k - 1: k + 2]
        y0, y1, y2 = y[k - 1: k + 2]
        # divided differences of the interpolating parabola
        d1 = (y1 - y0) / (t1 - t0)
        d2 = ((y2 - y1) / (t2 - t1) - d1) / (t2 - t0)
        if d2 < 0:
            ts = 0.5 * (t0 + t1) - d1 / (2 * d2)
            if t0 <= ts <= t2:
                best = max(best, float(y0 + d1 * (ts - t0) + d2 * (ts - t0) * (ts - t1)))
    return best


def reduce_series(t: np.ndarray, y: np.ndarray, how: str, c: float = 0.0, nu: float = 0.0) -> float:
    """Time reductions used by the estimates and the bootstrap windows.

    Integrals use Simpson's rule. The weighted supremum of a (smooth) L2-type norm is
    refined at its peak; the plain supremum is applied to sup-in-space norms, whose
    time series have kinks, and stays the largest sample.
    """
    if how == "l2t":
        return float(np.sqrt(max(integrate.simpson(y**2, x=t), 0.0)))
    if how == "l1t":
        return float(integrate.simpson(y, x=t))
    if how == "sup":
        return float(np.max(y))
    if how == "weighted_sup":
        return sampled_max(t, np.exp(c * nu ** (1.0 / 3.0) * (t - t[0])) * y)
    raise ValueError(f"unknown reduction {how!r}")


def linear_half_life(omega_in: SpectralField, nu: float) -> float:
    """Time at which ||ln(e+|D_x|) omega_!=|| falls to half its initial value."""
    _require_mean_free(omega_in)
    g = omega_in.grid
    w2 = (np.log(np.e + np.abs(g.alpha)) ** 2)[:, None]
    c2 = np.abs(omega_in.coeffs) ** 2
    s0 = omega_in.frame.offset
    n0 = float(np.sum(w2 * c2))
    if n0 == 0:
        raise ValueError("zero field has no half-life")

    def gap(t):
        f = exact_factor(g, s0, t, nu)
        return float(np.sum(w2 * c2 * f * f)) - 0.25 * n0

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("no decay")
    return float(optimize.brentq(gap, 0.0, hi, xtol=1e-13, rtol=1e-14))


def evaluate_linear_estimates(omega_in: SpectralField, nu: float, t_max: float | None = None,
                              quadrature_points: int = 1025, c_fit: float | None = None,
                              window: tuple[float, float] = (1e-6, 1e-1),
                              series: dict | None = None) -> list[LinearEstimateReport]:
    """Empirical constants of the eight linear estimates for the data ``omega_in``.

    ``value`` is the raw left-hand side; ``ratio`` divides it by
    nu^p * ||omega_in||_Hlog with p = -1/2 for the viscous estimates and 0
    otherwise. The exponential rate of ``hlog_decay`` is fitted unless given.
    """
    if quadrature_points < 16:
        raise ValueError("quadrature_points must be >= 16")
    if not nu > 0:
        raise ValueError("nu must be positive")
    if t_max is None:
        t_max = 20.0 * nu ** (-1.0 / 3.0)
    times = np.linspace(0.0, t_max, int(quadrature_points))
    ser = series if series is not None else linear_series(omega_in, nu, times)
    t = ser["time"]
    rhs = float(ser["nonzero_hlog"][0])

    fit: RateFit | None = None
    if c_fit is None:
        fit = fit_decay(t, ser["nonzero_hlog"], nu, window)
        c_fit = fit.c_fit if math.isfinite(fit.c_fit) else 0.0

    truncated = False
    reports = []
    for qid, (col, how, p) in ESTIMATE_IDS.items():
        y = ser[col]
        peak = float(np.max(np.abs(y))) if y.size else 0.0
        if peak > 0 and how != "sup" and abs(y[-1]) > 1e-10 * peak:
            truncated = True
        value = reduce_series(t, y, how, c_fit, nu)
        scale = nu**p
        ratio = value / (scale * rhs) if rhs > 0 else 0.0
        note = ""
        if qid == "hlog_decay" and fit is not None and not fit.ok:
            note = f"fit {fit.status}" + (" (super-exponential)" if fit.super_exponential else "")
        reports.append(LinearEstimateReport(qid, value, rhs, ratio, nu, float(c_fit), False, note))
    if truncated:
        reports = [
            LinearEstimateReport(r.quantity, r.value, r.rhs_norm, r.ratio, r.nu, r.fitted_c, True,
                                 (r.note + "; " if r.note else "") + "tail above 1e-10 of peak")
            for r in reports
        ]
    return reports


def write_linear_reports(path, reports: list[LinearEstimateReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimate_id", "nu", "value", "rhs_norm", "ratio", "fitted_c", "truncation_flag"])
        for r in reports:
            w.writerow([r.quantity, repr(r.nu), repr(r.value), repr(r.rhs_norm), repr(r.ratio),
                        repr(r.fitted_c), int(r.truncated)])

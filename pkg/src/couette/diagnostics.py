"""Bootstrap functionals, run classification and nonlinear-term norms computed from trajectory records."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .functionals import stream_function
from .linear import LinearEstimateReport, reduce_series
from .rates import RateFit, crossing_time, fit_decay
from .solver import DiagnosticsRecord
from .spectral import GridSpec, _inverse_complex, log_weight

__all__ = [
    "BOOTSTRAP_IDS",
    "LINEAR_ANALOGUE",
    "BootstrapSnapshot",
    "Classification",
    "compute_bootstrap",
    "bootstrap_history",
    "budgets_from_linear",
    "classify_run",
    "nonlinear_term_norms",
    "inviscid_damping_integrals",
    "run_summary",
    "fit_decay",
    "RateFit",
]

# bootstrap id -> (record column, time reduction, power of nu multiplying the reference norm)
_SPEC = {
    "B1_v0": ("v0_l2", "point", 0.0),
    "B2_hlog_decay": ("nonzero_hlog", "weighted_sup", 0.0),
    "B2_grad": ("grad_hlog", "l2t", -0.5),
    "B2_dxL1": ("dx_hlog", "l1t", -0.5),
    "B2_Linf": ("log_linf", "l2t", -0.5),
    "B3_v2Linf": ("v2_linf", "l2t", 0.0),
    "B3_v2half": ("v2_half", "l2t", 0.0),
    "B3_dxv1": ("dxv1_hlog", "l2t", 0.0),
    "B4_v1Linf": ("v1_linf", "sup", 0.0),
}
BOOTSTRAP_IDS = tuple(_SPEC)

LINEAR_ANALOGUE = {
    "B2_hlog_decay": "hlog_decay",
    "B2_grad": "grad",
    "B2_dxL1": "dxL1",
    "B2_Linf": "Linf",
    "B3_v2Linf": "v2Linf",
    "B3_v2half": "v2half",
    "B3_dxv1": "dxv1",
    "B4_v1Linf": "v1Linf",
}


@dataclass
class BootstrapSnapshot:
    tau: float
    T: float
    quantities: dict
    reference_norm: float
    insufficient_cadence: bool = False
    running: dict = field(default_factory=dict, repr=False)


def _running(t: np.ndarray, y: np.ndarray, how: str, c: float, nu: float) -> np.ndarray:
    """Value of the reduction over [t[0], t[k]] for every k (trapezoid; used only to locate crossings)."""
    if how == "l2t":
        return np.sqrt(np.concatenate([[0.0], integrate.cumulative_trapezoid(y**2, x=t)]))
    if how == "l1t":
        return np.concatenate([[0.0], integrate.cumulative_trapezoid(y, x=t)])
    if how == "sup":
        return np.maximum.accumulate(y)
    if how == "weighted_sup":
        return np.maximum.accumulate(np.exp(c * nu ** (1.0 / 3.0) * (t - t[0])) * y)
    if how == "point":
        return np.maximum.accumulate(y)
    raise ValueError(how)


def compute_bootstrap(record: DiagnosticsRecord, tau: float, T: float | None = None, c1: float = 0.0,
                      nu: float | None = None, data_size: float | None = None) -> BootstrapSnapshot:
    """The nine bootstrap ratios over the window [tau, T].

    Each left-hand side is divided by ||ln(e+|D_x|) omega_!=(tau)||_L2 (times
    nu^(-1/2) for the viscous ones); B1 is ||V_0^1(tau)||_{L^2_y} over the data
    size epsilon0 * nu**beta. Window integrals use Simpson's rule on the
    recorded samples, and ``tau`` snaps to the nearest recorded time.
    """
    nu = record.nu if nu is None else nu
    data_size = record.data_size if data_size is None else data_size
    t_all = record.times
    T = float(t_all[-1]) if T is None else T
    if tau >= T:
        raise ValueError(f"window start {tau} must precede its end {T}")
    if tau < t_all[0] - 1e-12 or T > t_all[-1] + 1e-9:
        raise ValueError("window outside the recorded horizon")
    i0 = int(np.argmin(np.abs(t_all - tau)))
    i1 = int(np.argmin(np.abs(t_all - T)))
    t = t_all[i0: i1 + 1]
    ref = float(record.array("nonzero_hlog")[i0])
    scale = nu ** (-1.0 / 3.0) if nu > 0 else math.inf
    spacing = np.max(np.diff(t)) if t.size > 1 else math.inf
    insufficient = bool(t.size < 3 or spacing > scale / 8.0)

    q, running = {}, {}
    for bid, (col, how, p) in _SPEC.items():
        y = record.array(col)[i0: i1 + 1]
        if bid == "B1_v0":
            denom = data_size if data_size and data_size > 0 else 0.0
            val = float(y[0])
        else:
            denom = ref * nu**p if ref > 0 else 0.0
            val = reduce_series(t, y, how, c1, nu) if t.size >= 2 else float(y[0])
        if denom > 0:
            q[bid] = val / denom
            running[bid] = (t, _running(t, y, how, c1, nu) / denom)
        else:
            q[bid] = 0.0
            running[bid] = (t, np.zeros_like(t))
    return BootstrapSnapshot(float(t[0]), float(t[-1]), q, ref, insufficient, running)


def window_starts(times: np.ndarray, n_windows: int = 16, fraction: float = 0.5) -> np.ndarray:
    """tau = 0 plus a geometric grid up to ``fraction`` of the horizon, snapped to recorded times."""
    t = np.asarray(times)
    if t.size < 3:
        return t[:1]
    T = t[-1]
    first = max(t[1], 1e-3 * T)
    geo = np.geomspace(first, fraction * T, max(n_windows - 1, 1))
    idx = np.unique(np.concatenate([[0], np.searchsorted(t, geo)]))
    idx = idx[idx < t.size - 2]
    return t[idx]


def bootstrap_history(record: DiagnosticsRecord, n_windows: int = 16, c1: float = 0.0,
                      fraction: float = 0.5) -> list[BootstrapSnapshot]:
    T = float(record.times[-1])
    return [compute_bootstrap(record, tau, T, c1) for tau in window_starts(record.times, n_windows, fraction)]


def budgets_from_linear(reports: list[LinearEstimateReport], factor: float = 8.0) -> dict:
    """Budget per bootstrap id: ``factor`` times the empirical linear constant (1 for B1)."""
    by_id = {r.quantity: r.ratio for r in reports}
    out = {"B1_v0": factor * 1.0}
    for bid, lid in LINEAR_ANALOGUE.items():
        out[bid] = factor * by_id[lid]
    return out


@dataclass(frozen=True)
class Classification:
    kind: str  # "stable" | "budget_exceeded" | "transitioned"
    bootstrap_id: str | None = None
    time: float | None = None
    max_ratios: dict = field(default_factory=dict)

    def label(self) -> str:
        if self.kind == "budget_exceeded":
            return f"budget_exceeded({self.bootstrap_id}, {self.time:.6g})"
        return self.kind


def classify_run(history: list[BootstrapSnapshot], budgets: dict, record: DiagnosticsRecord | None = None,
                 nu: float | None = None, horizon_factor: float = 10.0) -> Classification:
    """stable / budget_exceeded(id, time) / transitioned.

    A run counts as transitioned when ||ln(e+|D_x|) omega_!=|| has not fallen to
    half its initial value by min(horizon_factor * nu^(-1/3), end of record).
    Zero data is stable.
    """
    if not history:
        raise ValueError("empty bootstrap history")
    maxima = {bid: max(s.quantities.get(bid, 0.0) for s in history) for bid in BOOTSTRAP_IDS}
    if record is not None:
        nu = record.nu if nu is None else nu
        t = record.times
        v = record.array("nonzero_hlog")
        if v[0] > 0:
            t_check = min(horizon_factor * nu ** (-1.0 / 3.0), float(t[-1]))
            half = crossing_time(t, v, 0.5 * v[0])
            if math.isnan(half) or half > t_check:
                return Classification("transitioned", None, t_check, maxima)
    first = None
    for snap in history:
        for bid, budget in budgets.items():
            tt, run = snap.running.get(bid, (None, None))
            if tt is None:
                if snap.quantities.get(bid, 0.0) > budget:
                    cand = (snap.tau, bid)
                else:
                    continue
            else:
                over = np.nonzero(run > budget)[0]
                if over.size == 0:
                    continue
                cand = (float(tt[over[0]]), bid)
            if first is None or cand[0] < first[0]:
                first = cand
    if first is not None:
        return Classification("budget_exceeded", first[1], first[0], maxima)
    return Classification("stable", None, None, maxima)


# ---------------------------------------------------------------------------
# nonlinear terms
# ---------------------------------------------------------------------------
def _dealiased_product(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> np.ndarray:
    c = sfft.fft2(a * b) / (grid.Nx * grid.Ny) * grid.y_phase[None, :]
    return c * grid.dealias_mask


def nonlinear_terms(coeffs: np.ndarray, v0_hat: np.ndarray, grid: GridSpec, s: float) -> dict:
    """Coefficients of N1 = (V_!=.grad omega_!=)_!=, N2 = V_0^1 d_x omega_!=, N3 = V^2_!= d_y omega_0."""
    a = grid.alpha[:, None]
    ky = grid.eta[None, :] - a * s
    wn = coeffs.copy()
    wn[0] = 0.0
    w0 = np.zeros_like(coeffs)
    w0[0] = coeffs[0]
    psi = stream_function(wn, grid, s)
    v1 = _inverse_complex(1j * ky * psi, grid).real
    v2 = _inverse_complex(-1j * a * psi, grid).real
    dxw = _inverse_complex(1j * a * wn, grid).real
    dyw = _inverse_complex(1j * ky * wn, grid).real
    dyw0 = _inverse_complex(1j * ky * w0, grid).real
    v0 = np.zeros_like(coeffs)
    v0[0] = v0_hat
    v0_vals = _inverse_complex(v0, grid).real
    n1 = _dealiased_product(v1, dxw, grid) + _dealiased_product(v2, dyw, grid)
    n1[0] = 0.0
    n2 = _dealiased_product(v0_vals, dxw, grid)
    n3 = _dealiased_product(v2, dyw0, grid)
    return {"N1": n1, "N2": n2, "N3": n3}


def nonlinear_term_norms(record: DiagnosticsRecord, window: tuple[float, float] | None = None) -> dict:
    """L^1-in-time of ||ln(e+|D_x|) N_k||_L2 over ``window`` from the stored field snapshots."""
    if not record.fields:
        raise ValueError("record has no stored field snapshots (run with store_fields=True)")
    grid = record.grid
    if grid is None:
        raise ValueError("record carries no grid")
    lo, hi = window if window is not None else (record.fields[0][0], record.fields[-1][0])
    w = log_weight(grid.alpha)[:, None]
    times, series = [], {k: [] for k in ("N1", "N2", "N3")}
    for t, s, coeffs, v0h in record.fields:
        if t < lo - 1e-12 or t > hi + 1e-12:
            continue
        terms = nonlinear_terms(coeffs, v0h, grid, s)
        times.append(t)
        for k, c in terms.items():
            series[k].append(math.sqrt(grid.area * float(np.sum((w * np.abs(c)) ** 2))))
    if len(times) < 2:
        raise ValueError("window contains fewer than two snapshots")
    t = np.asarray(times)
    return {k: float(integrate.simpson(np.asarray(v), x=t)) for k, v in series.items()}


INVISCID_COLUMNS = {"v2_linf": "v2_linf", "v2_half": "v2_half_plain", "dxv1": "dxv1_l2"}


def inviscid_damping_integrals(record: DiagnosticsRecord, window: tuple[float, float] | None = None) -> dict:
    """Time integrals of ||V^2_!=||_Linf^2, || |D_x|^(1/2) V^2_!= ||_{L2x Linfy}^2 and
    ||d_x V^1_!=||_L2^2 over ``window``, divided by ||omega_!=(0)||_Hlog^2."""
    t = record.times
    lo, hi = window if window is not None else (t[0], t[-1])
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 2:
        raise ValueError("window contains fewer than two samples")
    ref = float(record.array("nonzero_hlog")[0]) ** 2
    out = {}
    for key, col in INVISCID_COLUMNS.items():
        y = record.array(col)[sel]
        val = float(integrate.simpson(y**2, x=t[sel]))
        out[key] = val / ref if ref > 0 else 0.0
    return out


def run_summary(record: DiagnosticsRecord, fit: RateFit, classification: Classification, extra=None) -> dict:
    out = {
        "nu": record.nu,
        "data_size": record.data_size,
        "horizon": float(record.times[-1]),
        "samples": len(record),
        "fit": asdict(fit),
        "classification": classification.label(),
        "max_ratios": classification.max_ratios,
        "events": record.events,
    }
    if extra:
        out.update(extra)
    return json.loads(json.dumps(out, default=float))

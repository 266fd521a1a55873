import json
import math
from dataclasses import replace

import numpy as np
import pytest

from couette.diagnostics import (
    BOOTSTRAP_IDS,
    LINEAR_ANALOGUE,
    bootstrap_history,
    budgets_from_linear,
    classify_run,
    compute_bootstrap,
    fit_decay,
    inviscid_damping_integrals,
    nonlinear_term_norms,
    nonlinear_terms,
    run_summary,
    window_starts,
)
from couette.linear import evaluate_linear_estimates, linear_half_life
from couette.solver import (
    RECORD_COLUMNS,
    DiagnosticsRecord,
    InitialConditionSpec,
    SimConfig,
    TrajectoryState,
    initial_state,
    run,
)
from couette.spectral import Frame, SpectralField, make_grid

NU = 1e-2
Q = 129
T_MAX = 20 * NU ** (-1 / 3)


def linear_config(**kw):
    ic = InitialConditionSpec(band=((1, 3), (0, 2)), target_hlog_norm=1.0)
    base = dict(nu=NU, grid=make_grid(32, 32, math.pi), dt=T_MAX / (Q - 1) / 4, t_final=T_MAX, seed=5, ic=ic,
                nonlinear=False, record_interval=T_MAX / (Q - 1), boundary_mass_limit=None)
    base.update(kw)
    return SimConfig(**base)


@pytest.fixture(scope="module")
def linear_run():
    cfg = linear_config()
    rec = run(cfg).record
    reps = evaluate_linear_estimates(initial_state(cfg).omega, NU, t_max=T_MAX, quadrature_points=Q)
    return cfg, rec, reps


def synthetic_record(t, nu=1e-3, data_size=1.0, **cols):
    rec = DiagnosticsRecord(nu, data_size)
    n = len(t)
    for k in RECORD_COLUMNS:
        rec.columns[k] = list(np.zeros(n))
    rec.columns["time"] = list(t)
    rec.columns["nonzero_hlog"] = list(np.ones(n))
    for k, v in cols.items():
        rec.columns[k] = list(v)
    return rec


class TestBootstrap:
    def test_zero_trajectory(self):
        g = make_grid(16, 16, math.pi)
        cfg = SimConfig(nu=1e-2, grid=g, dt=0.1, t_final=5.0, boundary_mass_limit=None)
        st = TrajectoryState(0.0, SpectralField(g, np.zeros(g.shape, complex), Frame.sheared(0.0)),
                             np.zeros(16), 0, {}, 0.1, 0.0)
        rec = run(cfg, state=st).record
        snap = compute_bootstrap(rec, 0.0, 5.0)
        assert all(v == 0.0 for v in snap.quantities.values())
        hist = bootstrap_history(rec)
        assert classify_run(hist, {b: 1.0 for b in BOOTSTRAP_IDS}, rec).kind == "stable"

    def test_matches_linear_estimates(self, linear_run):
        _, rec, reps = linear_run
        by = {r.quantity: r for r in reps}
        snap = compute_bootstrap(rec, 0.0, T_MAX, c1=by["hlog_decay"].fitted_c)
        assert set(snap.quantities) == set(BOOTSTRAP_IDS)
        for bid, lid in LINEAR_ANALOGUE.items():
            assert snap.quantities[bid] == pytest.approx(by[lid].ratio, rel=1e-6), bid
        assert all(v >= 0 for v in snap.quantities.values())
        assert snap.reference_norm == pytest.approx(1.0, rel=1e-12)

    def test_errors_and_cadence_flag(self, linear_run):
        _, rec, _ = linear_run
        with pytest.raises(ValueError):
            compute_bootstrap(rec, 10.0, 10.0)
        with pytest.raises(ValueError):
            compute_bootstrap(rec, 0.0, 2 * T_MAX)
        # 129 samples over 20 nu^(-1/3) is below 8 per nu^(-1/3)
        assert compute_bootstrap(rec, 0.0, T_MAX).insufficient_cadence
        t = np.linspace(0, 100, 5)
        coarse = synthetic_record(t, nu=1e-3)
        assert compute_bootstrap(coarse, 0.0, 100.0).insufficient_cadence

    def test_cadence_doubling(self):
        # ~50 samples per nu^(-1/3); the sup of a sup-in-space norm has kinks and
        # converges more slowly than the integrals
        cfg = linear_config(record_interval=T_MAX / 1024, dt=T_MAX / 2048)
        fine = run(cfg).record
        coarse = DiagnosticsRecord(fine.nu, fine.data_size)
        coarse.columns = {k: v[::2] for k, v in fine.columns.items()}
        assert not compute_bootstrap(fine, 0.0, T_MAX).insufficient_cadence
        a = compute_bootstrap(fine, 0.0, T_MAX, c1=0.5).quantities
        b = compute_bootstrap(coarse, 0.0, T_MAX, c1=0.5).quantities
        for k in BOOTSTRAP_IDS:
            if a[k] > 0:
                assert b[k] == pytest.approx(a[k], rel=1e-3), k

    def test_scale_invariance(self, linear_run):
        cfg, rec, _ = linear_run
        big = run(replace(cfg, ic=replace(cfg.ic, target_hlog_norm=1e3))).record
        a = compute_bootstrap(rec, 0.0, T_MAX, c1=0.5).quantities
        b = compute_bootstrap(big, 0.0, T_MAX, c1=0.5).quantities
        for k in BOOTSTRAP_IDS:
            if k != "B1_v0":
                assert b[k] == pytest.approx(a[k], rel=1e-10), k

    def test_window_starts(self):
        t = np.linspace(0, 100, 1001)
        w = window_starts(t, 16)
        assert w[0] == 0 and w[-1] <= 50 + 1e-9 and np.all(np.diff(w) > 0)
        assert set(w) <= set(t)
        assert len(window_starts(t[:2])) == 1


class TestFitDecay:
    def test_exact_exponential(self):
        nu = 1e-3
        t = np.linspace(0, 400, 2001)
        fit = fit_decay(t, np.exp(-0.5 * nu ** (1 / 3) * t), nu)
        assert fit.ok and fit.c_fit == pytest.approx(0.5, abs=1e-6)
        assert fit.half_life == pytest.approx(math.log(2) / (0.5 * nu ** (1 / 3)), rel=1e-6)
        assert not fit.super_exponential

    def test_single_mode_cubic_regime(self):
        nu = 1e-3
        t = np.linspace(0, 60, 6001)
        v = np.exp(-nu * (t + t**3 / 3))  # alpha = 1, eta = 0 in the sheared frame
        fit = fit_decay(t, v, nu)
        assert fit.half_life == pytest.approx(12.6855, abs=1e-3)
        assert fit.half_life == pytest.approx((3 * math.log(2) / nu) ** (1 / 3), rel=0.01)
        assert fit.status == "refused" and fit.super_exponential

    def test_no_decay(self):
        fit = fit_decay(np.arange(10.0), np.ones(10), 1e-3)
        assert fit.status == "no-decay" and math.isnan(fit.c_fit)

    def test_insufficient(self):
        t = np.linspace(0, 1, 50)
        assert fit_decay(t, np.exp(-t), 1e-3).status == "insufficient"

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_decay([0.0], [1.0], 1e-3)
        with pytest.raises(ValueError):
            fit_decay([0.0, 1.0], [1.0, 0.5], 0.0)


class TestClassify:
    def test_linear_with_double_budgets(self, linear_run):
        cfg, _, reps = linear_run
        # horizon of two half-lives, as in the sweeps; later windows start where the
        # super-exponential decay is far below the sampling resolution
        horizon = 2 * linear_half_life(initial_state(cfg).omega, NU)
        rec = run(replace(cfg, t_final=horizon, record_interval=horizon / 256, dt=horizon / 1024)).record
        c1 = {r.quantity: r for r in reps}["hlog_decay"].fitted_c
        hist = bootstrap_history(rec, c1=c1)
        cls = classify_run(hist, budgets_from_linear(reps, factor=2.0), rec)
        assert cls.kind == "stable" and cls.label() == "stable"

    def test_ramp_violation(self):
        t = np.linspace(0, 10, 201)
        ramp = np.where(t < 4.0, 0.1, 0.1 + (t - 4.0))
        rec = synthetic_record(t, nu=1e-2, v1_linf=ramp)
        budgets = {b: 1e9 for b in BOOTSTRAP_IDS}
        budgets["B4_v1Linf"] = 1.0
        cls = classify_run(bootstrap_history(rec), budgets)
        assert cls.kind == "budget_exceeded" and cls.bootstrap_id == "B4_v1Linf"
        assert cls.time == pytest.approx(4.9, abs=0.06)
        assert cls.label().startswith("budget_exceeded(B4_v1Linf")

    def test_transitioned(self):
        t = np.linspace(0, 100, 201)
        rec = synthetic_record(t, nu=1e-3, nonzero_hlog=np.ones_like(t))
        cls = classify_run(bootstrap_history(rec), {b: 1e9 for b in BOOTSTRAP_IDS}, rec)
        assert cls.kind == "transitioned"

    def test_empty_history(self):
        with pytest.raises(ValueError):
            classify_run([], {})

    def test_budgets_from_linear(self, linear_run):
        _, _, reps = linear_run
        b = budgets_from_linear(reps)
        assert b["B1_v0"] == 8.0 and set(b) == set(BOOTSTRAP_IDS)
        assert b["B2_grad"] == 8.0 * {r.quantity: r.ratio for r in reps}["grad"]


class TestNonlinearTerms:
    def _record(self, amp, nu=1e-2, **kw):
        g = make_grid(32, 32, math.pi)
        ic = InitialConditionSpec(band=((1, 3), (0, 2)), target_hlog_norm=amp, zero_mode_amplitude=amp / 40)
        cfg = SimConfig(nu=nu, grid=g, dt=0.05, t_final=2.0, seed=2, ic=ic, store_fields=True,
                        record_interval=0.25, boundary_mass_limit=None, **kw)
        return run(cfg).record

    def test_zero_nonzero_mode(self):
        g = make_grid(16, 16, math.pi)
        c = np.zeros(g.shape, complex)
        c[0, 1], c[0, -1] = -0.5j, 0.5j
        terms = nonlinear_terms(c, np.fft.fft(np.cos(g.y)) / g.Ny, g, 0.0)
        assert all(np.abs(v).max() == 0 for v in terms.values())

    def test_y_independent_zero_mode(self):
        g = make_grid(16, 16, math.pi)
        rng = np.random.default_rng(0)
        c = np.zeros(g.shape, complex)
        c[1, 2] = rng.standard_normal() + 1j
        c[-1, -2] = np.conj(c[1, 2])
        c[0, 0] = 0.7
        assert np.abs(nonlinear_terms(c, np.zeros(16), g, 0.3)["N3"]).max() == 0

    def test_quadratic_scaling(self):
        a = nonlinear_term_norms(self._record(1e-4))
        b = nonlinear_term_norms(self._record(5e-5))
        for k in ("N1", "N2", "N3"):
            assert a[k] / b[k] == pytest.approx(4.0, rel=0.1), k

    def test_requires_fields(self, linear_run):
        with pytest.raises(ValueError):
            nonlinear_term_norms(linear_run[1])


class TestInviscidIntegrals:
    def test_scale_invariant_and_positive(self, linear_run):
        cfg, rec, _ = linear_run
        big = run(replace(cfg, ic=replace(cfg.ic, target_hlog_norm=7.0))).record
        a, b = inviscid_damping_integrals(rec), inviscid_damping_integrals(big)
        assert set(a) == {"v2_linf", "v2_half", "dxv1"}
        for k in a:
            assert a[k] > 0 and b[k] == pytest.approx(a[k], rel=1e-10)

    def test_window_too_short(self, linear_run):
        with pytest.raises(ValueError):
            inviscid_damping_integrals(linear_run[1], window=(1.0, 1.0))


class TestSummary:
    def test_json_roundtrip(self, linear_run):
        _, rec, reps = linear_run
        fit = fit_decay(rec.times, rec.array("nonzero_hlog"), NU)
        cls = classify_run(bootstrap_history(rec), budgets_from_linear(reps), rec)
        out = run_summary(rec, fit, cls, {"seed": 5})
        assert json.loads(json.dumps(out)) == out
        assert out["classification"] == "stable" and out["seed"] == 5 and out["samples"] == Q

import math
from dataclasses import replace

import numpy as np
import pytest

from couette.diagnostics import LINEAR_ANALOGUE, compute_bootstrap
from couette.linear import PropagatorSpec, evaluate_linear_estimates, propagate
from couette.solver import (
    InitialConditionSpec,
    SimConfig,
    SimulationError,
    TrajectoryState,
    enstrophy_residual,
    generate_initial_condition,
    initial_state,
    load_checkpoint,
    remap,
    run,
    save_checkpoint,
    step,
)
from couette.spectral import Frame, SpectralField, compute_norms, hermitian_defect, hlog_norm, make_grid

from conftest import random_field


def small_config(**kw):
    base = dict(nu=1e-2, grid=make_grid(32, 32, math.pi), dt=0.05, t_final=1.0, seed=3,
                ic=InitialConditionSpec(band=((1, 3), (0, 2)), target_hlog_norm=0.05))
    base.update(kw)
    return SimConfig(**base)


def state_from(coeffs, grid, v0=None, s=0.0):
    v0 = np.zeros(grid.Ny) if v0 is None else v0
    return TrajectoryState(0.0, SpectralField(grid, coeffs, Frame.sheared(s)), v0, 0, {}, 0.05, 0.0)


class TestConfig:
    @pytest.mark.parametrize("nu", [0.0, 1.0, -1e-3])
    def test_nu_range(self, nu):
        with pytest.raises(ValueError):
            small_config(nu=nu)

    def test_inviscid_only_for_self_tests(self):
        assert small_config(nu=0.0, allow_inviscid=True).nu == 0.0

    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"epsilon0": 0.0}, {"beta": -1.0}, {"remap_interval": -1.0},
                                    {"cfl_action": "ignore"}, {"t_final": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            small_config(**kw)

    def test_hash_stable_and_sensitive(self):
        assert small_config().hash() == small_config().hash()
        assert small_config().hash() != small_config(seed=4).hash()


class TestInitialCondition:
    def test_single_mode_support(self):
        g = make_grid(16, 16, math.pi)
        spec = InitialConditionSpec(kind="single_mode", mode=(1, 1.0), target_hlog_norm=1.0)
        om, v0 = generate_initial_condition(spec, g, 0)
        nz = np.argwhere(np.abs(om.coeffs) > 0)
        assert {(int(g.alpha[i]), float(g.eta[j])) for i, j in nz} == {(1, 1.0), (-1, -1.0)}
        assert hlog_norm(om) == pytest.approx(1.0, rel=1e-14)
        assert np.all(v0 == 0)

    def test_deterministic(self):
        g = make_grid(32, 32, 2 * math.pi)
        spec = InitialConditionSpec(zero_mode_amplitude=1e-3, target_hlog_norm=0.1)
        a = generate_initial_condition(spec, g, 11)
        b = generate_initial_condition(spec, g, 11)
        np.testing.assert_array_equal(a[0].coeffs, b[0].coeffs)
        np.testing.assert_array_equal(a[1], b[1])

    def test_same_field_on_refined_grid(self):
        from couette.spectral import refine
        spec = InitialConditionSpec(target_hlog_norm=0.2)
        coarse, _ = generate_initial_condition(spec, make_grid(64, 64, 2 * math.pi), 4)
        fine, _ = generate_initial_condition(spec, make_grid(128, 128, 2 * math.pi), 4)
        up = refine(coarse, 2)
        assert np.linalg.norm(up.coeffs - fine.coeffs) <= 1e-8 * np.linalg.norm(fine.coeffs)

    def test_many_modes_exact_norm(self):
        g = make_grid(192, 192, 2 * math.pi)
        spec = InitialConditionSpec(band=((1, 60), (0, 30)), target_hlog_norm=0.37)
        om, _ = generate_initial_condition(spec, g, 2)
        assert np.count_nonzero(np.abs(om.coeffs) > 0) >= 10_000
        assert hlog_norm(om) == pytest.approx(0.37, rel=1e-12)

    def test_real_and_mean_free(self):
        g = make_grid(32, 32, 2 * math.pi)
        om, _ = generate_initial_condition(InitialConditionSpec(), g, 0, nu=1e-3)
        assert hermitian_defect(om) == 0.0
        assert om.coeffs[0, 0] == 0
        assert hlog_norm(om) == pytest.approx(0.1 * 1e-3**0.5, rel=1e-12)

    def test_l2_target(self):
        g = make_grid(32, 32, 2 * math.pi)
        om, _ = generate_initial_condition(InitialConditionSpec(target_norm="l2", target_hlog_norm=2.0), g, 0)
        assert compute_norms(om).l2 == pytest.approx(2.0, rel=1e-12)

    def test_zero_mode_amplitude(self):
        g = make_grid(32, 64, 2 * math.pi)
        _, v0 = generate_initial_condition(InitialConditionSpec(zero_mode_amplitude=0.01, target_hlog_norm=1.0), g, 0)
        assert math.sqrt(np.sum(v0**2) * 2 * g.Ly / g.Ny) == pytest.approx(0.01, rel=1e-6)

    @pytest.mark.parametrize("spec", [
        InitialConditionSpec(band=((40, 50), (0, 1))),
        InitialConditionSpec(target_hlog_norm=0.0),
        InitialConditionSpec(kind="single_mode", mode=(0, 1.0)),
        InitialConditionSpec(kind="from_checkpoint"),
    ])
    def test_errors(self, spec):
        with pytest.raises(ValueError):
            generate_initial_condition(spec, make_grid(16, 16, math.pi), 0)


class TestStep:
    def test_zero_stays_zero(self):
        cfg = small_config()
        g = cfg.grid
        st = state_from(np.zeros(g.shape, complex), g)
        for _ in range(5):
            st = step(st, cfg)
        assert np.abs(st.omega.coeffs).max() == 0 and np.abs(st.v0).max() == 0

    def test_zero_mode_heat_flow(self):
        cfg = small_config(nu=0.02)
        g = cfg.grid
        v0 = np.cos(g.y)  # eta = 1 y-mode
        c = np.zeros(g.shape, complex)
        c[0, 1], c[0, -1] = -0.5j, 0.5j  # omega_0 = -d_y cos(y) = sin(y)
        st = state_from(c, g, v0)
        st1 = step(st, cfg)
        assert np.abs(st1.omega.coeffs[0, 1]) / np.abs(c[0, 1]) == pytest.approx(math.exp(-0.02 * 0.05), rel=1e-13)
        np.testing.assert_allclose(st1.v0, v0 * math.exp(-0.02 * 0.05), atol=1e-14)

    def test_invariants_along_trajectory(self):
        cfg = small_config(ic=InitialConditionSpec(target_hlog_norm=0.5, zero_mode_amplitude=0.05))
        st = initial_state(cfg)
        prev = None
        for _ in range(20):
            st = step(st, cfg)
            g = cfg.grid
            assert hermitian_defect(st.omega) <= 1e-13 * np.abs(st.omega.coeffs).max()
            assert st.omega.coeffs[0, 0] == 0
            from couette.linear import biot_savart
            v1, v2, _ = biot_savart(st.omega)
            ky = g.physical_eta(st.offset)
            div = 1j * g.alpha[:, None] * v1.coeffs + 1j * ky * v2.coeffs
            assert np.abs(div).max() <= 1e-13
            assert st.offset == pytest.approx(st.time - st.remapped, abs=1e-12)
            if prev is not None:
                assert all(st.cumulative_integrals[k] >= prev[k] for k in prev)
            prev = dict(st.cumulative_integrals)

    def test_nan_aborts(self):
        cfg = small_config()
        g = cfg.grid
        c = random_field(g, np.random.default_rng(0), mean_free=True).coeffs.copy()
        c[1, 1] = np.nan
        with pytest.raises(SimulationError):
            step(state_from(c, g), cfg)

    def test_time_order_four(self):
        g = make_grid(32, 32, math.pi)
        ic = InitialConditionSpec(band=((1, 2), (0, 2)), target_hlog_norm=3.0, zero_mode_amplitude=0.3)
        base = SimConfig(nu=1e-2, grid=g, t_final=2.0, seed=1, ic=ic, cfl_max=10.0, boundary_mass_limit=None)

        def final(dt):
            return np.asarray(run(replace(base, dt=dt)).state.omega.coeffs)

        ref = final(0.1 / 8)
        e1 = np.linalg.norm(final(0.1) - ref)
        e2 = np.linalg.norm(final(0.05) - ref)
        assert e1 / e2 == pytest.approx(16.0, rel=0.25)


class TestInviscidConservation:
    def test_l2_conserved_without_viscosity(self):
        g = make_grid(32, 32, math.pi)
        cfg = SimConfig(nu=0.0, allow_inviscid=True, grid=g, dt=0.01, t_final=10.0, seed=0,
                        ic=InitialConditionSpec(band=((1, 3), (0, 2)), target_hlog_norm=1e-3),
                        boundary_mass_limit=None)
        rec = run(cfg).record
        l2 = rec.array("l2")
        assert len(rec.step_time) == 1001
        assert np.abs(l2 / l2[0] - 1).max() <= 1e-10


class TestLinearisation:
    def test_small_amplitude_matches_propagator(self):
        nu = 1e-3
        g = make_grid(64, 64, 2 * math.pi)
        cfg = SimConfig(nu=nu, grid=g, dt=0.05, t_final=nu ** (-1 / 3), seed=0,
                        ic=InitialConditionSpec(target_hlog_norm=1e-8))
        res = run(cfg)
        om0 = initial_state(cfg).omega
        exact = propagate(om0, PropagatorSpec(nu, 0.0, res.state.time))
        err = np.linalg.norm(res.state.omega.coeffs - exact.coeffs) / np.linalg.norm(exact.coeffs)
        assert err <= 1e-4

    def test_linear_run_matches_estimates(self):
        nu = 1e-2
        g = make_grid(32, 32, math.pi)
        q = 129
        t_max = 20 * nu ** (-1 / 3)
        ic = InitialConditionSpec(band=((1, 3), (0, 2)), target_hlog_norm=1.0)
        cfg = SimConfig(nu=nu, grid=g, dt=t_max / (q - 1) / 4, t_final=t_max, seed=5, ic=ic, nonlinear=False,
                        record_interval=t_max / (q - 1), boundary_mass_limit=None)
        rec = run(cfg).record
        assert len(rec) == q
        om0 = initial_state(cfg).omega
        reps = {r.quantity: r for r in evaluate_linear_estimates(om0, nu, t_max=t_max, quadrature_points=q)}
        c1 = reps["hlog_decay"].fitted_c
        snap = compute_bootstrap(rec, 0.0, t_max, c1=c1)
        for bid, lid in LINEAR_ANALOGUE.items():
            assert snap.quantities[bid] == pytest.approx(reps[lid].ratio, rel=1e-6), bid


class TestEnstrophy:
    def test_residual_small(self):
        cfg = small_config(nu=1e-2, t_final=5.0, ic=InitialConditionSpec(target_hlog_norm=0.3))
        rec = run(cfg).record
        t, res = enstrophy_residual(rec)
        assert np.abs(res).max() <= 1e-6 * t[-1]


class TestRemap:
    def test_zero_interval_identity(self):
        cfg = small_config()
        st = initial_state(cfg)
        out, lost = remap(st, 0.0)
        assert out is st and lost == 0.0

    def test_integer_relabel_single_mode(self):
        g = make_grid(16, 32, math.pi)
        spec = InitialConditionSpec(kind="single_mode", mode=(1, 0.0), target_hlog_norm=1.0)
        cfg = SimConfig(nu=1e-2, grid=g, ic=spec, dt=0.25, t_final=1.0)
        st = initial_state(cfg)
        for _ in range(4):
            st = step(st, cfg)
        out, lost = remap(st, 1.0)
        assert lost == 0.0
        assert out.offset == pytest.approx(0.0) and out.remapped == 1.0
        assert abs(out.omega.coeffs[1, -1]) == pytest.approx(abs(st.omega.coeffs[1, 0]), rel=1e-14)

    def test_loss_bound_enforced(self):
        g = make_grid(16, 16, math.pi)
        c = np.zeros(g.shape, complex)
        c[1, -8] = c[-1, 8] = 1.0
        st = TrajectoryState(1.0, SpectralField(g, c, Frame.sheared(1.0)), np.zeros(16), 0, {}, 0.1, 0.0)
        with pytest.raises(SimulationError):
            remap(st, 1.0, loss_bound=1e-10)

    def test_run_with_remap_keeps_offset_bounded(self):
        cfg = small_config(remap_interval=1.0, t_final=3.0, remap_loss_bound=1.0, boundary_mass_limit=None)
        res = run(cfg)
        assert res.state.offset <= 1.0 + 1e-9
        assert res.state.remapped == pytest.approx(3.0, abs=1e-9) or res.state.remapped == pytest.approx(2.0)
        assert any(e["event"] == "remap" for e in res.record.events)


class TestRun:
    def test_zero_horizon(self):
        rec = run(small_config(t_final=0.0)).record
        assert len(rec) == 1 and rec.times[0] == 0.0

    def test_csv_deterministic(self, tmp_path):
        cfg = small_config(t_final=1.0)
        run(cfg, outdir=tmp_path / "a")
        run(cfg, outdir=tmp_path / "b")
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()
        assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()

    def test_observers_and_cadence(self):
        seen = []
        cfg = small_config(t_final=1.0, record_interval=0.25)
        rec = run(cfg, observers=[lambda st, snap: seen.append(st.time)]).record
        np.testing.assert_allclose(seen, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
        assert len(rec) == 5

    def test_checkpoint_resume(self, tmp_path):
        cfg = small_config(t_final=1.0)
        full = run(cfg)
        half = run(replace(cfg, t_final=0.5), outdir=tmp_path)
        st = load_checkpoint(tmp_path / "checkpoint.bin")
        assert st.time == pytest.approx(0.5) and st.step_count == half.state.step_count
        np.testing.assert_array_equal(st.v0, half.state.v0)
        rest = run(cfg, state=st)
        np.testing.assert_allclose(rest.state.omega.coeffs, full.state.omega.coeffs, atol=1e-15)

    def test_cfl_abort(self, tmp_path):
        cfg = small_config(cfl_max=1e-9, cfl_action="abort")
        with pytest.raises(SimulationError):
            run(cfg, outdir=tmp_path)
        assert (tmp_path / "checkpoint.bin").exists()

    def test_cfl_reduce(self):
        cfg = small_config(ic=InitialConditionSpec(target_hlog_norm=20.0), cfl_max=0.3, t_final=0.5,
                           boundary_mass_limit=None)
        rec = run(cfg).record
        assert any(e["event"] == "dt_reduced" for e in rec.events)

    def test_boundary_mass_abort(self):
        g = make_grid(32, 32, math.pi)
        ic = InitialConditionSpec(envelope_width=3.0)
        with pytest.raises(SimulationError, match="boundary mass"):
            run(SimConfig(nu=1e-2, grid=g, ic=ic, t_final=0.1))

    def test_checkpoint_sidecar(self, tmp_path):
        cfg = small_config(t_final=0.2)
        st = run(cfg).state
        p = save_checkpoint(tmp_path / "c.bin", st, cfg)
        import json
        side = json.loads((tmp_path / "c.bin.json").read_text())
        assert side["config_hash"] == cfg.hash() and side["step"] == st.step_count
        assert p.exists()

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from couette.lp import (
    INEQUALITY_IDS,
    InequalityReport,
    bony,
    build_partition,
    chi_hat,
    lp_block,
    lp_blocks,
    max_block,
    paper_kernel,
    phi_hat,
    schur_apply,
    schur_bound,
    verify_inequality,
    write_inequality_reports,
)
from couette.lp import inequality_sides, random_circle, random_plane
from couette.spectral import SpectralField, make_grid

from conftest import random_field


class TestPartition:
    def test_sum_at_five(self):
        p = build_partition("plane", j_max=6)
        assert p.weights(5.0).sum() == 1.0

    @pytest.mark.parametrize("j", [1, 2, 3, 4])
    def test_phi_vanishes_outside_support(self, j):
        assert phi_hat(2.0 ** (j + 2) / 2 ** (j - 1)) == 0.0
        p = build_partition("circle", j_max=8)
        assert p.weight(j, 2.0 ** (j + 2)) == 0.0

    def test_overlap_sum_at_one(self):
        p = build_partition("circle", j_max=4)
        assert p.weight(0, 1.0) + p.weight(1, 1.0) == 1.0

    def test_low_pass_support(self):
        assert chi_hat(0.75) == 1.0 and chi_hat(4 / 3) == 0.0
        r = np.linspace(0, 3, 301)
        assert np.all(np.diff(chi_hat(r)) <= 0)

    @pytest.mark.parametrize("j", [1, 2, 5])
    def test_block_support(self, j):
        p = build_partition("circle", j_max=8)
        r = np.linspace(0, 600, 60001)
        w = p.weight(j, r)
        lo, hi = 0.75 * 2 ** (j - 1), 8 / 3 * 2 ** (j - 1)
        assert np.all(w[(r < lo - 1e-12) | (r > hi + 1e-12)] == 0)

    @pytest.mark.parametrize("grid", [make_grid(64, 64, math.pi), make_grid(128, 64, 2 * math.pi)])
    def test_unity_on_grid(self, grid):
        p = build_partition("plane", grid=grid)
        f = SpectralField(grid, np.ones(grid.shape, complex))
        from couette.lp import _xi_abs
        assert p.partition_residual(_xi_abs(f)) <= 1e-12

    def test_j_max_bounds(self):
        with pytest.raises(ValueError):
            build_partition("circle", j_max=0)
        with pytest.raises(ValueError):
            build_partition("circle", j_max=20, grid=64)
        with pytest.raises(ValueError):
            build_partition("sphere", j_max=2)
        assert build_partition("circle", grid=64).j_max == max_block(32)

    @given(st.floats(0.0, 1e4))
    def test_unity_property(self, r):
        p = build_partition("circle", j_max=16)
        assert abs(p.weights(r).sum() - 1.0) <= 1e-12


class TestBlocks:
    def test_constant_in_low_pass(self):
        g = make_grid(32, 32, math.pi)
        c = np.zeros(g.shape, complex)
        c[0, 0] = 2.0
        p = build_partition("plane", grid=g)
        blocks = lp_blocks(SpectralField(g, c), p)
        assert blocks[0].coeffs[0, 0] == 2.0
        assert all(np.abs(b.coeffs).max() == 0 for b in blocks[1:])

    def test_single_frequency_split(self):
        p = build_partition("circle", grid=256)
        for j in range(1, p.j_max):
            c = np.zeros(256, complex)
            c[2**j] = 1.0
            w = np.array([lp_block(c, k, p)[2**j].real for k in range(p.j_max + 1)])
            assert w.sum() == pytest.approx(1.0, abs=1e-15)
            assert set(np.nonzero(w)[0]) <= {j, j + 1}

    @settings(max_examples=25)
    @given(st.integers(0, 2**31))
    def test_reconstruction(self, seed):
        g = make_grid(64, 64, math.pi)
        f = random_field(g, np.random.default_rng(seed))
        p = build_partition("plane", grid=g)
        total = sum(np.asarray(b.coeffs) for b in lp_blocks(f, p))
        assert np.abs(total - f.coeffs).max() <= 1e-12 * np.abs(f.coeffs).max()

    def test_almost_orthogonal(self):
        g = make_grid(128, 128, math.pi)
        f = random_field(g, np.random.default_rng(1))
        p = build_partition("plane", grid=g)
        for j in range(p.j_max + 1):
            bj = lp_block(f, j, p)
            for k in range(p.j_max + 1):
                if abs(j - k) >= 3:
                    assert np.abs(lp_block(bj, k, p).coeffs).max() == 0.0


class TestBony:
    def _pair(self, seed, n=128):
        rng = np.random.default_rng(seed)
        return random_circle(rng, n), random_circle(rng, n)

    def test_unit_multiplier(self):
        _, g = self._pair(0)
        one = np.zeros_like(g)
        one[0] = 1.0
        p = build_partition("circle", grid=g.size)
        tri = bony(one, g, p)
        high = g - lp_block(g, 0, p) - lp_block(g, 1, p)
        np.testing.assert_allclose(tri.Tfg, high, atol=1e-14)
        np.testing.assert_allclose(tri.Tfg + tri.Tstar_gf, g, atol=1e-14)

    def test_constant_high_factor(self):
        f, _ = self._pair(1)
        c = np.zeros_like(f)
        c[0] = 3.0
        p = build_partition("circle", grid=f.size)
        assert np.abs(bony(f, c, p).Tfg).max() <= 1e-15

    @settings(max_examples=20)
    @given(st.integers(0, 2**31))
    def test_closure_plane(self, seed):
        g = make_grid(64, 64, math.pi)
        rng = np.random.default_rng(seed)
        f, h = random_plane(rng, g), random_plane(rng, g)
        tri = bony(f, h, build_partition("plane", grid=g))
        res = np.abs(np.asarray(tri.Tfg.coeffs) + tri.Tstar_gf.coeffs - tri.product.coeffs).max()
        assert res <= 1e-12 * np.abs(tri.product.coeffs).max()

    def test_mixed_inputs_rejected(self):
        g = make_grid(16, 16, math.pi)
        with pytest.raises(TypeError):
            bony(random_field(g, np.random.default_rng(0)), np.zeros(16, complex), build_partition("circle", j_max=2))


class TestSchur:
    def test_identity(self):
        f = np.arange(5.0)
        eye = lambda j, k: (j == k).astype(float)
        assert schur_bound(eye, 10) == 1.0
        np.testing.assert_array_equal(schur_apply(eye, f), f)

    def test_paper_kernel_bound(self):
        b = schur_bound(paper_kernel, 64)
        assert b <= 3.0
        assert b == pytest.approx(2.2661860066638257, rel=1e-12)

    def test_paper_kernel_no_overflow(self):
        assert paper_kernel(2000, 2000) == 0.5
        assert np.isfinite(schur_bound(paper_kernel, 1100))

    def test_bilinear(self):
        b = schur_bound(paper_kernel, 64)
        rng = np.random.default_rng(3)
        for _ in range(200):
            f, g = rng.standard_normal(65), rng.standard_normal(65)
            assert abs(schur_apply(paper_kernel, f) @ g) <= b * np.linalg.norm(f) * np.linalg.norm(g)

    def test_negative_kernel_rejected(self):
        with pytest.raises(ValueError):
            schur_bound(lambda j, k: j - k, 4)
        with pytest.raises(ValueError):
            schur_apply(-np.ones((3, 3)), np.ones(3))


class TestInequalities:
    def test_ber1_unit_multiplier(self):
        g = random_circle(np.random.default_rng(4), 128)
        one = np.zeros_like(g)
        one[0] = 1.0
        p = build_partition("circle", grid=128)
        lhs, rhs = inequality_sides("ber1", (one, g), p)
        from couette.lp import _log_l2
        high = g - lp_block(g, 0, p) - lp_block(g, 1, p)
        assert lhs / rhs == pytest.approx(1.0 + _log_l2(high) / _log_l2(g), rel=1e-12)

    def test_gn_gaussian(self):
        n, length = 1024, 20.0
        y = -length / 2 + length * np.arange(n) / n
        u = np.exp(-y**2 / 2)
        lhs, rhs = inequality_sides("gn", (u, length))
        # |u|_inf = 1, |u|_2^2 = sqrt(pi), |u'|_2^2 = sqrt(pi)/2
        assert lhs / rhs == pytest.approx((2 / math.pi) ** 0.25, rel=1e-9)

    @pytest.mark.parametrize("iid", INEQUALITY_IDS)
    def test_finite_constants(self, iid):
        rep = verify_inequality(iid, n_samples=10, seed=1)
        assert isinstance(rep, InequalityReport)
        assert math.isfinite(rep.max_constant_observed) and rep.max_constant_observed > 0
        assert rep.precondition_violations == 0 and rep.samples == 10

    def test_deterministic(self):
        assert verify_inequality("ber2", n_samples=5, seed=7) == verify_inequality("ber2", n_samples=5, seed=7)

    def test_precondition_violation(self, monkeypatch):
        def gen(rng, n):
            f = np.zeros(n, complex)
            f[1] = f[-1] = 1.0
            return (f,)

        from couette import lp
        monkeypatch.setattr(lp, "inequality_sides", lambda iid, sample, part=None: (1.0, 0.0))
        rep = verify_inequality("sobolev_log", gen, n_samples=3)
        assert rep.precondition_violations == 3 and rep.max_constant_observed == math.inf

    def test_zero_sample_skipped(self):
        rep = verify_inequality("gn", lambda rng, n: (np.zeros(n), 20.0), n_samples=2)
        assert rep.max_constant_observed == 0.0 and rep.precondition_violations == 0

    def test_unknown(self):
        with pytest.raises(ValueError):
            verify_inequality("young")
        with pytest.raises(ValueError):
            verify_inequality("gn", n_samples=0)

    def test_report_csv(self, tmp_path):
        reps = [verify_inequality(i, n_samples=2) for i in ("schur", "gn")]
        write_inequality_reports(tmp_path / "r.csv", reps)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "inequality_id,samples,max_constant_observed,resolution,seed"
        assert len(lines) == 3

import os
import subprocess
import sys

import numpy as np
import pytest

from couette import kernels
from couette.spectral import make_grid

BACKENDS = kernels.backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


class TestDispatch:
    def test_python_always_available(self):
        assert "python" in BACKENDS

    def test_selected_backend_is_known(self):
        assert kernels.BACKEND in BACKENDS

    def test_env_var_forces_fallback(self):
        env = dict(os.environ, COUETTE_PURE_PYTHON="1")
        out = subprocess.run([sys.executable, "-c", "from couette import kernels; print(kernels.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"


class TestAgreement:
    def setup_method(self):
        self.g = make_grid(32, 48, 2.0)
        rng = np.random.default_rng(0)
        self.c = rng.standard_normal(self.g.shape) + 1j * rng.standard_normal(self.g.shape)

    def test_shear_factor(self, backend):
        ref = BACKENDS["python"].shear_factor(self.g.alpha, self.g.eta, 0.7, 2.5, 3e-3)
        out = backend.shear_factor(self.g.alpha, self.g.eta, 0.7, 2.5, 3e-3)
        np.testing.assert_allclose(out, ref, rtol=1e-14, atol=0)

    def test_oracle(self, backend):
        ref = BACKENDS["python"].oracle_rk4(self.c, self.g.alpha, self.g.eta, 0.3, 4.0, 1e-2, 50)
        out = backend.oracle_rk4(self.c, self.g.alpha, self.g.eta, 0.3, 4.0, 1e-2, 50)
        np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-300)

    def test_packed_dot(self, backend):
        q = self.c[::-1].copy()
        np.testing.assert_array_equal(backend.packed_dot(self.c, q), self.c.real * q.real + self.c.imag * q.imag)

    def test_schur_sums(self, backend):
        k = np.abs(self.c.real)
        r, c = backend.schur_sums(np.ascontiguousarray(k))
        np.testing.assert_allclose(r, k.sum(axis=1), rtol=1e-13)
        np.testing.assert_allclose(c, k.sum(axis=0), rtol=1e-13)

    def test_shear_factor_closed_form(self, backend):
        # mode (1, 0): exponent nu * (tau^3/3 + tau)
        f = backend.shear_factor(np.array([1.0]), np.array([0.0]), 0.0, 10.0, 0.01)
        assert f[0, 0] == pytest.approx(np.exp(-0.01 * (1000 / 3 + 10)), rel=1e-14)

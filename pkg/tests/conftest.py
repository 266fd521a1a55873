import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from couette.spectral import Frame, SpectralField, enforce_hermitian, make_grid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_field(grid, rng, mean_free=False, band=None, frame=None):
    """Random real field, dealiased; optionally without x-mean or restricted to |alpha|,|eta| <= band."""
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c = enforce_hermitian(c * grid.dealias_mask)
    if band is not None:
        sel = (np.abs(grid.alpha)[:, None] <= band[0]) & (np.abs(grid.eta)[None, :] <= band[1])
        c = c * sel
    if mean_free:
        c[0] = 0.0
    return SpectralField(grid, c, frame or Frame.stationary())


def single_mode(grid, alpha, eta, amp=1.0, frame=None):
    c = np.zeros(grid.shape, dtype=complex)
    ia = int(np.nonzero(np.isclose(grid.alpha, alpha))[0][0])
    ie = int(np.nonzero(np.isclose(grid.eta, eta))[0][0])
    c[ia, ie] += amp
    ja = int(np.nonzero(np.isclose(grid.alpha, -alpha))[0][0])
    je = int(np.nonzero(np.isclose(grid.eta, -eta))[0][0])
    c[ja, je] += np.conj(amp)
    return SpectralField(grid, c, frame or Frame.stationary())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid32():
    return make_grid(32, 32, math.pi)


@pytest.fixture
def grid64():
    return make_grid(64, 64, 2 * math.pi)


# acceptance criterion -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")

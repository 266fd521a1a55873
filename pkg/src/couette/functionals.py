"""Per-snapshot scalar functionals shared by the linear estimates, the solver record and the bootstrap."""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .spectral import GridSpec, _inverse_complex, l2x_linfy, log_weight

SNAPSHOT_COLUMNS = (
    "l2",
    "hlog",
    "nonzero_l2",
    "nonzero_hlog",
    "zero_l2",
    "linf",
    "grad_l2",
    "grad_hlog",
    "dx_hlog",
    "log_linf",
    "v2_linf",
    "v2_half",
    "dxv1_hlog",
    "v1_linf",
    "v2_half_plain",
    "dxv1_l2",
    "v0_l2",
    "boundary_mass",
)


def wavenumbers(grid: GridSpec, s: float):
    """(alpha column, physical ky, kappa) for frame offset s."""
    a = grid.alpha[:, None]
    ky = grid.physical_eta(s)
    return a, ky, a * a + ky * ky


def stream_function(coeffs: np.ndarray, grid: GridSpec, s: float) -> np.ndarray:
    """psi = omega / |k|^2 with the (0, 0) mode gauged to zero."""
    _, _, kappa = wavenumbers(grid, s)
    safe = np.where(kappa == 0, 1.0, kappa)
    psi = coeffs / safe
    psi[kappa == 0] = 0.0
    return psi


def v0_l2(v0_hat: np.ndarray, grid: GridSpec) -> float:
    """||V_0^1||_{L^2_y} from its y-coefficients."""
    return float(np.sqrt(2.0 * grid.Ly * np.sum(np.abs(v0_hat) ** 2)))


def snapshot(coeffs: np.ndarray, grid: GridSpec, s: float, v0_hat: np.ndarray | None = None,
             outer: float = 0.1) -> dict[str, float]:
    """Every norm tracked along a trajectory, for a field in a frame with offset ``s``.

    The functionals that involve velocity or the log-weighted nonzero part use
    omega_!= only; ``l2``, ``linf`` and ``grad_l2`` use the full field.
    """
    area = grid.area
    a, ky, kappa = wavenumbers(grid, s)
    w = log_weight(grid.alpha)[:, None]
    c = coeffs
    cn = c.copy()
    cn[0] = 0.0
    c2 = np.abs(c) ** 2
    cn2 = np.abs(cn) ** 2
    w2 = w * w

    psi = stream_function(cn, grid, s)
    v1 = 1j * ky * psi
    v2 = -1j * a * psi

    # two packed inverse transforms give four real fields
    p1 = _inverse_complex(w * cn + 1j * v2, grid)
    p2 = _inverse_complex(v1 + 1j * c, grid)
    omega_vals = p2.imag
    ens = omega_vals**2
    band = np.abs(grid.y) >= (1.0 - outer) * grid.Ly
    tot = ens.sum()

    out = {
        "l2": np.sqrt(area * c2.sum()),
        "hlog": np.sqrt(area * (w2 * c2).sum()),
        "nonzero_l2": np.sqrt(area * cn2.sum()),
        "nonzero_hlog": np.sqrt(area * (w2 * cn2).sum()),
        "zero_l2": np.sqrt(area * c2[0].sum()),
        "linf": np.abs(omega_vals).max(),
        "grad_l2": np.sqrt(area * (kappa * c2).sum()),
        "grad_hlog": np.sqrt(area * (w2 * kappa * cn2).sum()),
        "dx_hlog": np.sqrt(area * (w2 * a * a * cn2).sum()),
        "log_linf": np.abs(p1.real).max(),
        "v2_linf": np.abs(p1.imag).max(),
        "v2_half": l2x_linfy(np.sqrt(np.abs(a)) * w * v2, grid),
        "dxv1_hlog": np.sqrt(area * (w2 * a * a * np.abs(v1) ** 2).sum()),
        "v1_linf": np.abs(p2.real).max(),
        "v2_half_plain": l2x_linfy(np.sqrt(np.abs(a)) * v2, grid),
        "dxv1_l2": np.sqrt(area * (a * a * np.abs(v1) ** 2).sum()),
        "v0_l2": v0_l2(v0_hat, grid) if v0_hat is not None else 0.0,
        "boundary_mass": float(ens[:, band].sum() / tot) if tot > 0 else 0.0,
    }
    return {k: float(v) for k, v in out.items()}


def profile_to_hat(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Real y-profile on the collocation grid -> y-coefficients (same normalization as fields)."""
    return sfft.fft(values) / grid.Ny * grid.y_phase


def hat_to_profile(hat: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (sfft.ifft(hat * grid.y_phase) * grid.Ny).real

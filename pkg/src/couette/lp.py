"""
Littlewood-Paley blocks, Bony paraproducts, the discrete Schur test and
randomized checks of the functional inequalities built on them.

Block convention (both the circle T and the plane T x [-Ly, Ly)):

* block 0 is the low-pass chi(|xi|), equal to 1 for |xi| <= 3/4 and 0 for |xi| >= 4/3;
* block b >= 1 is phi(2^-(b-1) |xi|) with phi(xi) = chi(xi/2) - chi(xi),
  supported in 2^(b-1) * [3/4, 8/3];
* the last block j_max collects the tail 1 - chi(2^-(j_max-1) |xi|).

The transition of chi is the quintic (C^2) smoothstep, so the blocks sum to one
by telescoping. On the circle, block b corresponds to the operator usually
written Delta_(b-1), with block 0 the low-pass Delta_(-1).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.fft as sfft

from . import kernels
from .spectral import GridSpec, SpectralField, _inverse_complex, l2_norm, log_weight

__all__ = [
    "DyadicPartition",
    "ParaproductTriple",
    "InequalityReport",
    "INEQUALITY_IDS",
    "chi_hat",
    "phi_hat",
    "build_partition",
    "max_block",
    "lp_block",
    "lp_blocks",
    "bony",
    "paper_kernel",
    "schur_apply",
    "schur_bound",
    "verify_inequality",
    "default_generator",
    "write_inequality_reports",
]

LOW, HIGH = 0.75, 4.0 / 3.0


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


def chi_hat(r):
    """Low-pass symbol: 1 on |xi| <= 3/4, 0 on |xi| >= 4/3."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - _smoothstep((r - LOW) / (HIGH - LOW))


def phi_hat(r):
    """Annulus symbol chi(xi/2) - chi(xi), supported in [3/4, 8/3]."""
    r = np.abs(np.asarray(r, dtype=float))
    return chi_hat(0.5 * r) - chi_hat(r)


def max_block(xi_max: float) -> int:
    """Largest j_max whose tail block is non-empty when frequencies reach ``xi_max``."""
    if xi_max <= LOW:
        return 0
    j = int(math.floor(math.log2(xi_max / LOW))) + 1
    while j > 0 and LOW * 2.0 ** (j - 1) >= xi_max:
        j -= 1
    return j


@dataclass(frozen=True)
class DyadicPartition:
    dimension: Literal["circle", "plane"]
    j_max: int

    def weight(self, j: int, r) -> np.ndarray:
        """Symbol of block ``j`` at frequency magnitudes ``r``."""
        if not 0 <= j <= self.j_max:
            raise ValueError(f"block {j} outside 0..{self.j_max}")
        r = np.abs(np.asarray(r, dtype=float))
        if j == 0:
            return chi_hat(r)
        if j == self.j_max:
            return 1.0 - chi_hat(r / 2.0 ** (j - 1))
        return phi_hat(r / 2.0 ** (j - 1))

    def weights(self, r) -> np.ndarray:
        return np.stack([self.weight(j, r) for j in range(self.j_max + 1)])

    def chi_hat_values(self, r) -> np.ndarray:
        return self.weight(0, r)

    def phi_hat_values(self, r) -> np.ndarray:
        return self.weights(r)[1:]

    def partition_residual(self, r) -> float:
        return float(np.max(np.abs(self.weights(r).sum(axis=0) - 1.0)))


def _xi_abs(f) -> np.ndarray:
    """|xi| for a plane SpectralField (physical wavenumbers) or a 1D circle coefficient array."""
    if isinstance(f, SpectralField):
        ky = f.ky
        return np.sqrt(f.grid.alpha[:, None] ** 2 + ky**2)
    c = np.asarray(f)
    if c.ndim != 1:
        raise TypeError("circle fields are 1D coefficient arrays")
    return np.abs(np.fft.fftfreq(c.size, d=1.0 / c.size))


def _grid_xi_max(dimension: str, grid) -> float:
    if dimension == "circle":
        return float(int(grid) // 2)
    g: GridSpec = grid
    return math.hypot(g.Nx / 2, g.deta * g.Ny / 2)


def build_partition(dimension: Literal["circle", "plane"], j_max: int | None = None, grid=None) -> DyadicPartition:
    """Partition with ``j_max`` blocks beyond the low-pass.

    ``grid`` is a :class:`GridSpec` for the plane or the number of points for
    the circle; when given, ``j_max`` may not exceed the finest block the grid
    can represent, and defaults to it.
    """
    if dimension not in ("circle", "plane"):
        raise ValueError(f"unknown dimension {dimension!r}")
    if grid is not None:
        jg = max_block(_grid_xi_max(dimension, grid))
        if j_max is None:
            j_max = jg
        elif j_max > jg:
            raise ValueError(f"j_max={j_max} exceeds the finest block {jg} representable on this grid")
    if j_max is None or j_max < 1:
        raise ValueError("j_max must be >= 1")
    return DyadicPartition(dimension, int(j_max))


def _with(f, coeffs):
    return f.with_coeffs(coeffs) if isinstance(f, SpectralField) else coeffs


def _coeffs(f) -> np.ndarray:
    return np.asarray(f.coeffs) if isinstance(f, SpectralField) else np.asarray(f, dtype=np.complex128)


def lp_block(f, j: int, partition: DyadicPartition):
    """Delta_j f (same type as ``f``)."""
    return _with(f, _coeffs(f) * partition.weight(j, _xi_abs(f)))


def lp_blocks(f, partition: DyadicPartition) -> list:
    r = _xi_abs(f)
    c = _coeffs(f)
    return [_with(f, c * partition.weight(j, r)) for j in range(partition.j_max + 1)]


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------
def _to_values(f, c) -> np.ndarray:
    if isinstance(f, SpectralField):
        return _inverse_complex(c, f.grid).real
    return (sfft.ifft(c) * c.size).real


def _from_values(f, v) -> np.ndarray:
    if isinstance(f, SpectralField):
        g = f.grid
        c = sfft.fft2(v) / (g.Nx * g.Ny) * g.y_phase[None, :]
        return c * g.dealias_mask
    n = v.size
    c = sfft.fft(v) / n
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    return c * (k <= (2.0 / 3.0) * n / 2 + 1e-12)


def product(f, g):
    """Dealiased pointwise product."""
    _check_pair(f, g)
    return _with(f, _from_values(f, _to_values(f, _coeffs(f)) * _to_values(g, _coeffs(g))))


def _check_pair(f, g):
    if isinstance(f, SpectralField) != isinstance(g, SpectralField):
        raise TypeError("mixed plane and circle inputs")
    if isinstance(f, SpectralField):
        if f.grid != g.grid or f.frame != g.frame:
            raise ValueError("fields must share grid and frame")
    elif np.shape(f) != np.shape(g):
        raise ValueError("circle fields must have the same length")


@dataclass(frozen=True)
class ParaproductTriple:
    Tfg: object
    Tstar_gf: object
    product: object


def paraproduct(f, g, partition: DyadicPartition):
    """T_f g = sum_{b>=2} (blocks 0..b-2 of f) * (block b of g), dealiased."""
    _check_pair(f, g)
    fb = lp_blocks(f, partition)
    gb = lp_blocks(g, partition)
    low = np.zeros_like(_coeffs(f))
    acc = None
    for b in range(2, partition.j_max + 1):
        low = low + _coeffs(fb[b - 2])
        term = _to_values(f, low) * _to_values(g, _coeffs(gb[b]))
        acc = term if acc is None else acc + term
    if acc is None:
        return _with(f, np.zeros_like(_coeffs(f)))
    return _with(f, _from_values(f, acc))


def bony(f, g, partition: DyadicPartition) -> ParaproductTriple:
    """(T_f g, T*_g f = fg - T_f g, fg)."""
    tfg = paraproduct(f, g, partition)
    fg = product(f, g)
    return ParaproductTriple(tfg, _with(f, _coeffs(fg) - _coeffs(tfg)), fg)


# ---------------------------------------------------------------------------
# Schur test
# ---------------------------------------------------------------------------
def paper_kernel(j, jp):
    """K(j, j') = 2^(j+j') / (2^(2j) + 2^(2j'))."""
    j = np.asarray(j, dtype=float)
    jp = np.asarray(jp, dtype=float)
    # divide through by 2^(2 max) to avoid overflow at large indices
    m = np.maximum(j, jp)
    return 2.0 ** (j + jp - 2 * m) / (2.0 ** (2 * (j - m)) + 2.0 ** (2 * (jp - m)))


def _kernel_matrix(kernel, n: int, m: int | None = None) -> np.ndarray:
    m = n if m is None else m
    if callable(kernel):
        jj, kk = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        mat = np.asarray(kernel(jj, kk), dtype=float)
    else:
        mat = np.asarray(kernel, dtype=float)[:n, :m]
    if mat.shape != (n, m):
        raise ValueError(f"kernel matrix has shape {mat.shape}, expected {(n, m)}")
    if np.any(mat < 0) or not np.all(np.isfinite(mat)):
        raise ValueError("kernel must be finite and non-negative")
    return np.ascontiguousarray(mat)


def schur_apply(kernel, f) -> np.ndarray:
    """(T f)(j) = sum_j' K(j, j') f(j')."""
    f = np.asarray(f, dtype=float)
    return _kernel_matrix(kernel, f.size) @ f


def schur_bound(kernel, j_max: int) -> float:
    """max(sup row sum, sup column sum) over indices 0..j_max."""
    rows, cols = kernels.schur_sums(_kernel_matrix(kernel, j_max + 1))
    return float(max(np.max(rows), np.max(cols)))


# ---------------------------------------------------------------------------
# inequality suites
# ---------------------------------------------------------------------------
INEQUALITY_IDS = ("bernstein_2d", "ber1", "ber2", "ber3", "gn", "schur", "sobolev_log")


@dataclass(frozen=True)
class InequalityReport:
    inequality_id: str
    lhs: float
    rhs_without_constant: float
    empirical_constant: float
    samples: int
    max_constant_observed: float
    resolution: int
    seed: int
    precondition_violations: int = 0


def _circle_l2(c) -> float:
    return float(np.sqrt(2 * np.pi * np.sum(np.abs(c) ** 2)))


def _circle_k(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n)


def _circle_values(c) -> np.ndarray:
    return (sfft.ifft(c) * c.size).real


def random_circle(rng: np.random.Generator, n: int, slope: float = 2.0, kmax: int = 256,
                  mean_free: bool = False) -> np.ndarray:
    """Real trigonometric polynomial with |c_k| ~ <k>^-slope, band-limited to min(kmax, n/6).

    The coefficients for |k| <= kmax are always drawn, so the same stream of
    samples refines consistently when ``n`` is doubled.
    """
    raw = rng.standard_normal(kmax + 1) + 1j * rng.standard_normal(kmax + 1)
    amp = raw * (1.0 + np.arange(kmax + 1)) ** (-slope)
    kc = min(kmax, n // 6)
    c = np.zeros(n, dtype=np.complex128)
    c[: kc + 1] = amp[: kc + 1]
    c[0] = 0.0 if mean_free else c[0].real
    c[n - kc:] = np.conj(amp[1: kc + 1][::-1])
    return c


def random_plane(rng: np.random.Generator, grid: GridSpec, slope: float = 2.0, kmax: float = 64.0) -> SpectralField:
    """Real field with |c| ~ <|xi|>^-slope on |xi| <= min(kmax, Nx/6, eta_max/3)."""
    size = 2 * int(kmax) + 1
    ka = np.arange(-int(kmax), int(kmax) + 1)
    raw = rng.standard_normal((size, 2 * size)) + 1j * rng.standard_normal((size, 2 * size))
    ke = np.arange(-size, size) * grid.deta
    r = np.sqrt(ka[:, None] ** 2 + ke[None, :] ** 2)
    cutoff = min(kmax, grid.Nx / 6, grid.deta * grid.Ny / 6)
    amp = np.where(r <= cutoff, raw * (1.0 + r) ** (-slope), 0.0)
    c = np.zeros(grid.shape, dtype=np.complex128)
    ie = np.arange(-size, size)
    keep_a = np.abs(ka) < grid.Nx // 2
    keep_e = np.abs(ie) < grid.Ny // 2
    c[np.ix_(np.mod(ka[keep_a], grid.Nx), np.mod(ie[keep_e], grid.Ny))] = amp[np.ix_(keep_a, keep_e)]
    c = 0.5 * (c + np.conj(np.roll(np.flip(c, (0, 1)), 1, (0, 1))))
    return SpectralField(grid, c)


def random_sequence(rng: np.random.Generator, n: int, slope: float = 1.0, nmax: int = 1024) -> np.ndarray:
    """Random sequence with |f(j)| ~ (1+j)^-slope; the first n of a fixed-length draw."""
    z = rng.standard_normal(nmax) * (1.0 + np.arange(nmax)) ** (-slope)
    return z[:n]


def random_bump_line(rng: np.random.Generator, n: int, length: float = 20.0) -> tuple[np.ndarray, float]:
    """Sum of 1-4 Gaussians on [-length/2, length/2), negligible (< 1e-12) at the ends."""
    y = -length / 2 + length * np.arange(n) / n
    u = np.zeros(n)
    for _ in range(int(rng.integers(1, 5))):
        w = rng.uniform(0.3, 1.0)
        y0 = rng.uniform(-length / 2 + 8 * w, length / 2 - 8 * w)
        u += rng.standard_normal() * np.exp(-0.5 * ((y - y0) / w) ** 2)
    return u, length


def default_generator(inequality_id: str) -> Callable:
    """Sample generator ``gen(rng, resolution)`` used when none is supplied."""
    if inequality_id in ("ber1", "ber2"):
        return lambda rng, n: (random_circle(rng, n), random_circle(rng, n))
    if inequality_id == "ber3":
        # the rhs involves ln(e+|D|) d_x g, so the spectrum must decay faster than <k>^-2
        return lambda rng, n: (random_circle(rng, n, slope=2.5), random_circle(rng, n, slope=2.5))
    if inequality_id == "sobolev_log":
        return lambda rng, n: (random_circle(rng, n, slope=1.5),)
    if inequality_id == "gn":
        return lambda rng, n: random_bump_line(rng, n)
    if inequality_id == "bernstein_2d":
        return lambda rng, n: (random_plane(rng, GridSpec(n, n, math.pi)),)
    if inequality_id == "schur":
        return lambda rng, n: (random_sequence(rng, n), random_sequence(rng, n))
    raise ValueError(f"unknown inequality {inequality_id!r}; expected one of {INEQUALITY_IDS}")


def _log_l2(c) -> float:
    return _circle_l2(log_weight(_circle_k(c.size)) * c)


def inequality_sides(inequality_id: str, sample, partition: DyadicPartition | None = None) -> tuple[float, float]:
    """(lhs, constant-free rhs) of one inequality on one sample."""
    if inequality_id in ("ber1", "ber2", "ber3"):
        f, g = sample
        n = f.size
        part = partition or build_partition("circle", grid=n)
        k = _circle_k(n)
        if inequality_id == "ber1":
            tfg = paraproduct(f, g, part)
            t_star = product(f, g) - paraproduct(g, f, part)
            lhs = _log_l2(tfg) + _log_l2(t_star)
            rhs = float(np.abs(_circle_values(f)).max()) * _log_l2(g)
        elif inequality_id == "ber2":
            lhs = _log_l2(paraproduct(f, g, part))
            rhs = _circle_l2(f) * _log_l2(np.sqrt(np.abs(k)) * g)
        else:
            lhs = _log_l2(paraproduct(1j * k * f, g, part))
            rhs = float(np.abs(_circle_values(f)).max()) * _log_l2(1j * k * g)
        return lhs, rhs
    if inequality_id == "sobolev_log":
        (f,) = sample
        k = _circle_k(f.size)
        fm = f.copy()
        fm[0] = 0.0
        lhs = float(np.abs(_circle_values(fm)).max())
        rhs = _circle_l2(np.sqrt(np.abs(k)) * log_weight(k) * f)
        return lhs, rhs
    if inequality_id == "gn":
        u, length = sample
        n = u.size
        dy = length / n
        kk = 2 * np.pi * np.fft.fftfreq(n, d=dy)
        du = sfft.ifft(1j * kk * sfft.fft(u)).real
        lhs = float(np.abs(u).max())
        rhs = math.sqrt(math.sqrt(np.sum(u**2) * dy) * math.sqrt(np.sum(du**2) * dy))
        return lhs, rhs
    if inequality_id == "bernstein_2d":
        (u,) = sample
        part = partition or build_partition("plane", grid=u.grid)
        blocks = lp_blocks(u, part)
        l2s = np.array([l2_norm(b) for b in blocks])
        best = (0.0, 1.0)
        for j, b in enumerate(blocks):
            lo, hi = max(0, j - 2), min(part.j_max, j + 2)
            rhs = 2.0**j * l2s[lo: hi + 1].sum()
            lhs = float(np.abs(_inverse_complex(np.asarray(b.coeffs), u.grid).real).max())
            if rhs > 0 and lhs / rhs > best[0] / best[1]:
                best = (lhs, rhs)
        return best
    if inequality_id == "schur":
        f, g = sample
        tf = schur_apply(paper_kernel, f)
        return abs(float(tf @ g)), float(np.linalg.norm(f) * np.linalg.norm(g))
    raise ValueError(f"unknown inequality {inequality_id!r}")


_DEFAULT_RES = {"ber1": 128, "ber2": 128, "ber3": 128, "sobolev_log": 128, "gn": 512,
                "bernstein_2d": 64, "schur": 65}


def verify_inequality(inequality_id: str, sample_generator: Callable | None = None, n_samples: int = 1000,
                      resolution: int | None = None, seed: int = 0) -> InequalityReport:
    """Largest observed lhs/rhs over ``n_samples`` random samples.

    Samples with rhs = 0 and lhs > 0 are counted as precondition violations and
    make the reported constant infinite.
    """
    if inequality_id not in INEQUALITY_IDS:
        raise ValueError(f"unknown inequality {inequality_id!r}; expected one of {INEQUALITY_IDS}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    res = int(resolution or _DEFAULT_RES[inequality_id])
    gen = sample_generator or default_generator(inequality_id)
    rng = np.random.default_rng(seed)
    part = None
    if inequality_id in ("ber1", "ber2", "ber3"):
        part = build_partition("circle", grid=res)
    elif inequality_id == "bernstein_2d":
        part = build_partition("plane", grid=GridSpec(res, res, math.pi))
    worst = (0.0, 1.0, 0.0)
    violations = 0
    for _ in range(n_samples):
        sample = gen(rng, res)
        if inequality_id == "bernstein_2d" and part.j_max != max_block(_grid_xi_max("plane", sample[0].grid)):
            part = build_partition("plane", grid=sample[0].grid)
        lhs, rhs = inequality_sides(inequality_id, sample, part)
        if rhs == 0:
            if lhs > 0:
                violations += 1
            continue
        ratio = lhs / rhs
        if ratio > worst[2]:
            worst = (lhs, rhs, ratio)
    max_c = math.inf if violations else worst[2]
    return InequalityReport(inequality_id, worst[0], worst[1], worst[2], n_samples, max_c, res, seed, violations)


def write_inequality_reports(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inequality_id", "samples", "max_constant_observed", "resolution", "seed"])
        for r in reports:
            w.writerow([r.inequality_id, r.samples, repr(r.max_constant_observed), r.resolution, r.seed])

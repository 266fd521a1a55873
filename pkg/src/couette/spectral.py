"""
Grids, Fourier transforms, field arithmetic and norm functionals.

Conventions
-----------
The domain is x in [0, 2*pi) times y in [-Ly, Ly), both periodic. A field is

    f(x, y) = sum_{alpha, eta} c(alpha, eta) exp(i*alpha*x + i*eta*y)

with integer alpha and eta in (pi/Ly)*Z, so that

    ||f||_{L^2}^2 = (2*pi) * (2*Ly) * sum |c|^2.

Coefficient arrays have shape (Nx, Ny), axis 0 indexed by alpha and axis 1 by
eta, both in FFT order.

A field may live in the sheared frame with offset s: its coefficients then
represent W(x, y) = f(x + y*s, y), and the mode labelled (alpha, eta) carries
physical wavenumbers (alpha, eta - alpha*s). Every norm below is evaluated with
the physical wavenumbers, so the same functional applies in either frame.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "Frame",
    "SpectralField",
    "NormBundle",
    "make_grid",
    "transform_forward",
    "transform_inverse",
    "compute_norms",
    "apply_x_multiplier",
    "mixed_norm",
    "enforce_hermitian",
    "hermitian_defect",
    "refine",
    "boundary_mass_fraction",
    "write_field",
    "read_field",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Discretization of T_x times the truncated y-interval [-Ly, Ly)."""

    Nx: int
    Ny: int
    Ly: float
    dealias_fraction: float = 2.0 / 3.0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny)

    @property
    def deta(self) -> float:
        """Spacing of the y-wavenumbers."""
        return np.pi / self.Ly

    @property
    def area(self) -> float:
        return TWO_PI * 2.0 * self.Ly

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.fft.fftfreq(self.Nx, d=1.0 / self.Nx)

    @cached_property
    def eta(self) -> np.ndarray:
        return np.fft.fftfreq(self.Ny, d=1.0 / self.Ny) * self.deta

    @cached_property
    def x(self) -> np.ndarray:
        return TWO_PI * np.arange(self.Nx) / self.Nx

    @cached_property
    def y(self) -> np.ndarray:
        return -self.Ly + 2.0 * self.Ly * np.arange(self.Ny) / self.Ny

    @cached_property
    def y_phase(self) -> np.ndarray:
        # exp(i*eta*Ly) = (-1)^m; accounts for the grid starting at y = -Ly
        m = np.fft.fftfreq(self.Ny, d=1.0 / self.Ny).astype(np.int64)
        return np.where(m % 2 == 0, 1.0, -1.0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        amax = self.dealias_fraction * self.Nx / 2
        emax = self.dealias_fraction * self.deta * self.Ny / 2
        keep_a = np.abs(self.alpha) <= amax + 1e-12
        keep_e = np.abs(self.eta) <= emax + 1e-12 * self.deta
        return keep_a[:, None] & keep_e[None, :]

    @cached_property
    def alpha_mesh(self) -> np.ndarray:
        return np.broadcast_to(self.alpha[:, None], self.shape)

    def physical_eta(self, s: float) -> np.ndarray:
        """Physical y-wavenumber eta - alpha*s of every mode in a frame with offset s."""
        return self.eta[None, :] - self.alpha[:, None] * s


def make_grid(Nx: int, Ny: int, Ly: float = 2.0 * np.pi, dealias_fraction: float = 2.0 / 3.0) -> GridSpec:
    """Validated :class:`GridSpec` constructor."""
    for name, n in (("Nx", Nx), ("Ny", Ny)):
        if int(n) != n or n < 4:
            raise ValueError(f"{name} must be an integer >= 4, got {n}")
        if n % 2:
            raise ValueError(f"{name} must be even, got {n}")
    if not (Ly > 0 and math.isfinite(Ly)):
        raise ValueError(f"Ly must be positive and finite, got {Ly}")
    if not (0.0 < dealias_fraction <= 1.0):
        raise ValueError(f"dealias_fraction must lie in (0, 1], got {dealias_fraction}")
    return GridSpec(int(Nx), int(Ny), float(Ly), float(dealias_fraction))


@dataclass(frozen=True)
class Frame:
    """Stationary frame, or the sheared frame W(x, y) = f(x + y*s, y)."""

    kind: Literal["stationary", "sheared"] = "stationary"
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("stationary", "sheared"):
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.kind == "stationary" and self.s != 0.0:
            raise ValueError("stationary frame carries no offset")
        if self.s < 0 or not math.isfinite(self.s):
            raise ValueError(f"frame offset must be finite and >= 0, got {self.s}")

    @classmethod
    def stationary(cls) -> "Frame":
        return cls("stationary", 0.0)

    @classmethod
    def sheared(cls, s: float) -> "Frame":
        return cls("sheared", float(s))

    @property
    def offset(self) -> float:
        return self.s


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar field. Immutable."""

    grid: GridSpec
    coeffs: np.ndarray
    frame: Frame = dc_field(default_factory=Frame.stationary)

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        if c.dtype != np.complex128 or c.flags.writeable:
            c = np.array(c, dtype=np.complex128)
            c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    # wavenumbers in this field's frame
    @property
    def kx(self) -> np.ndarray:
        return self.grid.alpha_mesh

    @property
    def ky(self) -> np.ndarray:
        return self.grid.physical_eta(self.frame.offset)

    @property
    def kappa(self) -> np.ndarray:
        """|k|^2 with physical wavenumbers."""
        return self.grid.alpha[:, None] ** 2 + self.ky**2

    def with_coeffs(self, coeffs: np.ndarray, frame: Frame | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.frame if frame is None else frame)

    def values(self) -> np.ndarray:
        return transform_inverse(self)

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.frame != self.frame:
            raise ValueError(f"frame mismatch: {self.frame} vs {other.frame}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        if not np.isscalar(scalar) or np.iscomplexobj(scalar):
            raise TypeError("fields scale by real scalars only; use a product routine for fields")
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: GridSpec, frame: Frame | None = None) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), frame or Frame.stationary())


def _conj_reflect(c: np.ndarray) -> np.ndarray:
    """conj(c(-alpha, -eta)) with modular (FFT) indexing."""
    return np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))


def enforce_hermitian(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + _conj_reflect(c))


def hermitian_defect(field: SpectralField) -> float:
    """max |c(-alpha,-eta) - conj c(alpha,eta)| relative to max |c|."""
    c = field.coeffs
    scale = np.abs(c).max()
    if scale == 0:
        return 0.0
    return float(np.abs(c - _conj_reflect(c)).max() / scale)


def transform_forward(values: np.ndarray, grid: GridSpec, frame: Frame | None = None) -> SpectralField:
    """Real collocation values -> :class:`SpectralField` (Hermitian symmetry enforced)."""
    v = np.asarray(values)
    if v.shape != grid.shape:
        raise ValueError(f"array shape {v.shape} does not match grid {grid.shape}")
    if np.iscomplexobj(v):
        raise TypeError("transform_forward expects real values")
    c = sfft.fft2(v.astype(np.float64)) / (grid.Nx * grid.Ny)
    c *= grid.y_phase[None, :]
    return SpectralField(grid, enforce_hermitian(c), frame or Frame.stationary())


def _inverse_complex(c: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.ifft2(c * grid.y_phase[None, :]) * (grid.Nx * grid.Ny)


def transform_inverse(field: SpectralField) -> np.ndarray:
    """Collocation values of the field in its own frame coordinates."""
    return _inverse_complex(field.coeffs, field.grid).real


def _check_finite(field: SpectralField):
    if not np.all(np.isfinite(field.coeffs)):
        raise ValueError("field has NaN/Inf coefficients")


def log_weight(alpha: np.ndarray) -> np.ndarray:
    """ln(e + |alpha|)."""
    return np.log(np.e + np.abs(alpha))


@dataclass(frozen=True)
class NormBundle:
    l2: float
    hlog: float
    linf: float
    nonzero_l2: float
    zero_l2: float


def l2_norm(field: SpectralField) -> float:
    return float(np.sqrt(field.grid.area * np.sum(np.abs(field.coeffs) ** 2)))


def hlog_norm(field: SpectralField) -> float:
    """||ln(e + |D_x|) f||_{L^2}."""
    w = log_weight(field.grid.alpha)[:, None]
    return float(np.sqrt(field.grid.area * np.sum((w * np.abs(field.coeffs)) ** 2)))


def compute_norms(field: SpectralField) -> NormBundle:
    """L^2, H^log_x L^2_y, grid-max L^inf, and the alpha = 0 / alpha != 0 split.

    ``zero_l2`` is the L^2_{x,y} norm of the x-average f_0 viewed as a function on
    the box, so that l2**2 == nonzero_l2**2 + zero_l2**2. Divide by sqrt(2*pi)
    for the L^2_y norm of the profile.
    """
    _check_finite(field)
    c2 = np.abs(field.coeffs) ** 2
    area = field.grid.area
    zero = float(np.sqrt(area * c2[0].sum()))
    nonzero = float(np.sqrt(area * c2[1:].sum()))
    return NormBundle(
        l2=float(np.sqrt(area * c2.sum())),
        hlog=hlog_norm(field),
        linf=float(np.abs(transform_inverse(field)).max()),
        nonzero_l2=nonzero,
        zero_l2=zero,
    )


_X_SYMBOLS = {
    "log": lambda a: log_weight(a).astype(np.complex128),
    "half": lambda a: np.sqrt(np.abs(a)).astype(np.complex128),
    "dx": lambda a: 1j * a,
    "P_neq": lambda a: (a != 0).astype(np.complex128),
    "P0": lambda a: (a == 0).astype(np.complex128),
}
_X_ALIASES = {
    "ln(e+|D_x|)": "log",
    "|D_x|^{1/2}": "half",
    "d_x": "dx",
    "P_{!=0}": "P_neq",
    "P_0": "P0",
}

XMultiplier = Literal["log", "half", "dx", "P_neq", "P0"]


def x_symbol(name: str, alpha: np.ndarray) -> np.ndarray:
    key = _X_ALIASES.get(name, name)
    if key not in _X_SYMBOLS:
        raise ValueError(f"unknown x-multiplier {name!r}; expected one of {sorted(_X_SYMBOLS)}")
    return _X_SYMBOLS[key](np.asarray(alpha, dtype=np.float64))


def apply_x_multiplier(field: SpectralField, symbol: str) -> SpectralField:
    """Multiply every coefficient by a Fourier multiplier in x evaluated at alpha."""
    m = x_symbol(symbol, field.grid.alpha)
    return field.with_coeffs(field.coeffs * m[:, None])


def y_profiles(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """x-Fourier coefficients f^(alpha, y_j) on the y-collocation grid."""
    return sfft.ifft(coeffs * grid.y_phase[None, :], axis=1) * grid.Ny


def l2x_linfy(coeffs: np.ndarray, grid: GridSpec) -> float:
    """l^2 over alpha of sup_y |f^(alpha, y)|, scaled to the L^2(T) norm."""
    prof = np.abs(y_profiles(coeffs, grid)).max(axis=1)
    return float(np.sqrt(TWO_PI * np.sum(prof**2)))


def mixed_norm(field: SpectralField, norm: str) -> float:
    """Mixed norms ``"L2xLinfy"`` (L^2_x L^inf_y) and ``"Linf"`` (grid max).

    Both are invariant under the shear map, so they are evaluated directly on
    the field's own coefficients.
    """
    _check_finite(field)
    if norm in ("L2xLinfy", "L2_x Linf_y"):
        return l2x_linfy(field.coeffs, field.grid)
    if norm in ("Linf", "Linf_xy"):
        return float(np.abs(transform_inverse(field)).max())
    raise ValueError(f"unknown mixed norm {norm!r}")


def refine(field: SpectralField, factor: int = 2) -> SpectralField:
    """Spectral interpolation onto a grid ``factor`` times finer (same Ly)."""
    g = field.grid
    fine = GridSpec(g.Nx * factor, g.Ny * factor, g.Ly, g.dealias_fraction)
    shifted = np.fft.fftshift(field.coeffs)
    big = np.zeros(fine.shape, dtype=np.complex128)
    ox = (fine.Nx - g.Nx) // 2
    oy = (fine.Ny - g.Ny) // 2
    big[ox:ox + g.Nx, oy:oy + g.Ny] = shifted
    # split the coarse Nyquist rows/columns so the refined field stays real
    big[ox + g.Nx, oy:oy + g.Ny] = 0.5 * shifted[0, :]
    big[ox, oy:oy + g.Ny] *= 0.5
    big[:, oy + g.Ny] = 0.5 * big[:, oy]
    big[:, oy] *= 0.5
    return SpectralField(fine, enforce_hermitian(np.fft.ifftshift(big)), field.frame)


def boundary_mass_fraction(field: SpectralField, outer: float = 0.1) -> float:
    """Fraction of |f|^2 carried by the outer ``outer``*Ly band of y."""
    v2 = transform_inverse(field) ** 2
    total = v2.sum()
    if total == 0:
        return 0.0
    band = np.abs(field.grid.y) >= (1.0 - outer) * field.grid.Ly
    return float(v2[:, band].sum() / total)


# ---------------------------------------------------------------------------
# binary checkpoint format
# ---------------------------------------------------------------------------
MAGIC = b"CED1"
_HEADER = struct.Struct("<4sIIdBdd")
_FRAME_CODES = {"stationary": 0, "sheared": 1}


def write_field(path, field: SpectralField, time: float = 0.0) -> None:
    """Write ``field`` in the CED1 binary format.

    Layout: little-endian header (magic, Nx, Ny, Ly, frame code, frame offset,
    time) followed by Nx*Ny complex coefficients as interleaved float64
    (re, im), row-major in (alpha, eta) with both indices ascending from
    -N/2 to N/2-1.
    """
    g = field.grid
    header = _HEADER.pack(MAGIC, g.Nx, g.Ny, g.Ly, _FRAME_CODES[field.frame.kind], field.frame.s, float(time))
    body = np.ascontiguousarray(np.fft.fftshift(field.coeffs)).astype("<c16").tobytes()
    Path(path).write_bytes(header + body)


def read_field(path, dealias_fraction: float = 2.0 / 3.0) -> tuple[SpectralField, float]:
    """Inverse of :func:`write_field`; returns ``(field, time)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated checkpoint header")
    magic, nx, ny, ly, code, s, time = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    expected = _HEADER.size + nx * ny * 16
    if len(raw) != expected:
        raise ValueError(f"checkpoint size {len(raw)} != expected {expected}")
    grid = make_grid(nx, ny, ly, dealias_fraction)
    kind = {v: k for k, v in _FRAME_CODES.items()}[code]
    coeffs = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(nx, ny)
    frame = Frame(kind, s)
    return SpectralField(grid, np.fft.ifftshift(coeffs).astype(np.complex128), frame), time

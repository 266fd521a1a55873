"""
Nonlinear perturbation system in shear-periodic coordinates.

The state is the vorticity W in the sheared frame (offset s) together with the
shear-average velocity V_0^1(y), which is evolved by its own forced heat
equation. Time stepping is a Lawson integrating-factor RK4 whose integrating
factor is the exact shear-diffusion propagator, so the linear dynamics carries
no splitting error. Products are formed on the sheared collocation grid with
2/3-rule dealiasing.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from . import kernels
from .functionals import SNAPSHOT_COLUMNS, hat_to_profile, profile_to_hat, snapshot, stream_function
from .linear import shift_frame
from .spectral import (
    Frame,
    GridSpec,
    SpectralField,
    _inverse_complex,
    enforce_hermitian,
    log_weight,
    make_grid,
    read_field,
    transform_forward,
    write_field,
)

log = logging.getLogger(__name__)

__all__ = [
    "InitialConditionSpec",
    "SimConfig",
    "TrajectoryState",
    "DiagnosticsRecord",
    "RunResult",
    "SimulationError",
    "generate_initial_condition",
    "initial_state",
    "step",
    "remap",
    "run",
    "save_checkpoint",
    "load_checkpoint",
    "enstrophy_residual",
]


class SimulationError(RuntimeError):
    """Numerical failure; carries the last good state and partial record when available."""

    def __init__(self, msg, state=None, record=None):
        super().__init__(msg)
        self.state = state
        self.record = record


@dataclass(frozen=True)
class InitialConditionSpec:
    """Initial vorticity and shear-average velocity.

    ``band`` is ((|alpha| min, |alpha| max), (|eta| min, |eta| max)) in physical
    wavenumbers; random coefficients there are windowed in y by a Gaussian of
    width ``envelope_width`` (default Ly/6) so the field stays away from the
    y-boundary. ``target_hlog_norm`` of None means epsilon0 * nu**beta.
    ``target_norm`` selects whether the target applies to the H^log norm or
    the plain L^2 norm. ``zero_mode_amplitude`` is the L^2_y norm of the fluctuating part of
    V_0^1; ``galilean_mean`` is its spatial mean.
    """

    kind: Literal["random_band", "single_mode", "from_checkpoint"] = "random_band"
    band: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 3.0), (0.0, 2.0))
    mode: tuple[int, float] = (1, 0.0)
    target_hlog_norm: float | None = None
    target_norm: Literal["hlog", "l2"] = "hlog"
    zero_mode_amplitude: float = 0.0
    galilean_mean: float = 0.0
    envelope_width: float | None = None
    spectral_slope: float = 0.0
    checkpoint_path: str | None = None


@dataclass(frozen=True)
class SimConfig:
    nu: float
    beta: float = 0.5
    epsilon0: float = 0.1
    ic: InitialConditionSpec = field(default_factory=InitialConditionSpec)
    dt: float = 0.05
    t_final: float = 10.0
    remap_interval: float | None = None
    grid: GridSpec = field(default_factory=lambda: make_grid(128, 128, 2 * math.pi))
    seed: int = 0
    nonlinear: bool = True
    allow_inviscid: bool = False
    record_interval: float | None = None
    checkpoint_interval: float | None = None
    cfl_max: float = 0.5
    cfl_action: Literal["reduce", "abort"] = "reduce"
    remap_loss_bound: float = 1e-10
    boundary_mass_limit: float | None = 1e-6
    store_fields: bool = False

    def __post_init__(self):
        if self.allow_inviscid:
            if not (0.0 <= self.nu < 1.0):
                raise ValueError(f"nu must lie in [0, 1) for self-tests, got {self.nu}")
        elif not (0.0 < self.nu < 1.0):
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.t_final < 0:
            raise ValueError("t_final must be >= 0")
        if self.remap_interval is not None and not self.remap_interval > 0:
            raise ValueError("remap_interval must be positive or None")
        if self.cfl_action not in ("reduce", "abort"):
            raise ValueError(f"unknown cfl_action {self.cfl_action!r}")

    @property
    def data_size(self) -> float:
        """epsilon0 * nu**beta."""
        return self.epsilon0 * self.nu**self.beta

    @property
    def record_every(self) -> int:
        """Steps between recorded samples (at least 16 per nu^(-1/3) by default)."""
        interval = self.record_interval
        if interval is None:
            tscale = self.nu ** (-1.0 / 3.0) if self.nu > 0 else 10.0
            interval = min(tscale / 16.0, 1.0)
        return max(1, int(round(interval / self.dt)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {"Nx": self.grid.Nx, "Ny": self.grid.Ny, "Ly": self.grid.Ly,
                     "dealias_fraction": self.grid.dealias_fraction}
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrajectoryState:
    time: float
    omega: SpectralField
    v0: np.ndarray
    step_count: int = 0
    cumulative_integrals: dict = field(default_factory=dict)
    dt: float = 0.0
    remapped: float = 0.0

    @property
    def offset(self) -> float:
        return self.omega.frame.offset


ACCUMULATORS = ("grad_l2_sq", "grad_hlog_sq", "dx_hlog", "dxv1_hlog_sq")


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------
def _zero_mode_profile(grid: GridSpec, sigma: float) -> np.ndarray:
    """Mean-free localized y-profile (Ricker wavelet) with unit L^2_y norm."""
    y = grid.y
    g = (1.0 - (y / sigma) ** 2) * np.exp(-0.5 * (y / sigma) ** 2)
    g -= g.mean()
    return g / np.sqrt(np.sum(g**2) * 2.0 * grid.Ly / grid.Ny)


def generate_initial_condition(spec: InitialConditionSpec, grid: GridSpec, seed: int,
                               nu: float = 1e-3, beta: float = 0.5, epsilon0: float = 0.1
                               ) -> tuple[SpectralField, np.ndarray]:
    """(omega_in in the stationary frame, V_0^1 on the y-grid), deterministic in ``seed``."""
    target = spec.target_hlog_norm
    if target is None:
        target = epsilon0 * nu**beta
    if not target > 0:
        raise ValueError("target H^log norm must be positive")
    if spec.kind == "from_checkpoint":
        if not spec.checkpoint_path:
            raise ValueError("from_checkpoint needs checkpoint_path")
        state = load_checkpoint(spec.checkpoint_path)
        return state.omega, state.v0

    sigma = spec.envelope_width if spec.envelope_width else grid.Ly / 6.0
    rng = np.random.default_rng(seed)
    alpha, eta = grid.alpha, grid.eta
    mask = grid.dealias_mask

    if spec.kind == "single_mode":
        a0, e0 = spec.mode
        ia = np.nonzero(np.isclose(alpha, a0))[0]
        ie = np.nonzero(np.isclose(eta, e0))[0]
        if a0 == 0 or ia.size == 0 or ie.size == 0 or not mask[ia[0], ie[0]]:
            raise ValueError(f"mode {spec.mode} is not a resolved nonzero x-mode on this grid")
        c = np.zeros(grid.shape, dtype=np.complex128)
        c[ia[0], ie[0]] = 1.0
        c = c + np.conj(np.roll(np.flip(c, (0, 1)), 1, (0, 1)))
        omega_n = c
    elif spec.kind == "random_band":
        (amin, amax), (emin, emax) = spec.band
        aa = np.abs(alpha)[:, None]
        ee = np.abs(eta)[None, :]
        sel = (aa >= amin) & (aa <= amax) & (ee >= emin) & (ee <= emax) & (aa > 0) & mask
        if not sel.any():
            raise ValueError(f"band {spec.band} selects no resolved nonzero modes")
        raw = _band_draw(rng, grid, amax, emax)
        k = np.sqrt(aa**2 + ee**2)
        amp = np.where(sel, np.maximum(k, 1.0) ** (-spec.spectral_slope), 0.0)
        c = enforce_hermitian(raw * amp)
        vals = _inverse_complex(c, grid).real * np.exp(-0.5 * (grid.y[None, :] / sigma) ** 2)
        omega_n = transform_forward(vals, grid).coeffs.copy()
        omega_n[0] = 0.0
        omega_n *= mask
    else:
        raise ValueError(f"unknown initial-condition kind {spec.kind!r}")

    v0 = spec.galilean_mean + spec.zero_mode_amplitude * _zero_mode_profile(grid, sigma)
    v0_hat = profile_to_hat(v0, grid) * mask[0]
    omega0_hat = -1j * eta * v0_hat
    z2 = grid.area * np.sum(np.abs(omega0_hat) ** 2)
    if z2 >= target**2:
        raise ValueError("zero-mode vorticity alone exceeds the target H^log norm")
    if spec.target_norm not in ("hlog", "l2"):
        raise ValueError(f"unknown target norm {spec.target_norm!r}")
    w = log_weight(alpha)[:, None] if spec.target_norm == "hlog" else 1.0
    n2 = grid.area * np.sum((w * np.abs(omega_n)) ** 2)
    omega_n *= math.sqrt(target**2 - z2) / math.sqrt(n2)
    coeffs = omega_n.copy()
    coeffs[0] = omega0_hat
    return SpectralField(grid, coeffs, Frame.stationary()), hat_to_profile(v0_hat, grid)


def _band_draw(rng: np.random.Generator, grid: GridSpec, amax: float, emax: float) -> np.ndarray:
    """Gaussian coefficients indexed by integer mode labels, so a seed gives the same
    field on every grid that resolves the band."""
    na = min(int(math.floor(amax)), grid.Nx // 2)
    ne = min(int(math.floor(emax / grid.deta + 1e-9)), grid.Ny // 2)
    ia = np.arange(-na, na + 1)
    ie = np.arange(-ne, ne + 1)
    shape = (ia.size, ie.size)
    small = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ka = np.abs(ia) < (grid.Nx + 1) // 2
    ke = np.abs(ie) < (grid.Ny + 1) // 2
    raw = np.zeros(grid.shape, dtype=np.complex128)
    raw[np.ix_(np.mod(ia[ka], grid.Nx), np.mod(ie[ke], grid.Ny))] = small[np.ix_(ka, ke)]
    return raw


def initial_state(config: SimConfig) -> TrajectoryState:
    omega, v0 = generate_initial_condition(config.ic, config.grid, config.seed, config.nu,
                                           config.beta, config.epsilon0)
    if omega.frame.kind == "stationary":
        omega = SpectralField(omega.grid, omega.coeffs, Frame.sheared(0.0))
    acc = {k: 0.0 for k in ACCUMULATORS}
    return TrajectoryState(0.0, omega, np.asarray(v0, dtype=float), 0, acc, config.dt, 0.0)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------
class _Workspace:
    """Per-grid constant arrays reused across steps."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.a = grid.alpha[:, None]
        self.mask = grid.dealias_mask
        self.mask_y = grid.dealias_mask[0]
        self.phase = grid.y_phase
        self.norm2 = grid.Nx * grid.Ny
        self.eta2 = grid.eta**2


_WS: dict = {}


def _workspace(grid: GridSpec) -> _Workspace:
    ws = _WS.get(grid)
    if ws is None:
        ws = _WS[grid] = _Workspace(grid)
    return ws


def _rhs(ws: _Workspace, W: np.ndarray, v0h: np.ndarray, s: float):
    """Nonlinear tendencies (-(V.grad omega)^, -(V_!=.grad V^1_!=)_0^) and the sheared-frame CFL speeds."""
    g = ws.grid
    a = ws.a
    ky = g.eta[None, :] - a * s
    psi = stream_function(W, g, s)
    psi[0] = 0.0
    v1n = 1j * ky * psi
    v2n = -1j * a * psi
    vel = v1n + 1j * v2n
    vel[0] += v0h
    pv = _inverse_complex(vel, g)
    pg = _inverse_complex(1j * a * W - ky * W, g)
    pu = _inverse_complex(1j * a * v1n - ky * v1n, g)
    prod = kernels.packed_dot(np.ascontiguousarray(pv), np.ascontiguousarray(pg))
    fprod = kernels.packed_dot(np.ascontiguousarray(pv), np.ascontiguousarray(pu))
    nhat = sfft.fft2(prod) / ws.norm2 * ws.phase[None, :]
    nhat *= ws.mask
    fhat = sfft.fft(fprod.mean(axis=0)) / g.Ny * ws.phase
    fhat *= ws.mask_y
    ux = np.abs(pv.real - s * pv.imag).max()
    uy = np.abs(pv.imag).max()
    return -nhat, -fhat, (ux, uy)


def cfl_number(grid: GridSpec, dt: float, speeds) -> float:
    ux, uy = speeds
    return dt * (ux * grid.Nx / (2 * math.pi) + uy * grid.Ny / (2 * grid.Ly))


def _grad_sums(W: np.ndarray, grid: GridSpec, s: float) -> dict:
    a = grid.alpha[:, None]
    ky = grid.eta[None, :] - a * s
    kappa = a * a + ky * ky
    c2 = np.abs(W) ** 2
    cn2 = c2.copy()
    cn2[0] = 0.0
    w2 = log_weight(grid.alpha)[:, None] ** 2
    area = grid.area
    v1 = np.abs(ky * stream_function(W, grid, s)) ** 2
    v1[0] = 0.0
    return {
        "grad_l2_sq": area * float(np.sum(kappa * c2)),
        "grad_hlog_sq": area * float(np.sum(w2 * kappa * cn2)),
        "dx_hlog": math.sqrt(area * float(np.sum(w2 * a * a * cn2))),
        "dxv1_hlog_sq": area * float(np.sum(w2 * a * a * v1)),
    }


def step(state: TrajectoryState, config: SimConfig, dt: float | None = None) -> TrajectoryState:
    """Advance by one step of size ``dt`` (default ``state.dt`` or ``config.dt``)."""
    h = float(dt if dt is not None else (state.dt or config.dt))
    g = config.grid
    ws = _workspace(g)
    nu = config.nu
    s = state.offset
    W = np.asarray(state.omega.coeffs)
    v0h = profile_to_hat(state.v0, g) * ws.mask_y

    Ea = kernels.shear_factor(g.alpha, g.eta, s, 0.5 * h, nu)
    Eb = kernels.shear_factor(g.alpha, g.eta, s + 0.5 * h, 0.5 * h, nu)
    E = Ea * Eb
    ha = np.exp(-nu * ws.eta2 * 0.5 * h)
    hfull = ha * ha

    if config.nonlinear:
        k1, f1, speeds = _rhs(ws, W, v0h, s)
        c = cfl_number(g, h, speeds)
        if c > config.cfl_max:
            raise _CflViolation(c)
        k2, f2, _ = _rhs(ws, Ea * (W + 0.5 * h * k1), ha * (v0h + 0.5 * h * f1), s + 0.5 * h)
        k3, f3, _ = _rhs(ws, Ea * W + 0.5 * h * k2, ha * v0h + 0.5 * h * f2, s + 0.5 * h)
        k4, f4, _ = _rhs(ws, E * W + h * Eb * k3, hfull * v0h + h * ha * f3, s + h)
        Wn = E * (W + h / 6.0 * k1) + h / 3.0 * Eb * (k2 + k3) + h / 6.0 * k4
        vn = hfull * (v0h + h / 6.0 * f1) + h / 3.0 * ha * (f2 + f3) + h / 6.0 * f4
        Wn = enforce_hermitian(Wn) * ws.mask
        Wn[0, 0] = 0.0
    else:
        Wn = E * W
        vn = hfull * v0h

    if not (np.all(np.isfinite(Wn)) and np.all(np.isfinite(vn))):
        raise SimulationError(f"non-finite state at t={state.time + h:.6g}", state=state)

    acc = dict(state.cumulative_integrals)
    before = _grad_sums(W, g, s)
    after = _grad_sums(Wn, g, s + h)
    for k in ACCUMULATORS:
        acc[k] = acc.get(k, 0.0) + 0.5 * h * (before[k] + after[k])

    return TrajectoryState(
        time=state.time + h,
        omega=SpectralField(g, Wn, Frame.sheared(s + h)),
        v0=hat_to_profile(vn, g),
        step_count=state.step_count + 1,
        cumulative_integrals=acc,
        dt=h,
        remapped=state.remapped,
    )


class _CflViolation(Exception):
    def __init__(self, cfl):
        super().__init__(f"CFL number {cfl:.3g} above limit")
        self.cfl = cfl


def remap(state: TrajectoryState, interval: float, loss_bound: float = 1e-10) -> tuple[TrajectoryState, float]:
    """Relabel eta -> eta - alpha*interval and lower the frame offset by ``interval``.

    The physical field is unchanged except for content pushed off the grid;
    the lost enstrophy fraction is returned and checked against ``loss_bound``.
    """
    if interval == 0:
        return state, 0.0
    if interval > state.offset + 1e-12:
        raise ValueError("cannot remap past the stationary frame")
    new, lost = shift_frame(state.omega, -interval)
    if lost > loss_bound:
        raise SimulationError(f"remap truncation loss {lost:.3g} exceeds bound {loss_bound:.3g}", state=state)
    if new.frame.kind != "sheared":
        new = SpectralField(new.grid, new.coeffs, Frame.sheared(new.frame.offset))
    out = copy.copy(state)
    out.omega = new
    out.remapped = state.remapped + interval
    out.cumulative_integrals = dict(state.cumulative_integrals)
    return out, lost


# ---------------------------------------------------------------------------
# runs and records
# ---------------------------------------------------------------------------
RECORD_COLUMNS = ("time", "step", "frame_offset") + SNAPSHOT_COLUMNS


@dataclass
class DiagnosticsRecord:
    nu: float
    data_size: float
    columns: dict = field(default_factory=lambda: {k: [] for k in RECORD_COLUMNS})
    step_time: list = field(default_factory=list)
    step_grad_sq: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    grid: GridSpec | None = None
    events: list = field(default_factory=list)

    def append(self, state: TrajectoryState, snap: dict):
        self.columns["time"].append(state.time)
        self.columns["step"].append(state.step_count)
        self.columns["frame_offset"].append(state.offset)
        for k in SNAPSHOT_COLUMNS:
            self.columns[k].append(snap[k])

    def array(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.array("time")

    def __len__(self):
        return len(self.columns["time"])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_COLUMNS)
            for i in range(len(self)):
                w.writerow([repr(float(self.columns[k][i])) if k != "step" else int(self.columns[k][i])
                            for k in RECORD_COLUMNS])

    @classmethod
    def read_csv(cls, path, nu: float = math.nan, data_size: float = math.nan) -> "DiagnosticsRecord":
        rec = cls(nu, data_size)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                for k in RECORD_COLUMNS:
                    rec.columns[k].append(int(row[k]) if k == "step" else float(row[k]))
        return rec


@dataclass
class RunResult:
    record: DiagnosticsRecord
    state: TrajectoryState
    checkpoint: Path | None = None


Observer = Callable[[TrajectoryState, dict], None]


def _state_snapshot(state: TrajectoryState) -> dict:
    g = state.omega.grid
    v0h = profile_to_hat(state.v0, g)
    return snapshot(np.asarray(state.omega.coeffs), g, state.offset, v0h)


def save_checkpoint(path, state: TrajectoryState, config: SimConfig | None = None) -> Path:
    """Binary field file plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    write_field(path, state.omega, state.time)
    side = {
        "config_hash": config.hash() if config is not None else None,
        "time": state.time,
        "step": state.step_count,
        "dt": state.dt,
        "remapped": state.remapped,
        "frame_offset": state.offset,
        "dealias_fraction": state.omega.grid.dealias_fraction,
        "accumulators": state.cumulative_integrals,
        "v0": [float(x) for x in state.v0],
    }
    Path(str(path) + ".json").write_text(json.dumps(side, sort_keys=True, indent=1))
    return path


def load_checkpoint(path) -> TrajectoryState:
    path = Path(path)
    sidecar = Path(str(path) + ".json")
    side = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    omega, t = read_field(path, side.get("dealias_fraction", 2.0 / 3.0))
    if omega.frame.kind == "stationary":
        omega = SpectralField(omega.grid, omega.coeffs, Frame.sheared(0.0))
    v0 = np.asarray(side.get("v0", np.zeros(omega.grid.Ny)), dtype=float)
    return TrajectoryState(t, omega, v0, int(side.get("step", 0)), dict(side.get("accumulators", {})),
                           float(side.get("dt", 0.0)), float(side.get("remapped", 0.0)))


def run(config: SimConfig, observers: Sequence[Observer] = (), outdir=None,
        state: TrajectoryState | None = None) -> RunResult:
    """Integrate to ``config.t_final``, sampling diagnostics every ``config.record_every`` steps.

    With ``outdir`` the record (diagnostics.csv) and final checkpoint
    (checkpoint.bin) are written there. On a numerical failure the last good
    state is checkpointed before :class:`SimulationError` propagates.
    """
    outdir = Path(outdir) if outdir is not None else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
    if state is None:
        state = initial_state(config)
    record = DiagnosticsRecord(config.nu, config.data_size, grid=config.grid)
    g = config.grid

    def observe(st):
        snap = _state_snapshot(st)
        if (config.boundary_mass_limit is not None and snap["boundary_mass"] > config.boundary_mass_limit):
            raise SimulationError(
                f"boundary mass {snap['boundary_mass']:.3g} above {config.boundary_mass_limit:.3g} at t={st.time:.4g}",
                state=st, record=record)
        record.append(st, snap)
        if config.store_fields:
            record.fields.append((st.time, st.offset, np.array(st.omega.coeffs), profile_to_hat(st.v0, g)))
        for ob in observers:
            ob(st, snap)

    def grad_sq(st):
        return _grad_sums(np.asarray(st.omega.coeffs), g, st.offset)["grad_l2_sq"]

    def fail(err: SimulationError, last: TrajectoryState):
        err.record = record
        err.state = last
        if outdir is not None:
            try:
                save_checkpoint(outdir / "checkpoint.bin", last, config)
                record.write_csv(outdir / "diagnostics.csv")
            except OSError as io_err:  # keep the numerical error primary
                log.error("could not write partial results: %s", io_err)
        raise err

    dt = config.dt
    state.dt = dt
    observe(state)
    record.step_time.append(state.time)
    record.step_grad_sq.append(grad_sq(state))
    every = config.record_every
    ck_every = (max(1, int(round(config.checkpoint_interval / dt)))
                if config.checkpoint_interval else None)
    eps = 1e-12 * max(1.0, config.t_final)
    since_record = 0
    while state.time < config.t_final - eps:
        h = min(dt, config.t_final - state.time)
        try:
            new = step(state, config, h)
        except _CflViolation as viol:
            if config.cfl_action == "abort":
                fail(SimulationError(str(viol)), state)
            dt *= 0.5
            every *= 2
            record.events.append({"time": state.time, "event": "dt_reduced", "dt": dt, "cfl": viol.cfl})
            log.warning("t=%.4g: %s; dt -> %.3g", state.time, viol, dt)
            if dt < 1e-8:
                fail(SimulationError("dt underflow after repeated CFL reductions"), state)
            continue
        except SimulationError as err:
            fail(err, state)
        state = new
        state.dt = dt
        record.step_time.append(state.time)
        record.step_grad_sq.append(grad_sq(state))
        since_record += 1
        if config.remap_interval is not None and state.offset >= config.remap_interval - 1e-12:
            try:
                state, lost = remap(state, config.remap_interval, config.remap_loss_bound)
            except SimulationError as err:
                fail(err, state)
            record.events.append({"time": state.time, "event": "remap", "lost": lost})
        done = state.time >= config.t_final - eps
        if since_record >= every or done:
            try:
                observe(state)
            except SimulationError as err:
                fail(err, state)
            since_record = 0
        if ck_every and outdir is not None and state.step_count % ck_every == 0:
            save_checkpoint(outdir / "checkpoint.bin", state, config)

    ckpt = None
    if outdir is not None:
        try:
            record.write_csv(outdir / "diagnostics.csv")
            ckpt = save_checkpoint(outdir / "checkpoint.bin", state, config)
        except OSError as err:
            raise SimulationError(f"could not write results to {outdir}: {err}", state=state, record=record) from err
    return RunResult(record, state, ckpt)


def enstrophy_residual(record: DiagnosticsRecord) -> tuple[np.ndarray, np.ndarray]:
    """(times, residual/||omega_in||^2) of ||omega(t)||^2 + 2 nu int ||grad omega||^2 - ||omega_in||^2.

    The dissipation integral uses cumulative Simpson quadrature on the per-step samples.
    """
    t = np.asarray(record.step_time)
    gsq = np.asarray(record.step_grad_sq)
    if t.size < 2:
        return t[:1], np.zeros(t[:1].shape)
    diss = np.concatenate([[0.0], integrate.cumulative_simpson(gsq, x=t)])
    l2 = np.interp(t, record.times, record.array("l2"))
    on_record = np.isin(t, record.times)
    e0 = record.array("l2")[0] ** 2
    res = (l2**2 + 2.0 * record.nu * diss - e0) / e0
    return t[on_record], res[on_record]

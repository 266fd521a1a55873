"""
Batch experiments: half-life sweeps, threshold scans, linear constant tables,
regularization checks and the Littlewood-Paley suite.

Every nonlinear run is identified by a content hash of its configuration.
Finished runs are appended to ``<outdir>/<scan-id>/journal.jsonl``; re-running
the same plan skips every hash already in the journal, so an interrupted scan
resumes with exactly the missing runs. Runs execute on a process pool whose
width is read from the ``COUETTE_WORKERS`` environment variable (default 1).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import lp
from .diagnostics import (
    bootstrap_history,
    budgets_from_linear,
    classify_run,
    inviscid_damping_integrals,
    run_summary,
)
from .functionals import wavenumbers
from .linear import evaluate_linear_estimates, linear_half_life, write_linear_reports
from .rates import fit_decay
from .solver import InitialConditionSpec, SimConfig, SimulationError, generate_initial_condition, run
from .spectral import Frame, GridSpec, SpectralField, make_grid

log = logging.getLogger(__name__)

__all__ = [
    "PLAN_KINDS",
    "ExperimentPlan",
    "ScanResult",
    "run_halflife_sweep",
    "run_threshold_scan",
    "run_linear_constants",
    "run_regularization_check",
    "run_lp_suite",
    "run_plan",
    "emit_plot_data",
    "spectral_tail",
    "time_log_weight",
    "worker_count",
]

PLAN_KINDS = ("halflife_sweep", "threshold_scan", "linear_constants", "regularization_check", "lp_suite")

_OPTION_DEFAULTS = {
    "horizon_halflives": 2.0,
    "resolution_check": True,
    "tail_tolerance": 1e-8,
    "fine_nu": 1e-3,
    "fine_nx": 512,
    "n_windows": 16,
    "budget_factor": 8.0,
    "fit_window": (1e-6, 1e-1),
    "linear_quadrature_points": 513,
    "transition_factor": 10.0,
    "eps_list": (0.1, 0.5),
    "reg_horizon": 1.0,
    "reg_samples": 64,
    "lp_samples": 1000,
    "lp_seed": 0,
    "lp_refine": True,
}


def worker_count() -> int:
    raw = os.environ.get("COUETTE_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"COUETTE_WORKERS must be an integer, got {raw!r}") from None


def time_log_weight(nu: float, t: float) -> float:
    """ln((nu t)^-1 + e)."""
    return math.log(1.0 / (nu * t) + math.e)


def spectral_tail(coeffs: np.ndarray, grid: GridSpec, shell: float = 0.75) -> float:
    """Largest coefficient modulus outside ``shell`` times the dealiasing cutoff, relative to the peak."""
    mag = np.abs(coeffs)
    peak = float(mag.max())
    if peak == 0:
        return 0.0
    acut = grid.dealias_fraction * grid.Nx / 2
    ecut = grid.dealias_fraction * grid.Ny / 2 * grid.deta
    outer = (np.abs(grid.alpha)[:, None] > shell * acut) | (np.abs(grid.eta)[None, :] > shell * ecut)
    return float(mag[outer].max() / peak) if outer.any() else 0.0


# ---------------------------------------------------------------------------
# plans and results
# ---------------------------------------------------------------------------
@dataclass
class ExperimentPlan:
    kind: str
    base: SimConfig
    nus: list = field(default_factory=lambda: [1e-2, 3e-3, 1e-3, 3e-4])
    betas: list = field(default_factory=lambda: [0.5])
    epsilons: list = field(default_factory=lambda: [0.1])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    outdir: Path = Path("runs")
    scan_id: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ValueError(f"unknown plan kind {self.kind!r}; expected one of {PLAN_KINDS}")
        self.outdir = Path(self.outdir)
        self.options = {**_OPTION_DEFAULTS, **self.options}
        if self.kind != "lp_suite" and not (self.nus and self.seeds):
            raise ValueError("parameter grid is empty")
        if self.kind in ("halflife_sweep", "threshold_scan") and not (self.betas and self.epsilons):
            raise ValueError("parameter grid is empty")

    def opt(self, key):
        return self.options[key]

    def grid_points(self) -> list[tuple]:
        if self.kind in ("halflife_sweep", "threshold_scan"):
            return [(nu, b, e, s) for nu in self.nus for b in self.betas for e in self.epsilons for s in self.seeds]
        if self.kind in ("linear_constants", "regularization_check"):
            return [(nu, s) for nu in self.nus for s in self.seeds]
        return list(lp.INEQUALITY_IDS)

    @property
    def total_runs(self) -> int:
        return len(self.grid_points())

    def identity(self) -> str:
        blob = json.dumps({"kind": self.kind, "base": self.base.to_dict(), "nus": self.nus, "betas": self.betas,
                           "epsilons": self.epsilons, "seeds": self.seeds, "options": self.options},
                          sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def scan_dir(self) -> Path:
        return self.outdir / (self.scan_id or f"{self.kind}-{self.identity()}")


@dataclass
class ScanResult:
    kind: str
    scan_id: str
    rows: list
    fits: dict = field(default_factory=dict)
    planned: int = 0

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.get("status") != "ok"]

    @property
    def complete(self) -> bool:
        return not self.failures and len(self.rows) == self.planned

    def to_json(self) -> str:
        return json.dumps(_plain(asdict(self)), sort_keys=True, indent=1)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def read(cls, path) -> "ScanResult":
        d = json.loads(Path(path).read_text())
        return cls(d["kind"], d["scan_id"], d["rows"], d.get("fits", {}), d.get("planned", len(d["rows"])))


def _plain(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _num(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# journal
# ---------------------------------------------------------------------------
def _read_journal(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                log.warning("skipping corrupt journal line in %s", path)
                continue
            done[row["run_hash"]] = row
    return done


def _append_journal(path: Path, row: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(_plain(row), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _run_hash(config: SimConfig, kind: str, options: dict) -> str:
    blob = json.dumps({"config": config.to_dict(), "kind": kind, "options": options}, sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _execute_all(tasks: list[dict], fn, journal: Path) -> list[dict]:
    """Run the tasks not yet journaled; return every row in task order."""
    done = _read_journal(journal)
    todo = [t for t in tasks if t["run_hash"] not in done]
    log.info("%d planned, %d already journaled, %d to run", len(tasks), len(tasks) - len(todo), len(todo))
    workers = min(worker_count(), max(1, len(todo)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(fn, todo):
                done[row["run_hash"]] = row
                _append_journal(journal, row)
    else:
        for task in todo:
            row = fn(task)
            done[row["run_hash"]] = row
            _append_journal(journal, row)
    return [done[t["run_hash"]] for t in tasks]


def _failure_row(task: dict, status: str, message: str) -> dict:
    return {**task["params"], "run_hash": task["run_hash"], "status": status, "message": message}


# ---------------------------------------------------------------------------
# nonlinear runs
# ---------------------------------------------------------------------------
def _resolution_for(base: SimConfig, nu: float, options: dict) -> GridSpec:
    g = base.grid
    if nu < options["fine_nu"] and options["fine_nx"] > g.Nx:
        r = options["fine_nx"] / g.Nx
        return make_grid(int(options["fine_nx"]), int(round(g.Ny * r)), g.Ly, g.dealias_fraction)
    return g


def _nonzero_part(omega: SpectralField) -> SpectralField:
    c = np.array(omega.coeffs)
    c[0] = 0.0
    return SpectralField(omega.grid, c, Frame.sheared(0.0))


def _nonlinear_task(task: dict) -> dict:
    """Worker: one nonlinear run with linear budgets, fit and classification."""
    cfg: SimConfig = task["config"]
    opts: dict = task["options"]
    run_dir = Path(task["run_dir"])
    try:
        omega, _ = generate_initial_condition(cfg.ic, cfg.grid, cfg.seed, cfg.nu, cfg.beta, cfg.epsilon0)
        tail = spectral_tail(np.asarray(omega.coeffs), cfg.grid)
        if opts["resolution_check"] and tail > opts["tail_tolerance"]:
            return _failure_row(task, "under_resolved",
                                f"initial spectral tail {tail:.3g} above {opts['tail_tolerance']:.3g}")
        om_n = _nonzero_part(omega)
        t_half_lin = linear_half_life(om_n, cfg.nu)
        if task["auto_horizon"]:
            cfg = replace(cfg, t_final=float(opts["horizon_halflives"] * t_half_lin))
        reports = evaluate_linear_estimates(om_n, cfg.nu, quadrature_points=int(opts["linear_quadrature_points"]),
                                            window=tuple(opts["fit_window"]))
        budgets = budgets_from_linear(reports, opts["budget_factor"])
        c1 = reports[0].fitted_c
        result = run(cfg, outdir=run_dir)
    except SimulationError as err:
        return _failure_row(task, "numerical_failure", str(err))
    except Exception as err:  # a single bad run must not take down the batch
        log.exception("run %s failed", task["run_hash"])
        return _failure_row(task, "error", f"{type(err).__name__}: {err}")

    rec = result.record
    t = rec.times
    hl = rec.array("nonzero_hlog")
    fit = fit_decay(t, hl, cfg.nu, tuple(opts["fit_window"]))
    hist = bootstrap_history(rec, int(opts["n_windows"]), c1)
    cls = classify_run(hist, budgets, rec, horizon_factor=opts["transition_factor"])
    fractions = {k: cls.max_ratios[k] / budgets[k] for k in budgets if budgets[k] > 0}
    final_tail = spectral_tail(np.asarray(result.state.omega.coeffs), cfg.grid)
    inviscid = inviscid_damping_integrals(rec)
    z0 = rec.array("zero_l2")
    row = {
        **task["params"],
        "run_hash": task["run_hash"],
        "status": "ok",
        "message": "",
        "nx": cfg.grid.Nx,
        "ny": cfg.grid.Ny,
        "t_final": cfg.t_final,
        "classification": cls.label(),
        "stable": cls.kind == "stable",
        "c_fit": fit.c_fit,
        "fit_status": fit.status,
        "super_exponential": fit.super_exponential,
        "half_life": fit.half_life,
        "linear_half_life": t_half_lin,
        "linear_c_fit": c1,
        "max_ratios": cls.max_ratios,
        "budgets": budgets,
        "max_budget_fraction": max(fractions.values()) if fractions else 0.0,
        "linear_ratios": {r.quantity: r.ratio for r in reports},
        "inviscid": inviscid,
        "zero_mode_growth": float(z0.max() / rec.array("l2")[0]) if rec.array("l2")[0] > 0 else 0.0,
        "final_tail": final_tail,
        "tail_flag": final_tail > opts["tail_tolerance"],
        "events": len(rec.events),
    }
    summary = run_summary(rec, fit, cls, {"config": cfg.to_dict(), "run_hash": task["run_hash"],
                                          "budgets": budgets, "inviscid": inviscid,
                                          "linear_half_life": t_half_lin})
    (run_dir / "summary.json").write_text(json.dumps(_plain(summary), sort_keys=True, indent=1) + "\n")
    return _plain(row)


def _nonlinear_tasks(plan: ExperimentPlan, auto_horizon: bool) -> list[dict]:
    tasks = []
    for nu, beta, eps, seed in plan.grid_points():
        cfg = replace(plan.base, nu=nu, beta=beta, epsilon0=eps, seed=seed,
                      grid=_resolution_for(plan.base, nu, plan.options))
        h = _run_hash(cfg, plan.kind, plan.options)
        tasks.append({"config": cfg, "options": plan.options, "run_hash": h, "auto_horizon": auto_horizon,
                      "run_dir": str(plan.scan_dir / h),
                      "params": {"nu": nu, "beta": beta, "epsilon0": eps, "seed": seed}})
    return tasks


def _finish(plan: ExperimentPlan, rows: list, fits: dict) -> ScanResult:
    res = ScanResult(plan.kind, plan.scan_dir.name, rows, fits, plan.total_runs)
    res.write(plan.scan_dir / "result.json")
    return res


def run_halflife_sweep(plan: ExperimentPlan) -> ScanResult:
    """Half-life of ||ln(e+|D_x|) omega_!=|| per nu, and the fitted exponent of half-life ~ nu^p.

    Only runs that finish and classify stable enter the fit; the others are
    kept in the rows with ``excluded`` set.
    """
    nus = sorted(set(plan.nus))
    if len(nus) < 2 or math.log10(max(nus) / min(nus)) < 1.5:
        raise ValueError("a half-life sweep needs nu values spanning at least 1.5 decades")
    log.info("half-life sweep: %d runs", plan.total_runs)
    plan.scan_dir.mkdir(parents=True, exist_ok=True)
    rows = _execute_all(_nonlinear_tasks(plan, True), _nonlinear_task, plan.scan_dir / "journal.jsonl")
    for r in rows:
        hl = _num(r.get("half_life", math.nan)) if r["status"] == "ok" else math.nan
        r["excluded"] = not (r["status"] == "ok" and r.get("stable") and math.isfinite(hl) and hl > 0)
    return _finish(plan, rows, {"halflife_vs_nu": fit_power_law(rows)})


def fit_power_law(rows: list, x: str = "nu", y: str = "half_life", confidence: float = 0.95) -> dict:
    """Least squares of log y against log x over non-excluded rows, with a t-based confidence interval."""
    pts = [(_num(r[x]), _num(r[y])) for r in rows if not r.get("excluded") and r.get("status") == "ok"]
    pts = [(a, b) for a, b in pts if a > 0 and b > 0 and math.isfinite(b)]
    if len({a for a, _ in pts}) < 2:
        return {"slope": math.nan, "intercept": math.nan, "stderr": math.nan, "ci": [math.nan, math.nan],
                "points": len(pts)}
    lx = np.log([a for a, _ in pts])
    ly = np.log([b for _, b in pts])
    lr = stats.linregress(lx, ly)
    dof = len(pts) - 2
    half = float(stats.t.ppf(0.5 + confidence / 2, dof) * lr.stderr) if dof > 0 else math.nan
    return {"slope": float(lr.slope), "intercept": float(lr.intercept), "stderr": float(lr.stderr),
            "ci": [float(lr.slope - half), float(lr.slope + half)], "points": len(pts)}


def run_threshold_scan(plan: ExperimentPlan) -> ScanResult:
    """Classification over (nu, beta, epsilon0, seed) at a fixed horizon (``base.t_final``)."""
    log.info("threshold scan: %d runs", plan.total_runs)
    plan.scan_dir.mkdir(parents=True, exist_ok=True)
    rows = _execute_all(_nonlinear_tasks(plan, False), _nonlinear_task, plan.scan_dir / "journal.jsonl")
    thresholds = {}
    for nu in plan.nus:
        for beta in plan.betas:
            best = None
            for eps in sorted(plan.epsilons):
                sub = [r for r in rows if r["nu"] == nu and r["beta"] == beta and r["epsilon0"] == eps]
                if sub and all(r["status"] == "ok" and r.get("stable") for r in sub):
                    best = eps
            thresholds[f"nu={nu!r},beta={beta!r}"] = best
    return _finish(plan, rows, {"largest_stable_epsilon0": thresholds})


# ---------------------------------------------------------------------------
# linear constants
# ---------------------------------------------------------------------------
def run_linear_constants(plan: ExperimentPlan) -> ScanResult:
    """The eight linear-estimate ratios for the plan's initial data at each nu and seed."""
    plan.scan_dir.mkdir(parents=True, exist_ok=True)
    rows, reports_all = [], []
    for nu, seed in plan.grid_points():
        cfg = replace(plan.base, nu=nu, seed=seed, grid=_resolution_for(plan.base, nu, plan.options))
        base = {"nu": nu, "seed": seed, "run_hash": _run_hash(cfg, plan.kind, plan.options)}
        try:
            omega, _ = generate_initial_condition(cfg.ic, cfg.grid, seed, nu, cfg.beta, cfg.epsilon0)
            reps = evaluate_linear_estimates(_nonzero_part(omega), nu,
                                             quadrature_points=int(plan.opt("linear_quadrature_points")),
                                             window=tuple(plan.opt("fit_window")))
        except Exception as err:
            rows.append({**base, "status": "error", "message": f"{type(err).__name__}: {err}"})
            continue
        reports_all.extend(reps)
        for r in reps:
            rows.append({**base, "status": "ok", "message": r.note, "estimate_id": r.quantity, "value": r.value,
                         "ratio": r.ratio, "fitted_c": r.fitted_c, "truncated": r.truncated})
    write_linear_reports(plan.scan_dir / "linear_constants.csv", reports_all)
    spread = {}
    for qid in {r["estimate_id"] for r in rows if r["status"] == "ok"}:
        vals = [r["ratio"] for r in rows if r.get("estimate_id") == qid]
        spread[qid] = max(vals) / min(vals) if min(vals) > 0 else math.inf
    res = ScanResult(plan.kind, plan.scan_dir.name, _plain(rows), _plain({"ratio_spread": spread}), len(rows))
    res.write(plan.scan_dir / "result.json")
    return res


# ---------------------------------------------------------------------------
# regularization
# ---------------------------------------------------------------------------
def _full_norms(coeffs: np.ndarray, grid: GridSpec, s: float, eps_list) -> dict:
    _, _, kappa = wavenumbers(grid, s)
    k = np.sqrt(kappa)
    c2 = np.abs(coeffs) ** 2
    out = {"l2": math.sqrt(grid.area * float(c2.sum())),
           "log": math.sqrt(grid.area * float(np.sum(np.log(k + math.e) ** 2 * c2)))}
    for e in eps_list:
        out[f"eps={e!r}"] = math.sqrt(grid.area * float(np.sum(k ** (2 * e) * c2)))
    return out


def _regularization_task(task: dict) -> dict:
    cfg: SimConfig = task["config"]
    opts = task["options"]
    eps_list = list(opts["eps_list"])
    try:
        omega, _ = generate_initial_condition(cfg.ic, cfg.grid, cfg.seed, cfg.nu, cfg.beta, cfg.epsilon0)
        n_in = _full_norms(np.asarray(omega.coeffs), cfg.grid, 0.0, eps_list)["l2"]
        series = []

        def observer(state, snap):
            if state.time > 0:
                series.append((state.time, _full_norms(np.asarray(state.omega.coeffs), cfg.grid,
                                                       state.offset, eps_list)))

        result = run(cfg, observers=[observer], outdir=task["run_dir"])
    except SimulationError as err:
        return _failure_row(task, "numerical_failure", str(err))
    except Exception as err:
        log.exception("run %s failed", task["run_hash"])
        return _failure_row(task, "error", f"{type(err).__name__}: {err}")
    nu = cfg.nu
    t = [s[0] for s in series]
    log_ratio = [n["log"] / (time_log_weight(nu, ti) * n_in) for ti, n in series]
    eps_ratio = {f"{e!r}": [n[f"eps={e!r}"] * (ti * nu) ** (e / 2) / n_in for ti, n in series] for e in eps_list}
    final_tail = spectral_tail(np.asarray(result.state.omega.coeffs), cfg.grid)
    row = {
        **task["params"],
        "run_hash": task["run_hash"],
        "status": "ok",
        "message": "",
        "omega_in_l2": n_in,
        "sup_log_ratio": max(log_ratio),
        "sup_eps_ratio": {k: max(v) for k, v in eps_ratio.items()},
        "times": t,
        "log_ratio": log_ratio,
        "eps_ratio": eps_ratio,
        "final_tail": final_tail,
        "under_resolved": final_tail > opts["tail_tolerance"],
    }
    (Path(task["run_dir"]) / "summary.json").write_text(
        json.dumps(_plain({k: v for k, v in row.items() if k not in ("times", "log_ratio", "eps_ratio")}),
                   sort_keys=True, indent=1) + "\n")
    return _plain(row)


def regularization_config(base: SimConfig, nu: float, seed: int, horizon: float, samples: int) -> SimConfig:
    """Rough L^2 data filling the resolved band, with ||omega_in||_L2 = nu^(1/2)/|ln nu|."""
    g = base.grid
    amax = g.dealias_fraction * g.Nx / 2
    emax = g.dealias_fraction * g.Ny / 2 * g.deta
    ic = InitialConditionSpec(kind="random_band", band=((1.0, amax), (0.0, emax)),
                              target_hlog_norm=math.sqrt(nu) / abs(math.log(nu)), target_norm="l2",
                              spectral_slope=1.0, envelope_width=base.ic.envelope_width)
    dt = min(base.dt, horizon / (4 * samples))
    return replace(base, nu=nu, seed=seed, ic=ic, t_final=horizon, dt=dt, record_interval=horizon / samples,
                   boundary_mass_limit=None)


def run_regularization_check(plan: ExperimentPlan) -> ScanResult:
    """Sup over t in (0, T] of the log-smoothing and H^eps-smoothing ratios, per nu."""
    plan.scan_dir.mkdir(parents=True, exist_ok=True)
    T = float(plan.opt("reg_horizon"))
    tasks = []
    for nu, seed in plan.grid_points():
        cfg = regularization_config(plan.base, nu, seed, T, int(plan.opt("reg_samples")))
        h = _run_hash(cfg, plan.kind, plan.options)
        tasks.append({"config": cfg, "options": plan.options, "run_hash": h, "run_dir": str(plan.scan_dir / h),
                      "params": {"nu": nu, "seed": seed}})
    rows = _execute_all(tasks, _regularization_task, plan.scan_dir / "journal.jsonl")
    ok = [r for r in rows if r["status"] == "ok"]
    per_nu: dict = {}
    for r in ok:
        d = per_nu.setdefault(repr(r["nu"]), {"log": 0.0})
        d["log"] = max(d["log"], _num(r["sup_log_ratio"]))
        for k, v in r["sup_eps_ratio"].items():
            d[f"eps={k}"] = max(d.get(f"eps={k}", 0.0), _num(v))
    variation = {}
    if per_nu:
        for key in next(iter(per_nu.values())):
            vals = [d[key] for d in per_nu.values()]
            variation[key] = max(vals) / min(vals) if min(vals) > 0 else math.inf
    fits = {"sup_by_nu": per_nu, "variation": variation,
            "under_resolved": sorted({repr(r["nu"]) for r in ok if r.get("under_resolved")})}
    return _finish(plan, rows, fits)


# ---------------------------------------------------------------------------
# Littlewood-Paley suite
# ---------------------------------------------------------------------------
def _lp_structure_checks(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    grid = make_grid(64, 64, math.pi)
    part = lp.build_partition("plane", grid=grid)
    f = lp.random_plane(rng, grid)
    g = lp.random_plane(rng, grid)
    xi = np.sqrt(grid.alpha[:, None] ** 2 + grid.eta[None, :] ** 2)
    recon = sum(np.asarray(b.coeffs) for b in lp.lp_blocks(f, part))
    fc = np.asarray(f.coeffs)
    tri = lp.bony(f, g, part)
    pc = np.asarray(tri.product.coeffs)
    closure = np.linalg.norm(np.asarray(tri.Tfg.coeffs) + np.asarray(tri.Tstar_gf.coeffs) - pc)
    return {
        "partition_residual": part.partition_residual(xi),
        "reconstruction": float(np.linalg.norm(recon - fc) / np.linalg.norm(fc)),
        "paraproduct_closure": float(closure / np.linalg.norm(pc)),
        "schur_bound_64": lp.schur_bound(lp.paper_kernel, 64),
    }


def run_lp_suite(plan: ExperimentPlan) -> ScanResult:
    """Every inequality at its default resolution and, with refinement on, at double resolution."""
    plan.scan_dir.mkdir(parents=True, exist_ok=True)
    n = int(plan.opt("lp_samples"))
    seed = int(plan.opt("lp_seed"))
    rows, reports = [], []
    for iid in lp.INEQUALITY_IDS:
        base_res = lp._DEFAULT_RES[iid]
        resolutions = [base_res, 2 * base_res - (1 if iid == "schur" else 0)] if plan.opt("lp_refine") else [base_res]
        consts = []
        for res in resolutions:
            rep = lp.verify_inequality(iid, n_samples=n, resolution=res, seed=seed)
            reports.append(rep)
            consts.append(rep.max_constant_observed)
        row = {"inequality_id": iid, "run_hash": iid, "status": "ok", "message": "",
               "resolutions": resolutions, "max_constants": consts}
        if len(consts) == 2:
            row["refinement_ratio"] = consts[1] / consts[0] if consts[0] > 0 else math.inf
        rows.append(row)
    lp.write_inequality_reports(plan.scan_dir / "lp_reports.csv", reports)
    return _finish(plan, _plain(rows), _plain(_lp_structure_checks(seed)))


# ---------------------------------------------------------------------------
# dispatch and plot data
# ---------------------------------------------------------------------------
_RUNNERS = {
    "halflife_sweep": run_halflife_sweep,
    "threshold_scan": run_threshold_scan,
    "linear_constants": run_linear_constants,
    "regularization_check": run_regularization_check,
    "lp_suite": run_lp_suite,
}


def run_plan(plan: ExperimentPlan) -> ScanResult:
    log.info("%s: %d planned runs in %s", plan.kind, plan.total_runs, plan.scan_dir)
    return _RUNNERS[plan.kind](plan)


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _write_table(path: Path, header: list[str], rows: list[tuple]) -> Path:
    lines = [f"# {h}" for h in header]
    if rows:
        lines += [" ".join(_fmt(v) for v in r) for r in rows]
    else:
        lines.append("# no data")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_plot_data(result: ScanResult, outdir, scan_dir=None) -> list[Path]:
    """Plain-text plot tables for ``result`` in ``outdir``; returns the files written.

    ``scan_dir`` (default: ``outdir``) is where per-run diagnostics.csv files are looked up
    for decay curves. Every file starts with '#' header lines naming the columns and units.
    """
    from .solver import DiagnosticsRecord

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scan_dir = Path(scan_dir) if scan_dir is not None else outdir
    files = []
    ok = sorted([r for r in result.rows if r.get("status") == "ok"], key=lambda r: json.dumps(r, sort_keys=True))
    if result.kind in ("halflife_sweep", "threshold_scan"):
        curves = []
        for r in ok:
            p = scan_dir / r["run_hash"] / "diagnostics.csv"
            if not p.exists():
                continue
            rec = DiagnosticsRecord.read_csv(p)
            v = rec.array("nonzero_hlog")
            if v[0] > 0:
                curves += [(t, y / v[0], r["run_hash"]) for t, y in zip(rec.times, v)]
        files.append(_write_table(outdir / "decay_curves.dat",
                                  ["x: time t [shear time units]",
                                   "y: ||ln(e+|D_x|) omega_!=(t)|| / ||ln(e+|D_x|) omega_!=(0)|| [dimensionless]",
                                   "series: run hash"], curves))
    if result.kind == "halflife_sweep":
        pts = [(r["nu"], r["half_life"], f"seed={r['seed']}") for r in ok if not r.get("excluded")]
        files.append(_write_table(outdir / "halflife_loglog.dat",
                                  ["x: viscosity nu [dimensionless]", "y: half-life [shear time units]",
                                   "series: seed", "axes: log-log"], sorted(pts, key=lambda p: (p[0], p[2]))))
        fit = result.fits.get("halflife_vs_nu", {})
        line = []
        if pts and math.isfinite(_num(fit.get("slope", math.nan))):
            for nu in sorted({p[0] for p in pts}):
                line.append((nu, math.exp(_num(fit["intercept"])) * nu ** _num(fit["slope"])))
        files.append(_write_table(outdir / "halflife_fit.dat",
                                  ["x: viscosity nu [dimensionless]", "y: fitted half-life [shear time units]",
                                   f"slope: {_fmt(fit.get('slope', math.nan))}"], line))
    if result.kind == "threshold_scan":
        cells = {}
        for r in result.rows:
            key = (r["nu"], r["beta"], r["epsilon0"])
            cells.setdefault(key, []).append(bool(r.get("status") == "ok" and r.get("stable")))
        grid = [(b, e, sum(v) / len(v), f"nu={_fmt(nu)}") for (nu, b, e), v in sorted(cells.items())]
        files.append(_write_table(outdir / "threshold_map.dat",
                                  ["x: beta [dimensionless]", "y: epsilon0 [dimensionless]",
                                   "value: fraction of seeds classified stable", "series: nu"], grid))
    if result.kind == "linear_constants":
        pts = sorted((r["nu"], r["ratio"], r["estimate_id"]) for r in ok)
        files.append(_write_table(outdir / "linear_constants.dat",
                                  ["x: viscosity nu [dimensionless]", "y: empirical constant [dimensionless]",
                                   "series: estimate id"], pts))
    if result.kind == "regularization_check":
        pts = []
        for r in sorted(ok, key=lambda r: (r["nu"], r["seed"])):
            tag = f"nu={_fmt(r['nu'])},seed={r['seed']}"
            pts += [(t, y, f"log,{tag}") for t, y in zip(r["times"], r["log_ratio"])]
            for e, ys in sorted(r["eps_ratio"].items()):
                pts += [(t, y, f"eps={e},{tag}") for t, y in zip(r["times"], ys)]
        files.append(_write_table(outdir / "regularization_ratios.dat",
                                  ["x: time t [shear time units]", "y: smoothing ratio [dimensionless]",
                                   "series: variant and parameters"], pts))
    if result.kind == "lp_suite":
        pts = []
        for r in ok:
            pts += [(res, c, r["inequality_id"]) for res, c in zip(r["resolutions"], r["max_constants"])]
        files.append(_write_table(outdir / "lp_constants.dat",
                                  ["x: resolution [grid points]", "y: max observed constant [dimensionless]",
                                   "series: inequality id"], pts))
    return files

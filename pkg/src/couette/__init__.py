"""Pseudo-spectral simulator and harmonic-analysis diagnostics for perturbations of 2D Couette flow."""
from .kernels import BACKEND
from .spectral import Frame, GridSpec, NormBundle, SpectralField, compute_norms, make_grid
from .linear import PropagatorSpec, biot_savart, evaluate_linear_estimates, propagate, propagate_oracle
from .solver import InitialConditionSpec, SimConfig, SimulationError, TrajectoryState, run
from .lp import build_partition, bony, schur_bound, verify_inequality
from .diagnostics import classify_run, compute_bootstrap, fit_decay
from .experiments import ExperimentPlan, ScanResult, run_plan

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Frame",
    "GridSpec",
    "NormBundle",
    "SpectralField",
    "compute_norms",
    "make_grid",
    "PropagatorSpec",
    "biot_savart",
    "evaluate_linear_estimates",
    "propagate",
    "propagate_oracle",
    "InitialConditionSpec",
    "SimConfig",
    "SimulationError",
    "TrajectoryState",
    "run",
    "build_partition",
    "bony",
    "schur_bound",
    "verify_inequality",
    "classify_run",
    "compute_bootstrap",
    "fit_decay",
    "ExperimentPlan",
    "ScanResult",
    "run_plan",
]

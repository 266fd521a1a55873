"""
INI configuration with one section per module.

Every key has a declared type and default; unknown sections or keys are
rejected. Command-line overrides use ``section.key=value``.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .solver import InitialConditionSpec, SimConfig
from .spectral import make_grid

__all__ = ["ConfigError", "Config", "SCHEMA", "load_config", "sim_config"]


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    v = s.strip().lower()
    return None if v in ("none", "") else float(s)


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _opt_str(s: str):
    v = s.strip()
    return None if v.lower() in ("none", "") else v


def _pi_expr(s: str) -> float:
    """Float that may be written as a multiple of pi, e.g. ``2pi`` or ``pi``."""
    v = s.strip().lower().replace("*", "")
    if v.endswith("pi"):
        head = v[:-2]
        return (float(head) if head else 1.0) * math.pi
    return float(v)


SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "nx": (int, 256),
        "ny": (int, 256),
        "ly": (_pi_expr, 2 * math.pi),
        "dealias_fraction": (float, 2.0 / 3.0),
    },
    "physics": {
        "nu": (float, 1e-3),
        "beta": (float, 0.5),
        "epsilon0": (float, 0.1),
        "nonlinear": (_bool, True),
        "allow_inviscid": (_bool, False),
    },
    "time": {
        "dt": (float, 0.05),
        "t_final": (float, 10.0),
        "remap_interval": (_opt_float, None),
        "record_interval": (_opt_float, None),
        "checkpoint_interval": (_opt_float, None),
        "cfl_max": (float, 0.5),
        "cfl_action": (str, "reduce"),
    },
    "ic": {
        "kind": (str, "random_band"),
        "alpha_min": (float, 1.0),
        "alpha_max": (float, 3.0),
        "eta_min": (float, 0.0),
        "eta_max": (float, 2.0),
        "mode_alpha": (int, 1),
        "mode_eta": (float, 0.0),
        "target_hlog_norm": (_opt_float, None),
        "target_norm": (str, "hlog"),
        "zero_mode_amplitude": (float, 0.0),
        "galilean_mean": (float, 0.0),
        "envelope_width": (_opt_float, None),
        "spectral_slope": (float, 0.0),
        "checkpoint_path": (_opt_str, None),
    },
    "run": {
        "seed": (int, 0),
        "remap_loss_bound": (float, 1e-10),
        "boundary_mass_limit": (_opt_float, 1e-6),
        "store_fields": (_bool, False),
    },
    "diagnostics": {
        "n_windows": (int, 16),
        "budget_factor": (float, 8.0),
        "fit_window_low": (float, 1e-6),
        "fit_window_high": (float, 1e-1),
        "linear_quadrature_points": (int, 513),
        "transition_factor": (float, 10.0),
    },
    "experiment": {
        "outdir": (str, "runs"),
        "scan_id": (_opt_str, None),
        "nus": (_floats, [1e-2, 3e-3, 1e-3, 3e-4]),
        "betas": (_floats, [0.5]),
        "epsilons": (_floats, [0.1]),
        "seeds": (_ints, [0, 1, 2]),
        "horizon_halflives": (float, 2.0),
        "resolution_check": (_bool, True),
        "tail_tolerance": (float, 1e-8),
        "fine_nu": (float, 1e-3),
        "fine_nx": (int, 512),
        "eps_list": (_floats, [0.1, 0.5]),
        "reg_horizon": (float, 1.0),
        "reg_samples": (int, 64),
    },
    "lp": {
        "samples": (int, 1000),
        "seed": (int, 0),
        "refine": (_bool, True),
    },
}


@dataclass
class Config:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]


def _convert(section: str, key: str, raw: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {sorted(SCHEMA[section])}")
    conv = SCHEMA[section][key][0]
    try:
        return conv(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({err})") from None


def load_config(path=None, overrides=()) -> Config:
    """Defaults, then the INI file at ``path``, then ``section.key=value`` overrides."""
    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(p.read_text(), source=str(p))
        except configparser.Error as err:
            raise ConfigError(str(err)) from None
        for sec in parser.sections():
            for key, raw in parser.items(sec):
                values.setdefault(sec, {})[key] = _convert(sec, key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, raw = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        values[sec][key.strip().lower()] = _convert(sec, key.strip().lower(), raw)
    return Config(values)


def sim_config(cfg: Config, **changes) -> SimConfig:
    """Build a :class:`SimConfig` from the config, with keyword overrides
    (``nu``, ``beta``, ``epsilon0``, ``seed``, ``t_final``, ``nx``, ``ny``, ...)."""
    g = dict(cfg["grid"])
    ph = dict(cfg["physics"])
    tm = dict(cfg["time"])
    ic = dict(cfg["ic"])
    rn = dict(cfg["run"])
    for k, v in changes.items():
        for sec in (g, ph, tm, ic, rn):
            if k in sec:
                sec[k] = v
                break
        else:
            raise ConfigError(f"unknown simulation parameter {k!r}")
    try:
        grid = make_grid(g["nx"], g["ny"], g["ly"], g["dealias_fraction"])
        icspec = InitialConditionSpec(
            kind=ic["kind"],
            band=((ic["alpha_min"], ic["alpha_max"]), (ic["eta_min"], ic["eta_max"])),
            mode=(ic["mode_alpha"], ic["mode_eta"]),
            target_hlog_norm=ic["target_hlog_norm"],
            target_norm=ic["target_norm"],
            zero_mode_amplitude=ic["zero_mode_amplitude"],
            galilean_mean=ic["galilean_mean"],
            envelope_width=ic["envelope_width"],
            spectral_slope=ic["spectral_slope"],
            checkpoint_path=ic["checkpoint_path"],
        )
        return SimConfig(
            nu=ph["nu"], beta=ph["beta"], epsilon0=ph["epsilon0"], ic=icspec,
            dt=tm["dt"], t_final=tm["t_final"], remap_interval=tm["remap_interval"], grid=grid,
            seed=rn["seed"], nonlinear=ph["nonlinear"], allow_inviscid=ph["allow_inviscid"],
            record_interval=tm["record_interval"], checkpoint_interval=tm["checkpoint_interval"],
            cfl_max=tm["cfl_max"], cfl_action=tm["cfl_action"], remap_loss_bound=rn["remap_loss_bound"],
            boundary_mass_limit=rn["boundary_mass_limit"], store_fields=rn["store_fields"],
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None

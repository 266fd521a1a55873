"""
Command-line interface.

Every verb takes an optional INI config path and repeatable ``--set section.key=value``
overrides. Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 partial batch.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, sim_config
from .experiments import ExperimentPlan, ScanResult, emit_plot_data, run_plan
from .solver import SimulationError, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("couette")

_VERB_KIND = {
    "sweep-halflife": "halflife_sweep",
    "scan-threshold": "threshold_scan",
    "linear-constants": "linear_constants",
    "check-regularization": "regularization_check",
    "verify-lp": "lp_suite",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="couette", description="Shear-flow perturbation simulator and experiment harness.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", nargs="?", help="INI config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--outdir", help="output directory (overrides experiment.outdir)")
        sp.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging")

    sp = sub.add_parser("simulate", help="integrate one trajectory")
    common(sp)
    for verb, kind in _VERB_KIND.items():
        common(sub.add_parser(verb, help=f"run a {kind.replace('_', ' ')} plan"))
    sp = sub.add_parser("emit-plots", help="write plot-data tables for a finished scan")
    sp.add_argument("scan_dir", help="scan directory containing result.json")
    sp.add_argument("--outdir", help="where to write the tables (default: <scan_dir>/plots)")
    return p


def _plan(cfg, kind: str, outdir: str | None) -> ExperimentPlan:
    ex, dg, lpc = cfg["experiment"], cfg["diagnostics"], cfg["lp"]
    options = {
        "horizon_halflives": ex["horizon_halflives"],
        "resolution_check": ex["resolution_check"],
        "tail_tolerance": ex["tail_tolerance"],
        "fine_nu": ex["fine_nu"],
        "fine_nx": ex["fine_nx"],
        "n_windows": dg["n_windows"],
        "budget_factor": dg["budget_factor"],
        "fit_window": (dg["fit_window_low"], dg["fit_window_high"]),
        "linear_quadrature_points": dg["linear_quadrature_points"],
        "transition_factor": dg["transition_factor"],
        "eps_list": tuple(ex["eps_list"]),
        "reg_horizon": ex["reg_horizon"],
        "reg_samples": ex["reg_samples"],
        "lp_samples": lpc["samples"],
        "lp_seed": lpc["seed"],
        "lp_refine": lpc["refine"],
    }
    return ExperimentPlan(kind=kind, base=sim_config(cfg), nus=ex["nus"], betas=ex["betas"],
                          epsilons=ex["epsilons"], seeds=ex["seeds"], outdir=Path(outdir or ex["outdir"]),
                          scan_id=ex["scan_id"], options=options)


def _simulate(cfg, outdir: str | None) -> int:
    sc = sim_config(cfg)
    out = Path(outdir or cfg["experiment"]["outdir"]) / sc.hash()
    try:
        res = run(sc, outdir=out)
    except SimulationError as err:
        print(f"numerical failure: {err}; partial results in {out}", file=sys.stderr)
        return EXIT_NUMERICAL
    (out / "config.json").write_text(json.dumps(sc.to_dict(), sort_keys=True, indent=1, default=repr) + "\n")
    rec = res.record
    print(f"t={res.state.time:.6g} steps={res.state.step_count} samples={len(rec)} "
          f"hlog={rec.array('nonzero_hlog')[-1]:.6g} -> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "emit-plots":
            scan_dir = Path(args.scan_dir)
            result_path = scan_dir / "result.json"
            if not result_path.exists():
                print(f"no result.json in {scan_dir}", file=sys.stderr)
                return EXIT_USAGE
            result = ScanResult.read(result_path)
            for f in emit_plot_data(result, args.outdir or scan_dir / "plots", scan_dir):
                print(f)
            return EXIT_OK
        cfg = load_config(args.config, args.overrides)
        if args.verb == "simulate":
            return _simulate(cfg, args.outdir)
        plan = _plan(cfg, _VERB_KIND[args.verb], args.outdir)
        print(f"{plan.kind}: {plan.total_runs} planned runs -> {plan.scan_dir}")
        result = run_plan(plan)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result.fits, sort_keys=True, indent=1))
    failed = result.failures
    if failed:
        for r in failed:
            print(f"run {r['run_hash']}: {r['status']}: {r.get('message', '')}", file=sys.stderr)
        return EXIT_NUMERICAL if len(failed) == len(result.rows) else EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

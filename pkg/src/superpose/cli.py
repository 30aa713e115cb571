"""Command-line entry point: ``superpose run|analyze|diagnose|synth``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import data
from . import experiment as ex
from .errors import ConfigurationError, InputError, SuperposeError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override its values")
    types = ex.config_types()
    for f in dataclasses.fields(ex.ExperimentConfig):
        p.add_argument(_flag(f.name), dest=f.name, type=types[f.name], default=None,
                       help=f"(default: {f.default})")


def _cmd_run(args) -> int:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ex.ExperimentConfig)}
    cfg = ex.load_config(args.config, **overrides)
    ds = ex.load_dataset(cfg.dataset)

    def progress(rep):
        if rep.ok:
            print(f"run {rep.run_index:3d} {rep.mode:5s} test RMSE {rep.test_rmse:.4f} "
                  f"gens {rep.generations} ahsam {len(rep.ahsam_events)} ({rep.wall_seconds:.1f} s)")
        else:
            print(f"run {rep.run_index:3d} {rep.mode:5s} FAILED: {rep.error}")

    reports = ex.run_experiment(cfg, ds, progress=None if args.quiet else progress)
    if not args.no_analysis:
        result = ex.analyze(reports, cfg.scheme, ds.feature_names)
        path = ex.write_analysis(result, cfg.output_dir)
        if not args.quiet:
            _print_analysis(result)
            print(f"analysis written to {path}")
    failed = sum(not r.ok for r in reports)
    if failed:
        print(f"{failed} run(s) failed; see the reports in {cfg.output_dir}", file=sys.stderr)
    return EXIT_OK


def _print_analysis(result: dict) -> None:
    for mode, e in result["modes"].items():
        t = e["test"]
        print(f"{mode}: test RMSE median {t['median']:.4f} [IQR {t['iqr']:.4f}], "
              f"mean {t['mean']:.4f} +/- {t['sd']:.4f}; nodes median {e['tree_size_nodes']['median']:.0f}")
    paired = result.get("paired")
    if paired:
        t = paired["test"]
        print(f"paired test RMSE (BGP - DIGSP): W = {t['w_statistic']:g}, one-sided p = {t['p_value']:.3g}, "
              f"r = {t['rank_biserial']:.3f}, DIGSP wins {100 * t['win_fraction']:.1f}%, "
              f"95% CI of mean delta [{t['bootstrap_ci'][0]:.3f}, {t['bootstrap_ci'][1]:.3f}]")
    for note in result["notices"]:
        print(f"note: {note}")


def _cmd_analyze(args) -> int:
    reports = ex.load_reports(args.results)
    result = ex.analyze(reports, args.scheme, n_boot=args.n_boot, seed=args.seed)
    path = ex.write_analysis(result, args.output or args.results)
    if args.json:
        print(json.dumps(result, indent=1))
    else:
        _print_analysis(result)
        print(f"analysis written to {path}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    ds = ex.load_dataset(args.dataset)
    diag = data.diagnostics(ds)
    if args.json:
        print(json.dumps({"n": ds.n, "columns": diag}, indent=1))
        return EXIT_OK
    print(f"n = {ds.n}")
    cols = ("min", "max", "range", "mean", "sd", "median", "skewness", "pct_tukey_outliers")
    print(f"{'column':>12s} " + " ".join(f"{c:>10s}" for c in cols[:-1]) + f" {'outliers%':>10s}")
    for name, d in diag.items():
        print(f"{name:>12s} " + " ".join(f"{d[c]:10.4g}" for c in cols))
    return EXIT_OK


def _cmd_synth(args) -> int:
    ds = data.synth_superposition(args.n, args.noise_sd, args.seed)
    data.write_csv(ds, args.output)
    print(f"wrote {ds.n} rows to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superpose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a multi-run experiment")
    _add_config_flags(p)
    p.add_argument("--no-analysis", action="store_true", help="skip the post-run analysis")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("analyze", help="statistics over persisted run reports")
    p.add_argument("results", help="directory holding run_*.json reports")
    p.add_argument("--scheme", default="full")
    p.add_argument("--n-boot", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="directory for analysis.json (default: the results directory)")
    p.add_argument("--json", action="store_true", help="print the full analysis as JSON")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("diagnose", help="per-column dataset diagnostics")
    p.add_argument("dataset", help="CSV path or synth[:n=..,noise_sd=..,seed=..]")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("synth", help="write the synthetic superposition dataset as CSV")
    p.add_argument("output")
    p.add_argument("--n", type=int, default=213)
    p.add_argument("--noise-sd", type=float, default=data.SYNTH_NOISE_SD)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SuperposeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

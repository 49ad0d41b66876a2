"""Command-line interface: ``ivfunc <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error,
1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from ivfunc.bandwidth import select_theta
from ivfunc.errors import ConfigError, IvfuncError
from ivfunc.estimators import EstimatorConfig, estimate, ms_config, ts_config
from ivfunc.harness.config import config_from_dict, load_config, preset
from ivfunc.harness.ingest import ResampleRule, ingest_csv, read_path_csv, write_path_csv
from ivfunc.harness.mc import clt_check, run_mc, sweep_bandwidth, truth_value
from ivfunc.harness.report import emit_report, output_dir
from ivfunc.inference import VARIANCE_FORMULA, avar, confidence_interval, normality_report
from ivfunc.kernels import compute_constants, get_kernel
from ivfunc.sde_sim import ExpOUConfig, JumpConfig, make_grid, simulate_expou
from ivfunc.spotvol import NO_TRUNCATION, TruncationRule, nw_spot_vol

FULL_SCALE_PATHS = 5000
DESK_SCALE_PATHS = 1000


def _theta_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"theta must be positive, got {text!r}")
    return value


def _truncation(args) -> TruncationRule:
    if args.trunc_alpha is None:
        return NO_TRUNCATION
    return TruncationRule(args.trunc_alpha, args.trunc_varpi)


def _experiment(args):
    if args.config:
        cfg = load_config(args.config)
        doc = cfg.to_dict()
    else:
        doc = preset(args.preset)
    if args.n_paths is not None:
        doc["n_paths"] = args.n_paths
    elif args.full_scale:
        doc["n_paths"] = FULL_SCALE_PATHS
    elif not args.config:
        doc["n_paths"] = DESK_SCALE_PATHS
    if args.seed is not None:
        doc["master_seed"] = args.seed
    return config_from_dict(doc)


def cmd_simulate(args) -> int:
    grid = make_grid(args.horizon_days, args.samples_per_day, days_per_unit=args.days_per_unit)
    jumps = JumpConfig(args.jump_intensity, "gaussian" if args.jump_intensity > 0 else "none",
                       sigma=args.jump_sigma)
    path = simulate_expou(ExpOUConfig(), jumps, grid, args.seed)
    out = Path(args.out) if args.out else output_dir(args.output_dir) / "path.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_path_csv(path, out)
    print(out)
    return 0


def cmd_estimate(args) -> int:
    if args.tick_data:
        rule = ResampleRule(args.step_seconds, max_gap_seconds=args.max_gap_seconds,
                            days_per_unit=args.days_per_unit)
        path = ingest_csv(args.input, {"timestamp": args.time_col, "price": args.price_col}, rule)
    else:
        path = read_path_csv(args.input)
    trunc = _truncation(args)
    kind = args.estimator
    if kind in ("ms", "ts", "ts-prime"):
        base = args.k_n or 15
        j = ms_config(base) if kind == "ms" else ts_config(base, kind == "ts-prime")
        cfg = EstimatorConfig(estimator_kind="jackknife", jackknife=j, truncation=trunc)
    else:
        theta, k_n = args.theta, args.k_n
        selection = None
        if k_n is None and theta == "auto":
            kern = "unifR" if kind in ("jr", "jr_corrected") else args.kernel
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                selection = select_theta(path, kern, args.functional, args.init_theta, trunc)
            k_n, theta = selection.k_n, None
        elif k_n is not None:
            theta = None
        cfg = EstimatorConfig(kernel_id=args.kernel, theta=theta, k_n=k_n, truncation=trunc,
                              constant_mode=args.constant_mode, estimator_kind=kind)
    value = estimate(path, cfg, args.functional)
    result = {"estimate": value, "estimator": kind, "functional": args.functional,
              "n": path.grid.n_steps, "delta": path.grid.delta}
    if cfg.estimator_kind != "jackknife":
        result["k_n"] = cfg.window(path.grid.delta)
        spot = nw_spot_vol(path, args.kernel if kind not in ("jr", "jr_corrected") else "unifR",
                           result["k_n"], trunc)
        av = avar(spot, args.functional)
        lo, hi = confidence_interval(value, av, path.grid.delta, args.level)
        result.update({"avar_hat": av, "ci_low": lo, "ci_high": hi, "level": args.level})
    if path.truth is not None:
        result["truth"] = truth_value(path, args.functional)
    print(json.dumps(result, indent=2))
    return 0


def cmd_mc(args) -> int:
    cfg = _experiment(args)
    report = run_mc(cfg, workers=args.workers)
    target = emit_report(report, args.format, args.output_dir or cfg.output_dir, args.stem)
    print(target)
    print(f"# wall time {report.wall_time:.1f} s", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    if not args.config and args.preset in ("table1", "table2"):
        args.preset = "fig4"
    cfg = _experiment(args)
    report = sweep_bandwidth(cfg, workers=args.workers)
    target = emit_report(report, args.format, args.output_dir or cfg.output_dir, args.stem, sweep=True)
    print(target)
    return 0


def cmd_kernel_constants(args) -> int:
    consts = compute_constants(get_kernel(args.kernel), args.tol)
    doc = asdict(consts)
    doc["kernel"] = args.kernel
    print(json.dumps(doc, indent=2))
    return 0


def cmd_clt_check(args) -> int:
    res = clt_check(args.n_paths, args.horizon_days, args.samples_per_day, args.theta,
                    args.kernel, args.functional, args.seed, workers=args.workers)
    out = output_dir(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{args.stem}.csv"
    pd.DataFrame({"z_plugin": res.z_plugin, "z_corrected": res.z_corrected}).to_csv(
        target, index=False, float_format="%.17g")
    summary = {
        "k_n": res.k_n,
        "variance_formula": VARIANCE_FORMULA,
        "n_failed": res.n_failed,
        "plugin": normality_report(res.z_plugin).as_dict(),
        "corrected": normality_report(res.z_corrected).as_dict(),
        "a_hat_mean": float(np.mean(res.a_hat)),
        "a_limit_mean": float(np.mean(res.a_limit)),
        "a_diff_se": float(np.std(res.a_hat - res.a_limit, ddof=1) / math.sqrt(len(res.a_hat))),
    }
    print(json.dumps(summary, indent=2))
    print(target)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivfunc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one exp-OU path to CSV")
    s.add_argument("--horizon-days", type=float, default=5.0)
    s.add_argument("--samples-per-day", type=int, default=78)
    s.add_argument("--days-per-unit", type=float, default=252.0)
    s.add_argument("--jump-intensity", type=float, default=0.0)
    s.add_argument("--jump-sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate an integrated functional on one path")
    e.add_argument("input")
    e.add_argument("--estimator", default="corrected",
                   choices=["plugin", "corrected", "undersmoothed", "jr", "jr_corrected", "ms", "ts", "ts-prime"])
    e.add_argument("--kernel", default="exp")
    e.add_argument("--functional", default="square")
    e.add_argument("--theta", type=_theta_arg, default="auto")
    e.add_argument("--init-theta", type=float, default=0.2)
    e.add_argument("--k-n", type=int)
    e.add_argument("--constant-mode", default="finite-sample", choices=["finite-sample", "asymptotic"])
    e.add_argument("--level", type=float, default=0.95)
    e.add_argument("--trunc-alpha", type=float)
    e.add_argument("--trunc-varpi", type=float, default=0.49)
    e.add_argument("--tick-data", action="store_true", help="input is timestamp,price rows")
    e.add_argument("--time-col", default="timestamp")
    e.add_argument("--price-col", default="price")
    e.add_argument("--step-seconds", type=float, default=60.0)
    e.add_argument("--max-gap-seconds", type=float)
    e.add_argument("--days-per-unit", type=float, default=252.0)
    e.set_defaults(func=cmd_estimate)

    for name, fn, helptext in [("mc", cmd_mc, "Monte Carlo bias/RMSE tables"),
                               ("sweep", cmd_sweep, "RMSE across bandwidths")]:
        m = sub.add_parser(name, help=helptext)
        m.add_argument("--config", help="JSON experiment config")
        m.add_argument("--preset", default="table1", choices=["table1", "table2", "fig4"])
        m.add_argument("--n-paths", type=int)
        m.add_argument("--full-scale", action="store_true", help=f"{FULL_SCALE_PATHS} paths")
        m.add_argument("--seed", type=int)
        m.add_argument("--workers", type=int)
        m.add_argument("--format", default="csv", choices=["csv", "json"])
        m.add_argument("--output-dir")
        m.add_argument("--stem", default=name)
        m.set_defaults(func=fn)

    k = sub.add_parser("kernel-constants", help="print the integral constants of a kernel")
    k.add_argument("--kernel", default="exp")
    k.add_argument("--tol", type=float, default=1e-12)
    k.set_defaults(func=cmd_kernel_constants)

    c = sub.add_parser("clt-check", help="standardized errors at a fixed theta")
    c.add_argument("--n-paths", type=int, default=500)
    c.add_argument("--horizon-days", type=float, default=1.0)
    c.add_argument("--samples-per-day", type=int, default=23400)
    c.add_argument("--theta", type=float, default=0.2)
    c.add_argument("--kernel", default="exp")
    c.add_argument("--functional", default="square")
    c.add_argument("--seed", type=int, default=20240102)
    c.add_argument("--workers", type=int)
    c.add_argument("--output-dir")
    c.add_argument("--stem", default="clt")
    c.set_defaults(func=cmd_clt_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IvfuncError as exc:
        print(f"ivfunc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:  # numpy/pandas argument errors surface as configuration problems
        print(f"ivfunc: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line interface.

Every subcommand accepts ``--config FILE``: a flat ``key = value`` file whose
keys are flag names (``max-L`` or ``max_L``). Flags given on the command line
override the file.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from atvgarch.data import DatasetConfig, load_returns, summary
from atvgarch.estimation import FitConfig, fit
from atvgarch.exceptions import ATVGarchError
from atvgarch.likelihood import build_score_matrix
from atvgarch.montecarlo import (
    DGPS,
    McExperiment,
    default_workers,
    run_power,
    run_size,
    write_curves,
)
from atvgarch.model import simulate
from atvgarch.testing import lm_test, robust_lm_test, sequential_specify

logger = logging.getLogger("atvgarch")


def _dataset_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input data")
    g.add_argument("--input", required=True, help="CSV file with a header row")
    g.add_argument("--date-col", default="date")
    g.add_argument("--value-col", default="value")
    g.add_argument("--kind", choices=["prices", "returns"], default="prices")
    g.add_argument("--scale", type=float, default=10.0, help="multiply returns by this (default 10)")
    g.add_argument("--start-date", default=None, help="ISO-8601 lower date bound")
    g.add_argument("--end-date", default=None, help="ISO-8601 upper date bound")


def _fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variance-init", choices=["sample-variance", "first-obs-squared"], default=None)
    p.add_argument("--max-iter", type=int, default=500)


def _mc_args(p: argparse.ArgumentParser, null_default: int) -> None:
    p.add_argument("--dgp", required=True, choices=sorted(DGPS))
    p.add_argument("--T", type=int, nargs="+", default=[1000])
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--null-L", type=int, default=null_default)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--start", choices=["true", "heuristic"], default="true")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $ATVGARCH_WORKERS or 1)")
    p.add_argument("--out", default=None, help="output CSV (default mc_<kind>_<dgp>.csv)")
    p.add_argument("--curves-dir", default=None, help="write curve CSV files here")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="atvgarch", description="ATV-GARCH modelling and LM tests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key = value file with flag defaults")
    subs = {}

    p = sub.add_parser("simulate", parents=[common], help="simulate a DGP to CSV")
    p.add_argument("--dgp", required=True, choices=sorted(DGPS))
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--out", required=True)
    subs["simulate"] = p

    p = sub.add_parser("fit", parents=[common], help="QML fit with L transitions")
    _dataset_args(p)
    _fit_args(p)
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--out", default="fit.json")
    subs["fit"] = p

    p = sub.add_parser("test", parents=[common], help="LM tests of L against L+1 transitions")
    _dataset_args(p)
    _fit_args(p)
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--out", default="test.csv")
    subs["test"] = p

    p = sub.add_parser("specify", parents=[common], help="sequential specification of L")
    _dataset_args(p)
    _fit_args(p)
    p.add_argument("--max-L", type=int, default=3)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--variant", choices=["LM", "robust-LM"], default="robust-LM")
    p.add_argument("--out", default="trace.csv")
    subs["specify"] = p

    p = sub.add_parser("mc-size", parents=[common], help="Monte Carlo size experiment")
    _mc_args(p, null_default=-1)
    subs["mc-size"] = p
    p = sub.add_parser("mc-power", parents=[common], help="Monte Carlo power experiment")
    _mc_args(p, null_default=0)
    subs["mc-power"] = p

    p = sub.add_parser("summary", parents=[common], help="summary statistics of the returns")
    _dataset_args(p)
    p.add_argument("--out", default=None, help="optional JSON output")
    p.add_argument("--excess", action="store_true", help="report excess kurtosis")
    subs["summary"] = p
    return parser, subs


def _read_config(path: str, sp: argparse.ArgumentParser) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_string("[config]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise ATVGarchError(f"cannot read config file {path}: {exc}") from exc
    actions = {a.dest: a for a in sp._actions}
    out = {}
    for key, raw in cp["config"].items():
        dest = key.strip().lstrip("-").replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise ATVGarchError(f"unknown config key {key!r}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            out[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif act.nargs == "+":
            conv = act.type or str
            out[dest] = [conv(v) for v in raw.replace(",", " ").split()]
        else:
            out[dest] = raw.strip()
    return out


def _dataset(args) -> DatasetConfig:
    return DatasetConfig(
        path=args.input,
        date_column=args.date_col,
        value_column=args.value_col,
        kind=args.kind,
        scale=args.scale,
        start=args.start_date,
        end=args.end_date,
    )


def _fit_config(args) -> FitConfig:
    return FitConfig(max_iter=args.max_iter, variance_init=args.variance_init)


def _cmd_simulate(args) -> int:
    cfg = DGPS[args.dgp]
    x = simulate(cfg.spec, args.T, cfg.dist, args.burn_in, seed=args.seed)
    pd.DataFrame({"t": np.arange(1, x.T + 1), "value": x.values}).to_csv(
        args.out, index=False, float_format="%.17g", lineterminator="\n"
    )
    print(f"wrote {x.T} observations of {args.dgp} to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    series = load_returns(_dataset(args))
    res = fit(series, args.L, _fit_config(args))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(res.to_dict(), fh, indent=2)
    print(f"{'param':<10}{'estimate':>12}{'se':>10}{'robust se':>11}")
    for row in res.summary_table():
        print(f"{row['name']:<10}{row['estimate']:>12.3f}{row['se']:>10.3f}{row['robust_se']:>11.3f}")
    for l, tr in enumerate(res.spec.transitions, start=1):
        print(f"gamma{l} = {tr.slope:.3f}")
    print(f"loglik = {res.loglik:.4f}  converged = {res.converged}  -> {args.out}")
    return 0 if res.converged else 3


def _cmd_test(args) -> int:
    series = load_returns(_dataset(args))
    res = fit(series, args.L, _fit_config(args))
    sm = build_score_matrix(series, res)
    rows = [lm_test(series, res, scores=sm).to_dict(), robust_lm_test(series, res, scores=sm).to_dict()]
    pd.DataFrame(rows).to_csv(args.out, index=False, lineterminator="\n")
    for r in rows:
        print(f"{r['variant']:<10} L={r['null_L']}  stat={r['statistic']:.3f}  p={r['pvalue']:.3f}")
    if not res.converged:
        print("warning: null model fit did not converge", file=sys.stderr)
    return 0


def _cmd_specify(args) -> int:
    series = load_returns(_dataset(args))
    trace = sequential_specify(series, args.max_L, args.level, _fit_config(args), args.variant)
    pd.DataFrame(trace.rows()).to_csv(args.out, index=False, lineterminator="\n")
    print(trace.format_table())
    return 0 if trace.selected_L is not None else 3


def _cmd_mc(args, kind: str) -> int:
    null_L = args.null_L
    if kind == "size" and null_L < 0:
        null_L = DGPS[args.dgp].L
    ex = McExperiment(args.dgp, tuple(args.T), args.reps, null_L, args.burn_in,
                      base_seed=args.seed, start=args.start)
    workers = default_workers() if args.workers is None else args.workers
    res = (run_size if kind == "size" else run_power)(ex, workers)
    out = args.out or f"mc_{kind}_{args.dgp}.csv"
    res.to_csv(out)
    for T in ex.sample_sizes:
        line = "  ".join(
            f"{v} {a:.0%}: {res.rejection_frequency(T, v, a):.4f}"
            for v in ("LM", "robust-LM") for a in (0.01, 0.05, 0.1)
        )
        print(f"{args.dgp} T={T} (n={res.n_converged(T)}, failed={res.n_failed(T)})  {line}")
    if args.curves_dir:
        kinds = ("size-discrepancy",) if kind == "size" else ("size-power",)
        write_curves(res, args.curves_dir, kinds)
    print(f"-> {out}")
    return 0


def _cmd_summary(args) -> int:
    stats = summary(load_returns(_dataset(args)))
    print(stats.format_row(Path(args.input).stem))
    if args.excess:
        print(f"excess kurtosis: {stats.excess_kurtosis:.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(stats.to_dict(), fh, indent=2)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if a in subs), None)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    config_path = pre.parse_known_args(argv)[0].config if command else None
    if config_path:
        sp = subs[command]
        try:
            defaults = _read_config(config_path, sp)
        except ATVGarchError as exc:
            print(f"atvgarch {command}: error: {exc}", file=sys.stderr)
            return 1
        sp.set_defaults(**defaults)
        # flags supplied by the file are no longer required on the command line
        for act in sp._actions:
            if act.dest in defaults:
                act.required = False
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        handlers = {
            "simulate": _cmd_simulate,
            "fit": _cmd_fit,
            "test": _cmd_test,
            "specify": _cmd_specify,
            "mc-size": lambda a: _cmd_mc(a, "size"),
            "mc-power": lambda a: _cmd_mc(a, "power"),
            "summary": _cmd_summary,
        }
        return handlers[args.command](args)
    except (ATVGarchError, ValueError, ArithmeticError, OSError) as exc:
        print(f"atvgarch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

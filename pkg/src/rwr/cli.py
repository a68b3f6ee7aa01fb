"""Command-line front end.

Subcommands::

    rwr simulate     --table {1,2} | --gamma G --theta T   [--reps --n --seed --quick]
    rwr gen-data     --kind {tv,med} ...                   [--include-latent]
    rwr estimate-tv  --data F --outcome --a1 --a2 --c1 --c2 --method M   [--boot N --seed S --cluster C]
    rwr estimate-med --data F --outcome --treatment --mediator --x --z --cde-at M --method M

Exit status: 0 success, 2 usage or configuration error, 1 runtime failure.
Nothing is colored, so ``NO_COLOR`` is honored trivially.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bootstrap import BootstrapResult, bootstrap_block, bootstrap_iid, significance_stars
from .dataset import ColumnTable, format_number, is_binary, read_csv, write_csv_stream
from .estimators import (
    MediationSpec,
    TimeVaryingSpec,
    EffectReport,
    estimate_conventional,
    estimate_g,
    estimate_iptw,
    estimate_mediation_g,
    estimate_mediation_rwr,
    estimate_rwr,
)
from .exceptions import DataError, DesignError, SpecError
from .montecarlo import (
    ESTIMATOR_NAMES,
    ESTIMATORS,
    TABLE_SEEDS,
    MediationParams,
    Scenario,
    ScenarioSummary,
    grid_rows,
    run_scenario,
    run_table,
    simulate_dataset,
    simulate_mediation_dataset,
)
from .numerics import RngStream

QUICK_REPS = 500


class ConfigError(Exception):
    """Invalid flag combination; reported with exit status 2."""


def _names(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(x: float | None, digits: int | None = None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}" if digits is not None else format_number(x)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------- simulate


def render_grid(summaries: Sequence[ScenarioSummary], fmt: str) -> str:
    rows = grid_rows(summaries)
    if fmt == "json":
        return json.dumps(_jsonable(rows), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "gamma", "theta", "bias", "sd", "rmse", "reps_used"])
        for r in rows:
            w.writerow(
                [r["estimator"], _fmt(r["gamma"]), _fmt(r["theta"]), _fmt(r["bias"]),
                 _fmt(r["sd"]), _fmt(r["rmse"]), r["reps_used"]]
            )  # fmt: skip
        return buf.getvalue()
    heads = []
    for ss in summaries:
        sc = ss.scenario
        heads.append(f"γ={sc.gamma:g}, θ={sc.theta:g}")
    lines = ["| Estimator/statistic | " + " | ".join(heads) + " |",
             "|---" * (len(heads) + 1) + "|"]
    for name in summaries[0].scenario.estimators:
        lines.append(f"| **{ESTIMATOR_NAMES[name]}** |" + " |" * len(heads))
        for stat in ("bias", "sd", "rmse"):
            cells = [_fmt(getattr(ss[name], stat), 3) for ss in summaries]
            lines.append(f"| {stat.upper() if stat != 'bias' else 'Bias'} | " + " | ".join(cells) + " |")
    reps = summaries[0].scenario.reps
    lines.append("")
    lines.append(f"Results are based on {reps} simulations of n = {summaries[0].scenario.n}.")
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace) -> int:
    explicit = args.gamma is not None or args.theta is not None
    if args.table is not None and explicit:
        raise ConfigError("--table cannot be combined with --gamma/--theta")
    if args.table is None and (args.gamma is None or args.theta is None):
        raise ConfigError("give either --table {1,2} or both --gamma and --theta")
    if args.quick and args.reps is not None:
        raise ConfigError("--quick and --reps are mutually exclusive")
    reps = QUICK_REPS if args.quick else (args.reps if args.reps is not None else 10_000)
    if reps < 1 or args.n < 10:
        raise ConfigError("--reps must be >= 1 and --n >= 10")
    estimators = _names(args.estimators) or ESTIMATORS
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        raise ConfigError(f"unknown estimator(s) {unknown}; choose from {list(ESTIMATORS)}")
    if args.table is not None:
        summaries = run_table(args.table, args.seed, reps, args.n, threads=args.threads, estimators=estimators)
    else:
        seed = TABLE_SEEDS[1] if args.seed is None else args.seed
        sc = Scenario(args.gamma, args.theta, args.n, reps, seed, tuple(estimators))
        summaries = [run_scenario(sc, threads=args.threads)]
    _emit(render_grid(summaries, args.format), args.out)
    return 0


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ConfigError("--n must be positive")
    stream = RngStream(args.seed, 0, 0)
    if args.kind == "tv":
        if args.moderated:
            raise ConfigError("--moderated applies to --kind med only")
        table = simulate_dataset(args.gamma, args.theta, args.n, stream, include_latent=args.include_latent)
    else:
        if args.gamma_set or args.theta_set:
            raise ConfigError("--gamma/--theta apply to --kind tv only")
        params = MediationParams(moderated=args.moderated)
        table = simulate_mediation_dataset(params, args.n, stream, include_latent=args.include_latent)
    buf = io.StringIO()
    write_csv_stream(table, buf)
    _emit(buf.getvalue(), args.out)
    return 0


# ---------------------------------------------------------------- estimate


def render_report(report: EffectReport, fmt: str) -> str:
    values = report.values()
    if fmt == "json":
        obj = {
            "method": report.method,
            "estimates": [
                {
                    "estimand": report.label(k),
                    "estimate": v,
                    "se": report.se.get(k),
                    "p_value": report.p_value.get(k),
                }
                for k, v in values.items()
            ],
            "diagnostics": report.diagnostics,
        }
        return json.dumps(_jsonable(obj), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimand", "estimate", "se", "p_value"])
        for k, v in values.items():
            w.writerow([report.label(k), _fmt(v), _fmt(report.se.get(k)), _fmt(report.p_value.get(k))])
        return buf.getvalue()
    lines = [f"Method: {report.method}", "", "| Estimand | Est | SE | p |  |", "|---|---|---|---|---|"]
    for k, v in values.items():
        se, p = report.se.get(k), report.p_value.get(k)
        se_txt = f"({se:.3f})" if se is not None else ""
        lines.append(f"| {report.label(k)} | {v:.3f} | {se_txt} | {_fmt(p, 3)} | {significance_stars(p)} |")
    if report.p_value:
        lines += ["", "† p < 0.10, * p < 0.05, ** p < 0.01, and *** p < 0.001 for two-sided tests of no effect."]
    lines += ["", "Diagnostics:", "", "```", json.dumps(_jsonable(report.diagnostics), indent=2), "```"]
    return "\n".join(lines) + "\n"


def _diagnostics_to_stderr(report: EffectReport, fmt: str) -> None:
    if fmt == "csv" and report.diagnostics:
        sys.stderr.write("diagnostics: " + json.dumps(_jsonable(report.diagnostics)) + "\n")


def _with_bootstrap(table: ColumnTable, estimator, args: argparse.Namespace) -> EffectReport:
    if args.boot is None:
        if args.cluster is not None:
            raise ConfigError("--cluster requires --boot")
        return estimator(table)
    if args.boot < 2:
        raise ConfigError("--boot must be at least 2")
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if args.cluster is not None:
        table.require([args.cluster])
        res: BootstrapResult = bootstrap_block(
            table, args.cluster, estimator, args.boot, args.seed, threads=threads, pvalue=args.pvalue
        )
    else:
        res = bootstrap_iid(table, estimator, args.boot, args.seed, threads=threads, pvalue=args.pvalue)
    report = res.report()
    diag = dict(report.diagnostics)
    diag["bootstrap"] = {"reps": res.reps, "failures": res.failures, "seed": res.seed,
                         "cluster": args.cluster, "pvalue": res.pvalue_method}
    return EffectReport(**{**report.__dict__, "diagnostics": diag})


def cmd_estimate_tv(args: argparse.Namespace) -> int:
    if args.saturated and args.method != "rwr-interact":
        raise ConfigError("--saturated applies to --method rwr-interact only")
    if args.trim_quantile is not None and args.method != "iptw":
        raise ConfigError("--trim-quantile applies to --method iptw only")
    table = read_csv(args.data)
    c1, c2 = _names(args.c1), _names(args.c2)
    table.require([args.outcome, args.a1, args.a2, *c1, *c2])
    kind = args.treatment_kind
    if kind == "auto":
        kind = "binary" if is_binary(table[args.a1]) and is_binary(table[args.a2]) else "continuous"
    if args.method == "iptw" and kind != "binary":
        raise ConfigError("--method iptw requires binary (0/1) treatments; use conventional, g, rwr or rwr-interact")
    spec = TimeVaryingSpec(args.outcome, args.a1, args.a2, c1, c2, kind)
    method = args.method
    if method == "conventional":
        est = lambda t: estimate_conventional(t, spec)  # noqa: E731
    elif method == "iptw":
        q = args.trim_quantile
        est = lambda t: estimate_iptw(t, spec, trim_quantile=q)  # noqa: E731
    elif method == "g":
        est = lambda t: estimate_g(t, spec)  # noqa: E731
    else:
        inter, sat = method == "rwr-interact", args.saturated
        est = lambda t: estimate_rwr(t, spec, interactions=inter, saturated=sat)  # noqa: E731
    report = _with_bootstrap(table, est, args)
    _emit(render_report(report, args.format), args.out)
    _diagnostics_to_stderr(report, args.format)
    return 0


def cmd_estimate_med(args: argparse.Namespace) -> int:
    table = read_csv(args.data)
    xs, zs = _names(args.x), _names(args.z)
    table.require([args.outcome, args.treatment, args.mediator, *xs, *zs])
    kind = "binary" if is_binary(table[args.treatment]) else "continuous"
    spec = MediationSpec(args.outcome, args.treatment, args.mediator, xs, zs, args.cde_at, kind)
    if args.method == "g":
        est = lambda t: estimate_mediation_g(t, spec)  # noqa: E731
    else:
        inter = args.method == "rwr-interact"
        est = lambda t: estimate_mediation_rwr(t, spec, interactions=inter)  # noqa: E731
    report = _with_bootstrap(table, est, args)
    _emit(render_report(report, args.format), args.out)
    _diagnostics_to_stderr(report, args.format)
    return 0


# ---------------------------------------------------------------- parser


def _add_output(p: argparse.ArgumentParser, default: str = "csv") -> None:
    p.add_argument("--format", choices=("csv", "json", "markdown"), default=default)
    p.add_argument("--out", help="output path (default: stdout)")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None, help="parallel workers (default: all cores)")


def _add_boot(p: argparse.ArgumentParser) -> None:
    p.add_argument("--boot", type=int, help="bootstrap replications")
    p.add_argument("--seed", type=int, default=8675309, help="bootstrap seed")
    p.add_argument("--cluster", help="cluster column for the block bootstrap")
    p.add_argument("--pvalue", choices=("normal", "sign"), default="normal")
    _add_threads(p)


class _Flag(argparse.Action):
    """Store a value and remember that it was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, self.dest + "_set", True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwr", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of the five estimators")
    p.add_argument("--table", type=int, choices=(1, 2))
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--quick", action="store_true", help=f"{QUICK_REPS} replications (wider tolerance)")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, help="master seed (default: 8675309 / 90210 for tables 1 / 2)")
    p.add_argument("--estimators", help="comma-separated subset of " + ",".join(ESTIMATORS))
    _add_threads(p)
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("--kind", choices=("tv", "med"), required=True)
    p.add_argument("--gamma", type=float, default=0.0, action=_Flag)
    p.add_argument("--theta", type=float, default=0.0, action=_Flag)
    p.add_argument("--moderated", action="store_true", help="switch on effect moderation (med)")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=8675309)
    p.add_argument("--include-latent", action="store_true", help="also write the unobserved u")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_gen_data, gamma_set=False, theta_set=False)

    p = sub.add_parser("estimate-tv", help="marginal effects of a two-period treatment")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--a1", required=True)
    p.add_argument("--a2", required=True)
    p.add_argument("--c1", default="", help="comma-separated baseline confounders")
    p.add_argument("--c2", default="", help="comma-separated time-2 confounders")
    p.add_argument("--method", choices=("conventional", "iptw", "g", "rwr", "rwr-interact"), required=True)
    p.add_argument("--treatment-kind", choices=("auto", "binary", "continuous"), default="auto")
    p.add_argument("--saturated", action="store_true", help="fully saturated model (one confounder per period)")
    p.add_argument("--trim-quantile", type=float, help="clip IPTW weights at these quantiles")
    _add_boot(p)
    _add_output(p)
    p.set_defaults(func=cmd_estimate_tv)

    p = sub.add_parser("estimate-med", help="total effect and controlled direct effect")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--mediator", required=True)
    p.add_argument("--x", default="", help="comma-separated baseline confounders")
    p.add_argument("--z", default="", help="comma-separated post-treatment confounders")
    p.add_argument("--cde-at", type=float, required=True, help="mediator value for CDE(1, m)")
    p.add_argument("--method", choices=("rwr", "rwr-interact", "g"), default="rwr-interact")
    _add_boot(p)
    _add_output(p)
    p.set_defaults(func=cmd_estimate_med)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, DesignError, SpecError, FileNotFoundError) as exc:
        sys.stderr.write(f"rwr {args.command}: error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - stable exit status for scripts
        sys.stderr.write(f"rwr {args.command}: failed: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

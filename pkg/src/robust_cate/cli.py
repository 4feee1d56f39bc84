"""Command-line entry point: fit, benchmark, diagnose, gen-dgp.

Exit codes: 0 ok, 2 input error, 3 data-shape error, 4 internal numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .configfile import ConfigError, load_benchmark, load_fit_config
from .dgp import DgpKind, DgpSpec, generate
from .gbt import GbtParams, fit_gbt, fit_propensity
from .nuisance import CausalDataset
from .pipeline import StageError, fit
from .stages import FitConfig
from .tails import MIN_HILL_VALUES, auto_severity, hill_plot_data, propensity_warnings

EXIT_OK, EXIT_INPUT, EXIT_SHAPE, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def read_dataset(path) -> CausalDataset:
    """Read the y, w, x0..x{d-1} CSV schema; tau_true is kept when present."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CliError(EXIT_INPUT, f"{path}: empty file") from None
        for col in ("y", "w"):
            if col not in header:
                raise CliError(EXIT_INPUT, f"{path}: missing column {col!r}")
        xcols = []
        while f"x{len(xcols)}" in header:
            xcols.append(f"x{len(xcols)}")
        if not xcols:
            raise CliError(EXIT_INPUT, f"{path}: no covariate columns x0..")
        stray = [h for h in header if h.startswith("x") and h[1:].isdigit() and h not in xcols]
        if stray:
            raise CliError(EXIT_INPUT, f"{path}: covariate columns are not contiguous ({stray[0]})")
        use = ["y", "w"] + xcols + (["tau_true"] if "tau_true" in header else [])
        idx = [header.index(c) for c in use]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            if len(rec) != len(header):
                raise CliError(EXIT_INPUT, f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for c, i in zip(use, idx):
                try:
                    v = float(rec[i])
                except ValueError:
                    raise CliError(EXIT_INPUT, f"{path}: row {lineno}, column {c!r}: not a number ({rec[i]!r})") from None
                if not np.isfinite(v):
                    raise CliError(EXIT_INPUT, f"{path}: row {lineno}, column {c!r}: non-finite value")
                if c == "w" and v not in (0.0, 1.0):
                    raise CliError(EXIT_INPUT, f"{path}: row {lineno}, column 'w': treatment must be 0 or 1")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CliError(EXIT_INPUT, f"{path}: no data rows")
    arr = np.asarray(rows)
    d = len(xcols)
    tau = arr[:, 2 + d] if "tau_true" in use else None
    ds = CausalDataset(arr[:, 2:2 + d], arr[:, 1], arr[:, 0], tau)
    if ds.w.min() == ds.w.max():
        raise CliError(EXIT_SHAPE, f"{path}: all units are in one treatment arm")
    return ds


def _warn(msgs):
    for m in msgs:
        print(m if m.startswith("WARN.") else f"WARN {m}", file=sys.stderr)


def cmd_fit(args) -> int:
    ds = read_dataset(args.csv)
    try:
        cfg = load_fit_config(args.config) if args.config else FitConfig()
    except ConfigError as exc:
        raise CliError(EXIT_INPUT, f"config: {exc}") from exc
    if args.seed is not None:
        cfg = cfg.with_(master_seed=args.seed)
    if ds.X.shape[1] <= cfg.basis.max_feature():
        raise CliError(EXIT_SHAPE, f"basis uses x{cfg.basis.max_feature()} but the data has {ds.dim} covariates")
    try:
        result = fit(ds, cfg)
    except StageError as exc:
        code = EXIT_SHAPE if exc.stage in ("nuisance", "basis") and "no " in str(exc.cause) else EXIT_NUMERIC
        raise CliError(code, str(exc)) from exc
    _warn(result.warnings)
    text = json.dumps(result.summary(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    try:
        spec = load_benchmark(args.spec)
    except (ConfigError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"benchmark spec: {exc}") from exc
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out or f"bench_{spec.name}")
    out.mkdir(parents=True, exist_ok=True)
    rows = bench.run_benchmark(spec, seed, args.jobs)
    agg = bench.aggregate(rows)
    bench.write_csv(rows, bench.ROW_FIELDS, out / "rows.csv")
    bench.write_csv(agg, bench.AGG_FIELDS, out / "aggregate.csv")
    if not args.no_plots:
        bench.write_plot_data(spec, rows, agg, out, seed)
    n_err = sum(1 for r in rows if r["error"])
    if n_err:
        print(f"WARN {n_err} of {len(rows)} benchmark rows failed; see the error column", file=sys.stderr)
    for a in agg:
        print(f"{a['density']:>8} {a['config']:<12} rmse={a['rmse']!s:.8} cov={a['coverage']!s:.5} "
              f"width={a['width']!s:.6} pehe={a['pehe']!s:.6}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ds = read_dataset(args.csv)
    if ds.n < MIN_HILL_VALUES:
        raise CliError(EXIT_INPUT, f"need at least {MIN_HILL_VALUES} rows for a tail diagnosis, got {ds.n}")
    seed = 0 if args.seed is None else args.seed
    rec = auto_severity(ds, GbtParams(seed=seed))
    pm = fit_propensity(ds.X, ds.w)
    check = propensity_warnings(pm.predict_proba(ds.X))
    _warn(rec.warnings + check.warnings)
    Z = np.column_stack([ds.X, ds.w])
    resid = ds.y - fit_gbt(Z, ds.y, GbtParams(seed=seed)).predict(Z)
    try:
        hill = hill_plot_data(resid, k_min=min(10, ds.n // 2 - 1))
    except ValueError:
        hill = []
    report = {"alpha_hat": rec.alpha_hat, "recommended_severity": rec.severity.value,
              "auto_overlap": check.auto_overlap, "warnings": rec.warnings + check.warnings}
    if args.out:
        bench.write_csv([{"k": k, "alpha_hat": a} for k, a in hill], ["k", "alpha_hat"], args.out)
        report["hill_plot"] = str(args.out)
    else:
        report["hill_plot"] = [{"k": k, "alpha_hat": a} for k, a in hill]
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _parse_param(text: str):
    if "=" not in text:
        raise CliError(EXIT_INPUT, f"--param expects key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        return k.strip(), v.strip()


def cmd_gen_dgp(args) -> int:
    params = dict(_parse_param(p) for p in args.param or [])
    try:
        spec = DgpSpec(args.kind, args.n, args.dim, args.density, params, 0 if args.seed is None else args.seed)
        data = generate(spec)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    out = args.out or f"{spec.kind.value}_n{spec.n}_d{spec.density:g}_s{spec.seed}.csv"
    data.to_csv(out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output path (file or directory)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (env ROBUST_CATE_JOBS)")

    p = argparse.ArgumentParser(prog="robust-cate", description="Robust Bayesian CATE estimation and benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit a CSV dataset and print a JSON summary")
    f.add_argument("csv")
    f.add_argument("--config", default=None, help="INI config with a [fit] section")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("benchmark", parents=[common], help="run a DGP sweep from a benchmark spec")
    b.add_argument("spec")
    b.add_argument("--no-plots", action="store_true", help="skip plot-data CSVs")
    b.set_defaults(func=cmd_benchmark)

    d = sub.add_parser("diagnose", parents=[common], help="tail index, severity recommendation, overlap")
    d.add_argument("csv")
    d.set_defaults(func=cmd_diagnose)

    g = sub.add_parser("gen-dgp", parents=[common], help="write a synthetic dataset as CSV")
    g.add_argument("--kind", default="whale", choices=[k.value for k in DgpKind])
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--dim", type=int, default=5)
    g.add_argument("--density", type=float, default=0.0)
    g.add_argument("--param", action="append", help="kind-specific key=value; see docs/formats.md")
    g.set_defaults(func=cmd_gen_dgp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

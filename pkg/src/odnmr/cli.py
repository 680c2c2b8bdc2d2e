"""Command-line front end.

Subcommands: run (execute a configured experiment), oracle (Monte Carlo
vs closed-form equivalence suite), parse (check a pulse-sequence DSL
file), fit (fit a model to CSV columns).  Exit codes: 0 ok, 1 runtime
failure, 2 usage/parse error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .config import (
    OracleConfig,
    load_config,
    manifest_dict,
    oracle_config_from_dict,
)
from .engine import NoiseModel, mc_cpmg_visibility, ou_visibility_analytic
from .experiments import run_experiment
from .fitting import FitError, fit, make_model
from .levels import ConfigError, derive_seed
from .pulses import SequenceError, format_sequence, parse_sequence

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _fmt_cell(v) -> str:
    if isinstance(v, float):  # includes numpy float scalars
        return repr(float(v))
    return str(v)


def write_csv(path: str, header: list[str], rows: list[tuple]):
    """Byte-stable CSV: '.' decimals, repr floats, '\\n' endings, UTF-8."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    try:
        rc = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    spec = rc.experiment
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out_dir = args.output or rc.output_dir
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)

    try:
        os.makedirs(out_dir, exist_ok=True)
        result = run_experiment(spec, rc.ensemble, rc.noise, rc.optics,
                                k_rabi=rc.k_rabi, jobs=jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # simulation failure with context
        print(f"error: experiment {spec.kind} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.format == "json":
        _write_json(os.path.join(out_dir, "raw.json"),
                    {"header": result.header, "rows": [list(r) for r in result.rows]})
    else:
        write_csv(os.path.join(out_dir, "raw.csv"), result.header, result.rows)
    _write_json(os.path.join(out_dir, "fits.json"), result.fits)
    manifest = manifest_dict(replace(rc, experiment=spec), seed=spec.seed, jobs=jobs)
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"{result.kind}: {len(result.rows)} rows -> {out_dir}")
    for key, val in result.meta.items():
        if isinstance(val, (int, float, str)):
            print(f"  {key} = {val}")
    return EXIT_OK


def run_oracle(ocfg: OracleConfig) -> dict:
    """MC-vs-closed-form z-scores over the (N, tau) grid."""
    noise = NoiseModel(ou_sigma=ocfg.sigma, ou_tau_c=ocfg.tau_c, mode="montecarlo",
                       n_trajectories=ocfg.n_trajectories)
    sigma_analytic = ocfg.analytic_sigma if ocfg.analytic_sigma is not None else ocfg.sigma
    cases = []
    inconclusive = ocfg.n_trajectories < 2
    idx = 0
    for n in ocfg.n_list:
        for tau in np.geomspace(ocfg.tau_c / 100.0, ocfg.tau_c, ocfg.taus_per_n):
            mc, se = mc_cpmg_visibility(noise, n, float(tau),
                                        seed=derive_seed(ocfg.seed, idx))
            target = ou_visibility_analytic(n, float(tau), sigma_analytic, ocfg.tau_c)
            z = (mc - target) / se if np.isfinite(se) and se > 0 else float("inf")
            cases.append({"n": n, "tau_s": float(tau), "mc": mc, "se": se,
                          "analytic": float(target), "z": z})
            idx += 1
    zs = [abs(c["z"]) for c in cases]
    passed = (not inconclusive) and all(z < ocfg.z_limit for z in zs)
    return {
        "cases": cases,
        "max_abs_z": max(zs) if zs else float("nan"),
        "z_limit": ocfg.z_limit,
        "n_trajectories": ocfg.n_trajectories,
        "inconclusive": inconclusive,
        "passed": passed,
    }


def cmd_oracle(args) -> int:
    try:
        if args.config:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(args.config, "rb") as fh:
                doc = tomllib.load(fh)
            ocfg = oracle_config_from_dict(doc)
        else:
            ocfg = OracleConfig()
        if args.seed is not None:
            ocfg = replace(ocfg, seed=args.seed)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = run_oracle(ocfg)
    out_dir = args.output or "."
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "oracle_report.json"), report)
    verdict = "PASS" if report["passed"] else "FAIL"
    print(f"oracle: {len(report['cases'])} cases, max |z| = {report['max_abs_z']:.2f} "
          f"(limit {report['z_limit']}) -> {verdict}")
    if report["inconclusive"]:
        print("oracle: inconclusive (statistics insufficient, "
              f"n_trajectories = {report['n_trajectories']})")
    if not report["passed"]:
        for c in report["cases"]:
            if not abs(c["z"]) < report["z_limit"]:
                print(f"  FAIL n={c['n']} tau={c['tau_s']:.4e}s "
                      f"mc={c['mc']:.4f} analytic={c['analytic']:.4f} z={c['z']:+.2f}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_parse(args) -> int:
    try:
        with open(args.sequence, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        print(f"error: sequence file not found: {args.sequence}", file=sys.stderr)
        return EXIT_USAGE
    try:
        seq = parse_sequence(text, label=os.path.basename(args.sequence))
    except SequenceError as exc:
        print(f"error: {args.sequence}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(format_sequence(seq))
    total_us = seq.total_duration
    print(f"# {len(seq.events)} events, total duration {total_us} us "
          f"({total_us * 1e-6} s)")
    return EXIT_OK


def _auto_init(model_name: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    span = x.max() - x.min()
    if model_name in ("lorentzian", "gaussian"):
        return np.array([y.max() - y.min(), float(x[np.argmax(y)]),
                         span / 4.0, float(y.min())])
    if model_name == "exponential":
        return np.array([float(y[0]), 2.0 / max(span, 1e-300)])
    if model_name == "double_exponential":
        return np.array([y[0] / 2.0, 10.0 / span, y[0] / 2.0, 1.0 / span])
    if model_name == "stretched_exponential":
        return np.array([float(y.max()), span / 2.0, 1.0])
    if model_name == "sqrt_power":
        return np.array([float(np.mean(y / np.sqrt(np.maximum(x, 1e-300))))])
    if model_name == "power_law_scaling":
        return np.array([float(y[0]), 0.5])
    if model_name == "ou_cpmg":
        return np.array([1.0 / max(span, 1e-300), span, float(y.max())])
    raise FitError(f"no automatic init for {model_name}")


def cmd_fit(args) -> int:
    try:
        with open(args.data, "r", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            if args.x not in cols or args.y not in cols:
                print(f"error: columns {args.x!r}/{args.y!r} not in {cols}",
                      file=sys.stderr)
                return EXIT_USAGE
            x, y = [], []
            for row in reader:
                x.append(float(row[args.x]))
                y.append(float(row[args.y]))
    except FileNotFoundError:
        print(f"error: data file not found: {args.data}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: bad CSV value: {exc}", file=sys.stderr)
        return EXIT_USAGE

    x = np.asarray(x)
    y = np.asarray(y)
    try:
        model = make_model(args.model, n_pulses=args.n_pulses)
        init = (np.array([float(v) for v in args.init.split(",")])
                if args.init else _auto_init(args.model, x, y))
        res = fit(model, x, y, init=init)
    except (FitError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(res.to_json())
    return EXIT_OK if res.converged else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odnmr", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run a configured experiment")
    pr.add_argument("config", help="TOML run configuration")
    pr.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    pr.add_argument("--jobs", type=int, default=0, help="parallel sweep workers (0 = all cores)")
    pr.add_argument("--output", default=None, help="output directory (overrides config)")
    pr.add_argument("--format", choices=("csv", "json"), default="csv")
    pr.set_defaults(func=cmd_run)

    po = sub.add_parser("oracle", help="Monte Carlo vs closed-form OU suite")
    po.add_argument("config", nargs="?", default=None, help="optional TOML [oracle] table")
    po.add_argument("--seed", type=int, default=None)
    po.add_argument("--output", default=None, help="directory for oracle_report.json")
    po.set_defaults(func=cmd_oracle)

    pp = sub.add_parser("parse", help="parse and normalize a pulse-sequence DSL file")
    pp.add_argument("sequence", help="sequence file")
    pp.set_defaults(func=cmd_parse)

    pf = sub.add_parser("fit", help="fit a model to CSV columns")
    pf.add_argument("model", help="model name (lorentzian, gaussian, exponential, ...)")
    pf.add_argument("data", help="CSV file with a header row")
    pf.add_argument("--x", default="sweep_param")
    pf.add_argument("--y", default="signal")
    pf.add_argument("--init", default=None, help="comma-separated initial parameters")
    pf.add_argument("--n-pulses", type=int, default=1, help="N for the ou_cpmg model")
    pf.set_defaults(func=cmd_fit)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

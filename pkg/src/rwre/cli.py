"""Command line entry point: ``rwre <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 invariant-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bpire, checks, experiments
from .env_models import EnvModel, classify_regime, moment_condition
from .errors import DomainError, RunawayWalkError
from .estimator import model_mle
from .experiments import ConfigError, ExperimentConfig
from .streams import substream
from .walk import Environment, Walker

EXIT_CONFIG = 2
EXIT_CHECK = 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _parse_box(text: str) -> list[list[float]]:
    out = []
    for part in text.split(","):
        lo, hi = part.split(":")
        out.append([float(lo), float(hi)])
    return out


def _model_from_args(args) -> EnvModel:
    if args.config:
        return ExperimentConfig.load(args.config).model
    if not args.family or not args.theta:
        raise ConfigError("either --config or both --family and --theta are required")
    spec = {"family": args.family, "theta": _floats(args.theta)}
    if args.atoms:
        spec["atoms"] = _floats(args.atoms)
    if args.box:
        spec["box"] = _parse_box(args.box)
    try:
        return EnvModel.from_dict(spec)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(text)


def cmd_simulate(args) -> int:
    model = _model_from_args(args)
    if not classify_regime(model).ballistic:
        raise ConfigError("simulation requires a ballistic model")
    seed = args.seed if args.seed is not None else 0
    rows, l_rows = [], []
    shared = None
    if args.mode == "quenched":
        shared = Environment.lazy(model, substream(seed, 0, "env_right"), substream(seed, 0, "env_left"))
    for rep in range(args.replicates):
        env = shared or Environment.lazy(model, substream(seed, rep, "env_right"), substream(seed, rep, "env_left"))
        record = Walker(env, substream(seed, rep, "walk")).run_to(args.n)
        rows.append([rep, record.hitting_time, record.min_site, record.sum_left])
        if args.l_vectors:
            l_rows.extend([rep, x, int(c)] for x, c in enumerate(record.left_counts))
    _emit(args.out, "simulate.csv", experiments._csv_text(["replicate_id", "T_n", "min_site", "sum_left"], rows))
    if args.l_vectors:
        Path(args.l_vectors).write_text(experiments._csv_text(["replicate_id", "x", "L"], l_rows))
    return 0


def read_left_counts(path, replicate: int = 0) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "L"} <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns x,L (optionally replicate_id)")
        pairs = [(int(r["x"]), int(r["L"])) for r in reader
                 if "replicate_id" not in r or int(r["replicate_id"]) == replicate]
    if not pairs:
        raise ConfigError(f"{path}: no rows for replicate {replicate}")
    pairs.sort()
    xs = [x for x, _ in pairs]
    if xs != list(range(len(xs))):
        raise ConfigError(f"{path}: sites must be exactly 0..n")
    return np.array([c for _, c in pairs], dtype=np.int64)


def cmd_estimate(args) -> int:
    model = _model_from_args(args)
    seed = args.seed if args.seed is not None else 0
    if args.input:
        L = read_left_counts(args.input, args.replicate)
    else:
        if args.n is None:
            raise ConfigError("estimate needs --input or --n to simulate inline")
        env = Environment.lazy(model, substream(seed, 0, "env_right"), substream(seed, 0, "env_left"))
        L = Walker(env, substream(seed, 0, "walk")).run_to(args.n).left_counts
    report = model_mle(model, L, substream(seed, 0, "optimizer"))
    doc = report.to_dict(_floats(args.gamma_list))
    doc["family"] = model.family.name
    doc["param_names"] = list(model.family.param_names)
    doc["moment_condition"] = moment_condition(model)
    _emit(args.out, "estimate.json", json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_bpire(args) -> int:
    model = _model_from_args(args)
    seed = args.seed if args.seed is not None else 0
    trace = bpire.simulate_chain(model, args.steps, substream(seed, 0, "chain"))
    states = trace.states
    try:
        theory = bpire.stationary_mean(model)
    except ArithmeticError:
        theory = None
    summary = {
        "steps": args.steps,
        "empirical_mean": float(states[1:].mean()),
        "empirical_variance": float(states[1:].var()),
        "stationary_mean": theory,
        "kernel_check": bpire.kernel_check(model, args.kernel_x_max),
    }
    _emit(args.out, "trace.csv", experiments._csv_text(["k", "Z"], [[k, int(z)] for k, z in enumerate(states)]))
    _emit(args.out, "summary.json", json.dumps(summary, indent=2) + "\n")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig(model=_model_from_args(args))
    return experiments.with_overrides(
        config,
        master_seed=args.seed,
        workers=args.workers,
        replicates=args.replicates,
        n_checkpoints=tuple(_ints(args.n_list)) if args.n_list else None,
        gamma_list=tuple(_floats(args.gamma_list)) if args.gamma_list else None,
    )


def cmd_coverage(args) -> int:
    config = _experiment_config(args)
    table, rows = experiments.run_coverage(config)
    text = experiments.coverage_csv(table)
    if args.out:
        experiments.write_coverage(args.out, config, table, rows)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fisher(args) -> int:
    config = _experiment_config(args)
    long_rows, summary = experiments.run_fisher_boxplots(config)
    if args.out:
        experiments.write_fisher(args.out, config, long_rows, summary)
    else:
        sys.stdout.write(experiments.fisher_csv(long_rows))
    return 0


def cmd_check(args) -> int:
    results = checks.run_all(args.triples)
    print(checks.format_results(results))
    return 0 if all(r.passed for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON run-config file")
    shared.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    shared.add_argument("--workers", type=int, help="worker processes")
    shared.add_argument("--out", help="output directory (stdout when omitted)")
    shared.add_argument("--family", choices=["two-point-known", "two-point-free", "beta"])
    shared.add_argument("--theta", help="comma-separated parameter vector")
    shared.add_argument("--atoms", help="a1,a2 for two-point-known")
    shared.add_argument("--box", help="per-coordinate bounds lo:hi,lo:hi,...")

    parser = argparse.ArgumentParser(prog="rwre", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared], help="simulate walks up to T_n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--mode", choices=["annealed", "quenched"], default="annealed")
    p.add_argument("--l-vectors", help="side file for the full L vectors")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[shared], help="MLE and confidence regions from L statistics")
    p.add_argument("--input", help="CSV with columns x,L (optionally replicate_id)")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--n", type=int, help="simulate a walk to T_n when no input is given")
    p.add_argument("--gamma-list", default="0.01,0.05,0.1")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bpire", parents=[shared], help="simulate the branching process")
    p.add_argument("--steps", type=int, default=10**6)
    p.add_argument("--kernel-x-max", type=int, default=30)
    p.set_defaults(func=cmd_bpire)

    for name, func, helptext in [("coverage", cmd_coverage, "coverage experiment"),
                                 ("fisher-boxplots", cmd_fisher, "observed-information samples")]:
        p = sub.add_parser(name, parents=[shared], help=helptext)
        p.add_argument("--replicates", type=int)
        p.add_argument("--n-list", help="comma-separated checkpoints")
        p.add_argument("--gamma-list")
        p.set_defaults(func=func)

    p = sub.add_parser("check", parents=[shared], help="finite-difference, normalization and dual-formula suites")
    p.add_argument("--triples", type=int, default=1000)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunawayWalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

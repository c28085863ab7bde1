"""Seeded replication experiments: coverage tables and observed-information samples.

Each replicate draws one environment and one walk from its own substreams,
stops the walk successively at ``T_n`` for every checkpoint ``n`` (or runs
an independent walk per checkpoint), fits the MLE and records coverage of
the true parameter. Replicates are independent, so they can be farmed out to
a process pool without changing a single output byte.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from .env_models import EnvModel, classify_regime, moment_condition
from .errors import DomainError, RegionUnavailableError, RunawayWalkError
from .estimator import N_STARTS, Status, model_mle
from .streams import substream
from .walk import STEP_BUDGET, Environment, Walker

DEFAULT_CHECKPOINTS = tuple(1000 * k for k in range(1, 11))
DEFAULT_GAMMAS = (0.01, 0.05, 0.1)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: EnvModel
    n_checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS
    replicates: int = 1000
    gamma_list: tuple[float, ...] = DEFAULT_GAMMAS
    master_seed: int = 0
    workers: int = 1
    nested_checkpoints: bool = True
    n_starts: int = N_STARTS
    step_budget: int = STEP_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "n_checkpoints", tuple(int(n) for n in self.n_checkpoints))
        object.__setattr__(self, "gamma_list", tuple(float(g) for g in self.gamma_list))
        cps = self.n_checkpoints
        if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigError(f"checkpoints must be positive and strictly increasing, got {cps}")
        if not all(0.0 < g < 1.0 for g in self.gamma_list):
            raise ConfigError(f"gammas must lie in (0, 1), got {self.gamma_list}")
        if self.replicates < 1:
            raise ConfigError("at least one replicate is required")
        if self.workers < 1:
            raise ConfigError("at least one worker is required")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        try:
            model = EnvModel.from_dict(raw["model"])
        except (KeyError, TypeError, DomainError) as exc:
            raise ConfigError(f"invalid model block: {exc}") from exc
        known = {"n_checkpoints", "replicates", "gamma_list", "master_seed", "workers",
                 "nested_checkpoints", "n_starts", "step_budget"}
        unknown = set(raw) - known - {"model"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(model=model, **{k: raw[k] for k in known if k in raw})

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self, include_workers: bool = True) -> dict:
        out = {
            "model": self.model.to_dict(),
            "n_checkpoints": list(self.n_checkpoints),
            "replicates": self.replicates,
            "gamma_list": list(self.gamma_list),
            "master_seed": self.master_seed,
            "nested_checkpoints": self.nested_checkpoints,
            "n_starts": self.n_starts,
            "step_budget": self.step_budget,
        }
        if include_workers:
            out["workers"] = self.workers
        return out


def _walker(config: ExperimentConfig, rep: int, extra: int) -> Walker:
    seed = config.master_seed
    env = Environment.lazy(config.model, substream(seed, rep, "env_right", extra),
                           substream(seed, rep, "env_left", extra))
    return Walker(env, substream(seed, rep, "walk", extra), config.step_budget)


def run_replicate(config: ExperimentConfig, rep: int) -> list[dict]:
    """All checkpoint results for one replicate, as plain picklable dicts."""
    model = config.model
    theta_star = np.asarray(model.theta)
    out = []
    walker = _walker(config, rep, 0)
    for k, n in enumerate(config.n_checkpoints):
        if not config.nested_checkpoints:
            walker = _walker(config, rep, k)
        row = {"replicate_id": rep, "n": n, "T_n": None, "status": Status.FAILED.value,
               "grad_norm": None, "theta_hat": None, "sigma_hat": None, "covered": {}}
        try:
            record = walker.run_to(n)
        except RunawayWalkError:
            out.append(row)
            # the rest of a nested walk is lost as well
            if config.nested_checkpoints:
                out.extend(dict(row, n=m) for m in config.n_checkpoints[k + 1:])
                break
            continue
        report = model_mle(model, record.left_counts, substream(config.master_seed, rep, "optimizer", k),
                           config.n_starts)
        row.update(T_n=record.hitting_time, status=report.status.value,
                   grad_norm=report.grad_norm_at_opt, theta_hat=report.theta_hat.tolist(),
                   sigma_hat=report.sigma_hat.tolist())
        for g in config.gamma_list:
            try:
                row["covered"][g] = report.region(g).covers(theta_star)
            except RegionUnavailableError:
                row["covered"][g] = None
        out.append(row)
    return out


def run_replicates(config: ExperimentConfig) -> list[dict]:
    if not classify_regime(config.model).ballistic:
        raise ConfigError("experiments require a ballistic model")
    reps = range(config.replicates)
    job = partial(run_replicate, config)
    if config.workers == 1:
        chunks = [job(r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(job, reps, chunksize=max(1, config.replicates // (4 * config.workers))))
    return [row for chunk in chunks for row in chunk]


@dataclass(frozen=True)
class CoverageCell:
    n: int
    gamma: float
    covered_count: int
    usable_count: int
    failed_count: int

    @property
    def empirical_coverage(self) -> float | None:
        return self.covered_count / self.usable_count if self.usable_count else None


@dataclass(frozen=True)
class CoverageTable:
    replicates: int
    cells: dict = field(default_factory=dict)

    def __getitem__(self, key) -> CoverageCell:
        return self.cells[key]

    def failure_rate(self) -> float:
        per_n = {}
        for (n, _), cell in self.cells.items():
            per_n[n] = cell.failed_count
        return sum(per_n.values()) / (self.replicates * len(per_n)) if per_n else 0.0


def aggregate_coverage(rows: list[dict], config: ExperimentConfig) -> CoverageTable:
    cells = {}
    for n in config.n_checkpoints:
        at_n = [r for r in rows if r["n"] == n]
        for g in config.gamma_list:
            usable = [r for r in at_n if r["covered"].get(g) is not None]
            covered = sum(1 for r in usable if r["covered"][g])
            cells[(n, g)] = CoverageCell(n, g, covered, len(usable), config.replicates - len(usable))
    return CoverageTable(config.replicates, cells)


def run_coverage(config: ExperimentConfig) -> tuple[CoverageTable, list[dict]]:
    rows = run_replicates(config)
    return aggregate_coverage(rows, config), rows


def fisher_cells(d: int) -> list[tuple[int, int]]:
    """Distinct entries of a symmetric d x d matrix: diagonal first, then the upper triangle."""
    return [(i, i) for i in range(d)] + [(i, j) for i in range(d) for j in range(i + 1, d)]


def fisher_long_rows(rows: list[dict], d: int) -> list[dict]:
    out = []
    for r in rows:
        if r["status"] != Status.CONVERGED.value:
            continue
        sigma = r["sigma_hat"]
        for i, j in fisher_cells(d):
            out.append({"replicate_id": r["replicate_id"], "n": r["n"], "cell": f"({i + 1},{j + 1})",
                        "row": i + 1, "col": j + 1, "value": sigma[i][j]})
    return out


def run_fisher_boxplots(config: ExperimentConfig) -> tuple[list[dict], dict]:
    rows = run_replicates(config)
    long_rows = fisher_long_rows(rows, config.model.dim)
    summary = {str(n): sum(1 for r in rows if r["n"] == n and r["status"] != Status.CONVERGED.value)
               for n in config.n_checkpoints}
    return long_rows, {"failed_by_n": summary, "replicates": config.replicates}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def coverage_csv(table: CoverageTable) -> str:
    rows = [[c.n, c.gamma, c.covered_count, c.usable_count, c.failed_count, c.empirical_coverage]
            for c in table.cells.values()]
    return _csv_text(["n", "gamma", "covered_count", "usable_count", "failed_count", "empirical_coverage"], rows)


def replicates_csv(rows: list[dict], config: ExperimentConfig) -> str:
    names = config.model.family.param_names
    header = ["replicate_id", "n", "T_n", "status", "grad_norm"] + [f"{p}_hat" for p in names]
    header += [f"covered_{g}" for g in config.gamma_list]
    body = []
    for r in rows:
        theta = r["theta_hat"] or [None] * len(names)
        body.append([r["replicate_id"], r["n"], r["T_n"], r["status"], r["grad_norm"], *theta,
                     *(r["covered"].get(g) for g in config.gamma_list)])
    return _csv_text(header, body)


def fisher_csv(long_rows: list[dict]) -> str:
    header = ["replicate_id", "n", "cell", "row", "col", "value"]
    return _csv_text(header, [[r[h] for h in header] for r in long_rows])


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


def manifest(config: ExperimentConfig, command: str, extra: dict | None = None) -> str:
    doc = {
        "command": command,
        "config": config.to_dict(include_workers=False),
        "master_seed": config.master_seed,
        "git_describe": git_describe(),
        "environment_sites": "unbounded, drawn lazily in blocks of 1024 on each side",
        "moment_condition": moment_condition(config.model),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_coverage(out_dir, config: ExperimentConfig, table: CoverageTable, rows: list[dict]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "coverage.csv": coverage_csv(table),
        "replicates.csv": replicates_csv(rows, config),
        "manifest.json": manifest(config, "coverage", {"failure_rate": table.failure_rate()}),
    }
    for name, text in files.items():
        (out / name).write_text(text)
    return [out / name for name in files]


def write_fisher(out_dir, config: ExperimentConfig, long_rows: list[dict], summary: dict) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "fisher_boxplots.csv": fisher_csv(long_rows),
        "fisher_summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
        "manifest.json": manifest(config, "fisher-boxplots"),
    }
    for name, text in files.items():
        (out / name).write_text(text)
    return [out / name for name in files]


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})

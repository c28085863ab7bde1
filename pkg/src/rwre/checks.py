"""Numerical self-checks run by ``rwre check``.

Each suite returns a :class:`CheckResult`; the CLI exits nonzero when any of
them fails, which makes the command usable as a CI hook.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bpire import kernel_check
from .env_models import EnvModel
from .likelihood import grad_phi, hess_phi, phi, phi_beta_sums

FD_STEP = 1e-6
GRAD_RTOL = 1e-6
HESS_RTOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""


def reference_models() -> list[EnvModel]:
    return [
        EnvModel.two_point_known(0.4, 0.7, 0.3),
        EnvModel.two_point_free(0.3, 0.4, 0.7),
        EnvModel.beta(5.0, 1.0),
    ]


def _rel_err(analytic, numeric) -> float:
    # relative error with a unit floor so that near-zero entries compare absolutely
    analytic = np.asarray(analytic)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1.0)))


def random_interior_theta(model: EnvModel, rng: np.random.Generator, margin: float = 1e-3) -> np.ndarray:
    box = model.box
    lo = np.asarray(box.lower) + margin
    hi = np.asarray(box.upper) - margin
    while True:
        theta = box.project(rng.uniform(lo, hi))
        if not box.on_boundary(theta, tol=margin):
            return theta


def finite_difference_errors(model: EnvModel, theta, x: int, y: int, h: float = FD_STEP) -> tuple[float, float]:
    fam = model.family
    theta = np.asarray(theta, dtype=float)
    eye = np.eye(len(theta))
    fd_grad = np.array([(phi(fam, theta + h * e, x, y) - phi(fam, theta - h * e, x, y)) / (2 * h) for e in eye])
    fd_hess = np.array([(grad_phi(fam, theta + h * e, x, y) - grad_phi(fam, theta - h * e, x, y)) / (2 * h)
                        for e in eye])
    return _rel_err(grad_phi(fam, theta, x, y), fd_grad), _rel_err(hess_phi(fam, theta, x, y), fd_hess)


def check_derivatives(model: EnvModel, triples: int = 1000, xy_max: int = 50, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_g = worst_h = 0.0
    for _ in range(triples):
        theta = random_interior_theta(model, rng)
        x, y = (int(v) for v in rng.integers(0, xy_max + 1, size=2))
        eg, eh = finite_difference_errors(model, theta, x, y)
        worst_g = max(worst_g, eg)
        worst_h = max(worst_h, eh)
    name = model.family.name
    return [
        CheckResult(f"gradient-fd[{name}]", worst_g <= GRAD_RTOL, worst_g),
        CheckResult(f"hessian-fd[{name}]", worst_h <= HESS_RTOL, worst_h),
    ]


def check_normalization(model: EnvModel, x_max: int = 30) -> CheckResult:
    rows = kernel_check(model, x_max)
    low = min(r["sum"] for r in rows)
    high = max(r["sum"] for r in rows)
    ok = low >= 1.0 - 1e-8 and high <= 1.0 + 1e-10
    worst = max(1.0 - low, high - 1.0)
    return CheckResult(f"kernel-normalization[{model.family.name}]", ok, worst,
                       f"row sums in [{low:.12f}, {high:.12f}]")


def check_beta_dual_formula(theta=(5.0, 1.0), total_max: int = 500, samples: int = 400,
                            seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    pairs = [(0, 0), (2, 3), (total_max, 0), (0, total_max), (total_max // 2, total_max // 2)]
    for _ in range(samples):
        x = int(rng.integers(0, total_max + 1))
        pairs.append((x, int(rng.integers(0, total_max - x + 1))))
    for x, y in pairs:
        a = float(phi(EnvModel.beta(*theta).family, theta, x, y))
        b = phi_beta_sums(theta, x, y)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    return CheckResult("beta-dual-formula", worst <= 1e-12, worst)


def run_all(triples: int = 1000) -> list[CheckResult]:
    results = []
    for model in reference_models():
        results.extend(check_derivatives(model, triples))
        results.append(check_normalization(model))
    results.append(check_beta_dual_formula())
    return results


def format_results(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        worst = f"{r.worst:.3e}" if math.isfinite(r.worst) else str(r.worst)
        lines.append(f"{flag}  {r.name:<36} worst={worst} {r.detail}".rstrip())
    return "\n".join(lines)

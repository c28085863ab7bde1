"""Maximum likelihood estimation, observed information and confidence regions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import qmc

from .env_models import EnvModel, Family, ThetaBox
from .errors import DomainError, RegionUnavailableError
from .likelihood import LikelihoodEval, criterion, criterion_value
from .quantiles import chi2_quantile, normal_quantile

N_STARTS = 8
MAX_ITER = 200
STEP_TOL = 1e-10
GRAD_TOL_PER_SITE = 1e-6
ARMIJO_C = 1e-4
GOLDEN_TOL = 1e-12


class Status(str, Enum):
    CONVERGED = "converged"
    BOUNDARY = "boundary"
    FAILED = "failed"


@dataclass(frozen=True)
class ConfidenceRegion:
    """Asymptotic ``1 - gamma`` region around ``center``.

    For ``d = 1`` this is the interval ``center +- q / sqrt(n sigma)``; for
    ``d >= 2`` the ellipsoid ``n (c - t)' sigma (c - t) <= chi2_{1-gamma}(d)``.
    """

    center: np.ndarray
    sigma: np.ndarray
    n: int
    gamma: float
    threshold: float
    interval: tuple[float, float] | None = None

    def statistic(self, theta) -> float:
        diff = self.center - np.asarray(theta, dtype=float)
        return float(self.n * diff @ self.sigma @ diff)

    def covers(self, theta) -> bool:
        if self.interval is not None:
            lo, hi = self.interval
            return bool(lo <= float(np.ravel(theta)[0]) <= hi)
        return self.statistic(theta) <= self.threshold


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    status: Status
    n: int
    grad_norm_at_opt: float
    value: float
    region_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def region(self, gamma: float) -> ConfidenceRegion:
        if gamma not in self.region_cache:
            self.region_cache[gamma] = confidence_region(self, gamma)
        return self.region_cache[gamma]

    def to_dict(self, gammas=()) -> dict:
        out = {
            "theta_hat": self.theta_hat.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "status": self.status.value,
            "n": self.n,
            "grad_norm_at_opt": self.grad_norm_at_opt,
            "criterion_value": self.value,
            "regions": {},
        }
        for g in gammas:
            try:
                reg = self.region(g)
            except RegionUnavailableError as exc:
                out["regions"][str(g)] = {"available": False, "reason": str(exc)}
                continue
            entry = {"available": True, "threshold": reg.threshold}
            if reg.interval is not None:
                entry["interval"] = list(reg.interval)
            out["regions"][str(g)] = entry
        return out


@dataclass(frozen=True)
class _StartResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    status: Status


def _ascent_direction(hessian: np.ndarray, grad: np.ndarray) -> np.ndarray:
    neg = -hessian
    w = np.linalg.eigvalsh(neg)
    delta = 1e-8 * max(1.0, float(np.max(np.abs(w))))
    shift = max(0.0, delta - float(w[0]))
    return np.linalg.solve(neg + shift * np.eye(len(grad)), grad)


def _newton(fun, theta0, box: ThetaBox, grad_tol: float) -> _StartResult:
    """Projected Newton ascent with Hessian shift and Armijo backtracking."""
    theta = box.project(theta0)
    ev: LikelihoodEval = fun(theta)
    for _ in range(MAX_ITER):
        g = ev.gradient
        if np.linalg.norm(g) <= grad_tol and not box.on_boundary(theta):
            break
        try:
            direction = _ascent_direction(ev.hessian, g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        accepted = None
        while t >= 1e-12:
            cand = box.project(theta + t * direction)
            ev_c = fun(cand)
            if np.isfinite(ev_c.value) and ev_c.value >= ev.value + ARMIJO_C * float(g @ (cand - theta)):
                accepted = (cand, ev_c)
                break
            t *= 0.5
        if accepted is None:
            break
        step = float(np.linalg.norm(accepted[0] - theta))
        theta, ev = accepted
        if step < STEP_TOL:
            break
    gnorm = float(np.linalg.norm(ev.gradient))
    if box.on_boundary(theta):
        status = Status.BOUNDARY
    elif gnorm <= grad_tol and np.all(np.isfinite(ev.hessian)):
        status = Status.CONVERGED
    else:
        status = Status.FAILED
    return _StartResult(theta, ev.value, gnorm, status)


def _golden_max(fun, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    best = max([(fun(lo), lo), (fc, c), (fd, d), (fun(hi), hi)])
    return best[1]


def start_points(box: ThetaBox, rng: np.random.Generator | None, n_starts: int = N_STARTS) -> list[np.ndarray]:
    """Box center followed by scrambled Halton points mapped into the box."""
    starts = [box.center()]
    if n_starts > 1:
        sampler = qmc.Halton(box.dim, scramble=True, seed=rng if rng is not None else 0)
        pts = qmc.scale(sampler.random(n_starts - 1), box.lower, box.upper)
        starts += [box.project(pt) for pt in pts]
    return starts


def _select(results: list[_StartResult]) -> _StartResult:
    def key(r):
        return (-r.value, r.grad_norm, tuple(r.theta))

    for status in (Status.CONVERGED, Status.BOUNDARY, Status.FAILED):
        pool = [r for r in results if r.status is status and np.isfinite(r.value)]
        if pool:
            return min(pool, key=key)
    return results[0]


def mle(family: Family, L, box: ThetaBox | None = None, rng: np.random.Generator | None = None,
        n_starts: int = N_STARTS) -> EstimateReport:
    """Maximize ``ell_n`` over the box; failures are encoded in ``status``."""
    box = box if box is not None else family.default_box()
    L = np.asarray(L)
    n = len(L) - 1
    grad_tol = GRAD_TOL_PER_SITE * n

    def fun(theta):
        return criterion(family, theta, L)

    if box.dim == 1 and box.coupling is None:
        lo, hi = box.lower[0], box.upper[0]
        p0 = _golden_max(lambda p: criterion_value(family, (p,), L), lo, hi)
        results = [_newton(fun, np.array([p0]), box, grad_tol)]
    else:
        results = [_newton(fun, s, box, grad_tol) for s in start_points(box, rng, n_starts)]
    best = _select(results)
    try:
        sigma = observed_fisher(family, best.theta, L)
    except DomainError:
        sigma = np.full((box.dim, box.dim), np.nan)
    return EstimateReport(best.theta, sigma, best.status, n, best.grad_norm, best.value)


def model_mle(model: EnvModel, L, rng: np.random.Generator | None = None, n_starts: int = N_STARTS) -> EstimateReport:
    return mle(model.family, L, model.box, rng, n_starts)


def observed_fisher(family: Family, theta_hat, L) -> np.ndarray:
    """``-(1/n) sum_x hess phi_{theta_hat}(L_{x+1}, L_x)``, symmetrized."""
    ev = criterion(family, theta_hat, L)
    m = -ev.hessian / ev.n
    return 0.5 * (m + m.T)


def confidence_region(report: EstimateReport, gamma: float) -> ConfidenceRegion:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if report.status is not Status.CONVERGED:
        raise RegionUnavailableError(f"estimate status is {report.status.value}")
    sigma = report.sigma_hat
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise RegionUnavailableError("observed information is not positive definite") from None
    d = len(report.theta_hat)
    if d == 1:
        q = normal_quantile(1.0 - gamma / 2.0)
        half = q / math.sqrt(report.n * float(sigma[0, 0]))
        center = float(report.theta_hat[0])
        return ConfidenceRegion(report.theta_hat, sigma, report.n, gamma, q * q, (center - half, center + half))
    return ConfidenceRegion(report.theta_hat, sigma, report.n, gamma, chi2_quantile(1.0 - gamma, d))


def standardized_error(report: EstimateReport, theta_star) -> np.ndarray:
    """``sqrt(n) sigma_hat^(1/2) (theta_hat - theta_star)``, asymptotically N(0, I)."""
    w, v = np.linalg.eigh(report.sigma_hat)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return math.sqrt(report.n) * root @ (report.theta_hat - np.asarray(theta_star, dtype=float))


def temkin_naive(T_n: float, n: int, a: float) -> float:
    """Invert the Temkin speed ``c(p) = T_n / n`` for ``p``."""
    if not a > 0.5:
        raise DomainError(f"Temkin atom must exceed 1/2, got {a}")
    if T_n < n:
        raise DomainError(f"T_n={T_n} cannot be smaller than n={n}")
    return a / (2.0 * a - 1.0) * ((2.0 * a - 1.0) * T_n + n) / (T_n + n)

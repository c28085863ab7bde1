"""Branching process with immigration in random environment.

Under the annealed law the reversed left-step counts ``(L_n, ..., L_0)`` of
the walk are distributed as the chain ``Z_0 = 0``,
``Z_{k+1} = sum_{i=0}^{Z_k} xi_{k+1,i}`` where, given ``omega_k``, the
``xi`` are geometric on ``{0, 1, ...}`` with success probability
``omega_k``. Its one-step kernel is
``Q(x, y) = binom(x+y, x) exp(phi(x, y))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import special, stats

from .env_models import BetaFamily, EnvModel, draw_omegas, rho_moment
from .errors import DivergentSeriesError, DomainError
from .likelihood import grad_phi, phi

TAIL_TOL = 1e-8
Y_CAP = 10**6
CHUNK = 1 << 16
MC_ENVIRONMENTS = 10**5
TRUNCATION_TOL = 1e-6


@dataclass(frozen=True)
class BpireTrace:
    states: np.ndarray
    model: EnvModel

    def __post_init__(self):
        if self.states[0] != 0:
            raise DomainError("a BPIRE trace starts at Z_0 = 0")

    @property
    def steps(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class KernelRow:
    x: int
    probs: np.ndarray
    tail_mass: float


def log_kernel(model: EnvModel, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    log_binom = special.gammaln(x + y + 1.0) - special.gammaln(x + 1.0) - special.gammaln(y + 1.0)
    return log_binom + phi(model.family, model.theta, x, y)


def kernel_prob(model: EnvModel, x, y):
    """``Q_theta(x, y)``, evaluated in the log domain."""
    return np.exp(log_kernel(model, x, y))


def kernel_tail(model: EnvModel, x: int, y_max: int) -> float:
    """``P(Z_{k+1} > y_max | Z_k = x)`` from negative-binomial survival functions."""
    if isinstance(model.family, BetaFamily):
        alpha, beta = model.theta
        return float(stats.betanbinom.sf(y_max, x + 1, alpha, beta))
    p, a1, a2 = model.family.atoms(model.theta)
    return float(p * stats.nbinom.sf(y_max, x + 1, a1) + (1.0 - p) * stats.nbinom.sf(y_max, x + 1, a2))


def _row_length(model: EnvModel, x: int, tail_tol: float, cap: int) -> int:
    y_max = 64
    while kernel_tail(model, x, y_max) >= tail_tol:
        y_max *= 2
        if y_max > cap:
            raise DomainError(f"kernel row x={x} needs more than {cap} terms for tail < {tail_tol}")
    return y_max


def kernel_row(model: EnvModel, x: int, tail_tol: float = TAIL_TOL, cap: int = Y_CAP) -> KernelRow:
    """Row ``Q(x, 0..Y)`` with ``Y`` grown until the exact tail is below ``tail_tol``."""
    y_max = _row_length(model, x, tail_tol, cap)
    probs = kernel_prob(model, x, np.arange(y_max + 1))
    return KernelRow(x, probs, kernel_tail(model, x, y_max))


def kernel_derivative_sum(model: EnvModel, x: int, tail_tol: float = TAIL_TOL, cap: int = Y_CAP) -> np.ndarray:
    """``sum_{y <= Y} dQ/dtheta(x, y)``; vanishes when derivative and sum commute."""
    y_max = _row_length(model, x, tail_tol, cap)
    y = np.arange(y_max + 1)
    q = kernel_prob(model, x, y)
    return (q[:, None] * grad_phi(model.family, model.theta, x, y)).sum(axis=0)


def _geometric(omega: float, u: np.ndarray) -> int:
    if omega >= 1.0:
        return 0
    return int(np.floor(np.log1p(-u) / math.log1p(-omega)).sum())


def step_chain(model: EnvModel, z: int, rng: np.random.Generator) -> int:
    """One annealed transition: fresh ``omega``, then ``z + 1`` geometric draws."""
    omega = float(draw_omegas(model, 1, rng)[0])
    return _geometric(omega, rng.random(z + 1))


def step_chain_given(omega: float, z: int, rng: np.random.Generator) -> int:
    return _geometric(omega, rng.random(z + 1))


@numba.njit(cache=True)
def _run_chain(z, k, omegas, out, uniforms, i):
    m = uniforms.shape[0]
    while k < omegas.shape[0]:
        need = z + 1
        if i + need > m:
            return z, k, i
        w = omegas[k]
        total = 0
        if w < 1.0:
            lq = math.log1p(-w)
            for j in range(need):
                total += int(math.floor(math.log1p(-uniforms[i + j]) / lq))
        i += need
        z = total
        k += 1
        out[k] = z
    return z, k, i


def simulate_chain(model: EnvModel, steps: int, rng: np.random.Generator) -> BpireTrace:
    """Trace ``Z_0 = 0, Z_1, ..., Z_steps``."""
    env_rng, geo_rng = rng.spawn(2)
    omegas = draw_omegas(model, steps, env_rng)
    out = np.zeros(steps + 1, dtype=np.int64)
    z, k = 0, 0
    buf = np.empty(0)
    i = 0
    while k < steps:
        if i + z + 1 > len(buf):
            buf = np.concatenate([buf[i:], geo_rng.random(max(CHUNK, z + 1))])
            i = 0
        z, k, i = _run_chain(z, k, omegas, out, buf, i)
    return BpireTrace(out, model)


def stationary_mean(model: EnvModel) -> float:
    """First moment of the invariant law, ``E rho / (1 - E rho)``."""
    return stationary_factorial_moment(model, 0)


def _truncation_terms(m: float, tol: float = TRUNCATION_TOL) -> int:
    return max(1, math.ceil(math.log(tol * (1.0 - m)) / math.log(m)))


def stationary_factorial_moment(model: EnvModel, j: int, n_terms: int | None = None,
                                rng: np.random.Generator | None = None,
                                n_env: int = MC_ENVIRONMENTS) -> float:
    """``sum_k k(k-1)...(k-j) pi(k) = (j+1)! E[(sum_n prod_{k<=n} rho_k)^(j+1)]``.

    ``j = 0`` uses the closed geometric series; higher orders average the
    truncated series over ``n_env`` independent environments.
    """
    if j < 0:
        raise DomainError("factorial moment order must be nonnegative")
    m = rho_moment(model, j + 1.0)
    if m >= 1.0:
        raise DivergentSeriesError(f"E[rho^{j + 1}] = {m:.6g} >= 1: moment of order {j + 1} is infinite")
    if j == 0:
        return m / (1.0 - m)
    rng = rng if rng is not None else np.random.default_rng(0)
    n_terms = n_terms if n_terms is not None else _truncation_terms(m)
    total = 0.0
    done = 0
    chunk = 10_000
    while done < n_env:
        size = min(chunk, n_env - done)
        omega = draw_omegas(model, size * n_terms, rng).reshape(size, n_terms)
        rho = (1.0 - omega) / omega
        s = np.zeros(size)
        for col in range(n_terms - 1, -1, -1):
            s = rho[:, col] * (1.0 + s)
        total += float(np.sum(s ** (j + 1)))
        done += size
    return math.factorial(j + 1) * total / n_env


def factorial_moment_exact(model: EnvModel, j: int) -> float:
    """Same quantity by the exact recursion on ``S = rho_1 (1 + S')``.

    ``E S^m (1 - E rho^m) = E rho^m sum_{i<m} C(m, i) E S^i``.
    """
    moments = [1.0]
    for m in range(1, j + 2):
        r = rho_moment(model, float(m))
        if r >= 1.0:
            raise DivergentSeriesError(f"E[rho^{m}] = {r:.6g} >= 1")
        acc = sum(math.comb(m, i) * moments[i] for i in range(m))
        moments.append(r * acc / (1.0 - r))
    return math.factorial(j + 1) * moments[j + 1]


def score_increments(trace: BpireTrace, theta=None) -> np.ndarray:
    """``grad phi_theta(Z_k, Z_{k+1})`` for every transition of the trace."""
    theta = trace.model.theta if theta is None else theta
    z = trace.states
    return grad_phi(trace.model.family, theta, z[:-1], z[1:])


def kernel_check(model: EnvModel, x_max: int = 30) -> list[dict]:
    rows = []
    for x in range(x_max + 1):
        row = kernel_row(model, x)
        total = math.fsum(row.probs)
        rows.append({"x": x, "length": len(row.probs), "sum": total, "tail": row.tail_mass,
                     "residual": total + row.tail_mass - 1.0})
    return rows

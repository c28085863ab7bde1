"""Quenched nearest-neighbour walk run until it first hits a target site.

The walk starts at 0 and steps right from ``x`` with probability ``omega_x``.
Only summaries are kept: the hitting time ``T_n`` and the left-step counts
``L_x^n``. The environment is grown lazily in blocks on both sides, so no
finite site window is imposed on the walk.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .env_models import EnvModel, classify_regime, draw_omegas
from .errors import DomainError, RunawayWalkError

BLOCK = 1024
CHUNK = 1 << 16
STEP_BUDGET = 10**10


class Environment:
    """Site probabilities ``omega_x`` on the whole line, allocated on demand.

    ``right[k]`` holds ``omega_k`` and ``left[k]`` holds ``omega_{-k-1}``.
    Without a model the environment is fixed and cannot grow.
    """

    def __init__(self, right, left=(), model: EnvModel | None = None,
                 right_rng: np.random.Generator | None = None,
                 left_rng: np.random.Generator | None = None, block: int = BLOCK):
        self.right = np.asarray(right, dtype=float)
        self.left = np.asarray(left, dtype=float)
        self.model = model
        self._right_rng = right_rng
        self._left_rng = left_rng
        self.block = block

    @classmethod
    def lazy(cls, model: EnvModel, right_rng: np.random.Generator,
             left_rng: np.random.Generator, block: int = BLOCK) -> Environment:
        return cls(np.empty(0), np.empty(0), model, right_rng, left_rng, block)

    @property
    def growable(self) -> bool:
        return self.model is not None

    def _grow(self, arr, rng, n_sites):
        if len(arr) >= n_sites:
            return arr
        if not self.growable:
            raise DomainError(f"fixed environment has only {len(arr)} sites on this side, need {n_sites}")
        n_blocks = -(-(n_sites - len(arr)) // self.block)
        return np.concatenate([arr, draw_omegas(self.model, n_blocks * self.block, rng)])

    def ensure_right(self, n_sites: int) -> None:
        self.right = self._grow(self.right, self._right_rng, n_sites)

    def ensure_left(self, n_sites: int) -> None:
        self.left = self._grow(self.left, self._left_rng, n_sites)

    def omega(self, x: int) -> float:
        return float(self.right[x] if x >= 0 else self.left[-x - 1])


@dataclass(frozen=True)
class WalkRecord:
    """Summary of one walk stopped at ``T_n``.

    ``left_counts[x]`` is ``L_x^n`` for ``x = 0..n``; counts at negative
    sites live in ``left_negative`` (only nonzero entries).
    """

    n: int
    hitting_time: int
    left_counts: np.ndarray
    min_site: int
    left_negative: dict[int, int] = field(default_factory=dict)

    @property
    def sum_left(self) -> int:
        return int(self.left_counts.sum()) + sum(self.left_negative.values())

    def check(self) -> None:
        if self.left_counts.shape != (self.n + 1,):
            raise AssertionError("left_counts must cover sites 0..n")
        if self.left_counts[self.n] != 0:
            raise AssertionError("no left step can occur from n before T_n")
        if self.hitting_time < self.n or (self.hitting_time - self.n) % 2:
            raise AssertionError(f"T_n={self.hitting_time} inconsistent with n={self.n}")
        if 2 * self.sum_left != self.hitting_time - self.n:
            raise AssertionError("left-step count does not match (T_n - n) / 2")


@numba.njit(cache=True)
def _advance(pos, target, right, left, cnt_right, cnt_left, uniforms, start, min_pos):
    # status 1: walk needs more environment on the left
    i = start
    m = uniforms.shape[0]
    n_left = left.shape[0]
    while pos < target and i < m:
        if pos >= 0:
            w = right[pos]
        else:
            k = -pos - 1
            if k >= n_left:
                return pos, i, min_pos, 1
            w = left[k]
        u = uniforms[i]
        i += 1
        if u < w:
            pos += 1
        else:
            if pos >= 0:
                cnt_right[pos] += 1
            else:
                cnt_left[-pos - 1] += 1
            pos -= 1
            if pos < min_pos:
                min_pos = pos
    return pos, i, min_pos, 0


class Walker:
    """One trajectory that can be stopped successively at ``T_n1 < T_n2 < ...``."""

    def __init__(self, env: Environment, rng: np.random.Generator,
                 step_budget: int = STEP_BUDGET, chunk: int = CHUNK):
        self.env = env
        self.rng = rng
        self.step_budget = step_budget
        self.chunk = chunk
        self.pos = 0
        self.steps = 0
        self.min_site = 0
        self._cnt_right = np.zeros(0, dtype=np.int64)
        self._cnt_left = np.zeros(0, dtype=np.int64)
        self._buf = np.empty(0)
        self._idx = 0

    def run_to(self, n: int) -> WalkRecord:
        if n < 1:
            raise DomainError(f"target site must be positive, got {n}")
        if n < self.pos:
            raise DomainError(f"walk already at {self.pos}, cannot stop at {n}")
        self.env.ensure_right(n)
        if len(self._cnt_right) < n + 1:
            self._cnt_right = np.concatenate(
                [self._cnt_right, np.zeros(n + 1 - len(self._cnt_right), dtype=np.int64)])
        while self.pos < n:
            if self._idx >= len(self._buf):
                if self.steps >= self.step_budget:
                    raise RunawayWalkError(
                        f"no hit of site {n} within {self.step_budget} steps; is the model ballistic?")
                size = min(self.chunk, self.step_budget - self.steps)
                self._buf = self.rng.random(size)
                self._idx = 0
            start = self._idx
            self.pos, self._idx, self.min_site, status = _advance(
                self.pos, n, self.env.right, self.env.left, self._cnt_right,
                self._cnt_left, self._buf, start, self.min_site)
            self.steps += self._idx - start
            if status == 1:
                self.env.ensure_left(len(self.env.left) + 1)
                grow = len(self.env.left) - len(self._cnt_left)
                self._cnt_left = np.concatenate([self._cnt_left, np.zeros(grow, dtype=np.int64)])
        neg = {-(k + 1): int(c) for k, c in enumerate(self._cnt_left) if c}
        record = WalkRecord(n, self.steps, self._cnt_right[: n + 1].copy(), self.min_site, neg)
        record.check()
        return record


def run_to_hitting(model: EnvModel, n: int, rng: np.random.Generator,
                   env: Environment | None = None, step_budget: int = STEP_BUDGET) -> WalkRecord:
    """Simulate ``X`` from 0 until ``T_n``.

    With ``env=None`` a fresh environment is drawn from ``model`` (annealed
    sampling); otherwise the walk runs in the given environment (quenched).
    """
    if not classify_regime(model).ballistic:
        raise DomainError(f"model {model.to_dict()} is not ballistic; refusing to simulate")
    if env is None:
        right_rng, left_rng = rng.spawn(2)
        env = Environment.lazy(model, right_rng, left_rng)
    return Walker(env, rng, step_budget).run_to(n)


def criterion_stats(record: WalkRecord) -> np.ndarray:
    """Dense vector ``(L_0^n, ..., L_n^n)``; negative sites are dropped."""
    return record.left_counts.copy()


def record_from_path(path) -> WalkRecord:
    """Build a record from an explicit nearest-neighbour path ending at its first hit of ``n``."""
    path = [int(v) for v in path]
    if path[0] != 0:
        raise DomainError("path must start at 0")
    n = path[-1]
    if n < 1 or n in path[:-1]:
        raise DomainError("path must end at its first visit of a positive site")
    counts = np.zeros(n + 1, dtype=np.int64)
    neg: dict[int, int] = {}
    for a, b in zip(path, path[1:]):
        if abs(a - b) != 1:
            raise DomainError(f"non nearest-neighbour step {a} -> {b}")
        if b == a - 1:
            if a >= 0:
                counts[a] += 1
            else:
                neg[a] = neg.get(a, 0) + 1
    record = WalkRecord(n, len(path) - 1, counts, min(path), neg)
    record.check()
    return record

"""Parametric i.i.d. environment families and regime classification.

Three families are supported:

* ``TwoPointKnown(a1, a2)``: ``nu_p = p delta_{a1} + (1 - p) delta_{a2}``, theta = (p,)
* ``TwoPointFree``: same mixture with theta = (p, a1, a2) all unknown
* ``BetaFamily``: Beta(alpha, beta) environment, theta = (alpha, beta)

An :class:`EnvModel` binds a family to a parameter value and a compact
parameter box. Everything here is an immutable value; randomness enters
only through an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence, Union

import numpy as np
from scipy import special

from .errors import DomainError, InfiniteMomentError

KAPPA_S_MIN = 1e-6
KAPPA_S_MAX = 64.0
KAPPA_TOL = 1e-10


@dataclass(frozen=True)
class ThetaBox:
    """Compact parameter set: a rectangle plus an optional ordering constraint.

    ``coupling = (hi, lo, gap)`` adds ``theta[hi] - theta[lo] >= gap``; it
    expresses the ordered boxes ``a2 >= a1 + 0.05`` and ``beta <= alpha - 1.05``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    coupling: tuple[int, int, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise DomainError("box bounds have mismatched lengths")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise DomainError(f"empty box: {self.lower} > {self.upper}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def _coupling_slack(self, theta) -> float:
        if self.coupling is None:
            return math.inf
        hi, lo, gap = self.coupling
        return theta[hi] - theta[lo] - gap

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            return False
        inside = np.all(theta >= np.asarray(self.lower) - tol) and np.all(
            theta <= np.asarray(self.upper) + tol
        )
        return bool(inside) and self._coupling_slack(theta) >= -tol

    def on_boundary(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        scale = np.maximum(hi - lo, 1.0)
        near = np.any(theta - lo <= tol * scale) or np.any(hi - theta <= tol * scale)
        return bool(near) or self._coupling_slack(theta) <= tol

    def project(self, theta) -> np.ndarray:
        """Map ``theta`` to a nearby feasible point.

        Alternates rectangle clipping with the half-plane projection of the
        coupling constraint; exact Euclidean projection when only one of the
        two sets is active.
        """
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        out = np.clip(np.asarray(theta, dtype=float), lo, hi)
        if self.coupling is None:
            return out
        i_hi, i_lo, gap = self.coupling
        for _ in range(64):
            slack = out[i_hi] - out[i_lo] - gap
            if slack >= 0.0:
                return out
            out[i_hi] -= slack / 2.0
            out[i_lo] += slack / 2.0
            out = np.clip(out, lo, hi)
        out[i_hi] = min(max(out[i_hi], out[i_lo] + gap), hi[i_hi])
        out[i_lo] = max(min(out[i_lo], out[i_hi] - gap), lo[i_lo])
        return out

    def center(self) -> np.ndarray:
        return self.project((np.asarray(self.lower) + np.asarray(self.upper)) / 2.0)

    def to_list(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in zip(self.lower, self.upper)]


def _check_prob(name: str, value: float, closed: bool = False) -> None:
    ok = 0.0 <= value <= 1.0 if closed else 0.0 < value < 1.0
    if not (ok and math.isfinite(value)):
        interval = "[0, 1]" if closed else "(0, 1)"
        raise DomainError(f"{name}={value} must lie in {interval}")


@dataclass(frozen=True)
class TwoPointKnown:
    """Mixture of two known atoms ``a1 < a2``; the weight ``p`` sits on ``a1``."""

    a1: float
    a2: float

    name: ClassVar[str] = "two-point-known"
    dim: ClassVar[int] = 1
    param_names: ClassVar[tuple[str, ...]] = ("p",)

    def __post_init__(self):
        _check_prob("a1", self.a1)
        _check_prob("a2", self.a2)
        if not self.a1 < self.a2:
            raise DomainError(f"atoms must satisfy a1 < a2, got {self.a1}, {self.a2}")

    def atoms(self, theta) -> tuple[float, float, float]:
        (p,) = theta
        return float(p), self.a1, self.a2

    def check(self, theta) -> None:
        if len(theta) != 1:
            raise DomainError(f"{self.name} expects 1 parameter, got {len(theta)}")
        _check_prob("p", theta[0], closed=True)

    def default_box(self) -> ThetaBox:
        return ThetaBox((0.01,), (0.99,))


@dataclass(frozen=True)
class TwoPointFree:
    """Two-atom mixture with weight and both atoms unknown, theta = (p, a1, a2)."""

    name: ClassVar[str] = "two-point-free"
    dim: ClassVar[int] = 3
    param_names: ClassVar[tuple[str, ...]] = ("p", "a1", "a2")

    def atoms(self, theta) -> tuple[float, float, float]:
        p, a1, a2 = theta
        return float(p), float(a1), float(a2)

    def check(self, theta) -> None:
        if len(theta) != 3:
            raise DomainError(f"{self.name} expects 3 parameters, got {len(theta)}")
        p, a1, a2 = theta
        _check_prob("p", p, closed=True)
        _check_prob("a1", a1)
        _check_prob("a2", a2)
        if not a1 < a2:
            raise DomainError(f"atoms must satisfy a1 < a2, got {a1}, {a2}")

    def default_box(self) -> ThetaBox:
        return ThetaBox((0.05, 0.05, 0.10), (0.95, 0.65, 0.95), coupling=(2, 1, 0.05))


@dataclass(frozen=True)
class BetaFamily:
    """Beta(alpha, beta) environment; ballistic iff alpha > beta + 1."""

    name: ClassVar[str] = "beta"
    dim: ClassVar[int] = 2
    param_names: ClassVar[tuple[str, ...]] = ("alpha", "beta")

    def check(self, theta) -> None:
        if len(theta) != 2:
            raise DomainError(f"{self.name} expects 2 parameters, got {len(theta)}")
        a, b = theta
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"Beta parameters must be positive, got {a}, {b}")

    def default_box(self) -> ThetaBox:
        return ThetaBox((1.5, 0.2), (12.0, 10.95), coupling=(0, 1, 1.05))


Family = Union[TwoPointKnown, TwoPointFree, BetaFamily]


def family_from_name(name: str, atoms: Sequence[float] | None = None) -> Family:
    if name == TwoPointKnown.name:
        if atoms is None or len(atoms) != 2:
            raise DomainError("two-point-known requires two atoms (a1, a2)")
        return TwoPointKnown(float(atoms[0]), float(atoms[1]))
    if name == TwoPointFree.name:
        return TwoPointFree()
    if name == BetaFamily.name:
        return BetaFamily()
    raise DomainError(f"unknown family {name!r}")


@dataclass(frozen=True)
class EnvModel:
    """An environment law ``nu_theta``: family, parameter value and box."""

    family: Family
    theta: tuple[float, ...]
    box: ThetaBox = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        theta = tuple(float(v) for v in self.theta)
        object.__setattr__(self, "theta", theta)
        self.family.check(theta)
        if self.box is None:
            object.__setattr__(self, "box", self.family.default_box())
        if self.box.dim != self.family.dim:
            raise DomainError(f"box dimension {self.box.dim} != family dimension {self.family.dim}")
        _check_box_admissible(self.family, self.box)
        if isinstance(self.family, BetaFamily) and not theta[0] > theta[1] + 1:
            raise DomainError(f"Beta model needs alpha > beta + 1, got {theta}")
        if not self.box.contains(theta, tol=1e-12):
            raise DomainError(f"theta {theta} lies outside the box {self.box}")

    @property
    def dim(self) -> int:
        return self.family.dim

    def with_theta(self, theta) -> EnvModel:
        return EnvModel(self.family, tuple(theta), self.box)

    @classmethod
    def two_point_known(cls, a1: float, a2: float, p: float, box: ThetaBox | None = None) -> EnvModel:
        return cls(TwoPointKnown(a1, a2), (p,), box)

    @classmethod
    def two_point_free(cls, p: float, a1: float, a2: float, box: ThetaBox | None = None) -> EnvModel:
        return cls(TwoPointFree(), (p, a1, a2), box)

    @classmethod
    def beta(cls, alpha: float, beta: float, box: ThetaBox | None = None) -> EnvModel:
        return cls(BetaFamily(), (alpha, beta), box)

    @classmethod
    def temkin(cls, a: float, p: float) -> EnvModel:
        """Temkin law ``p delta_a + (1 - p) delta_{1-a}`` with ``a > 1/2``.

        Stored as ``TwoPointKnown(1 - a, a)`` whose weight on the smaller atom
        is ``1 - p``.
        """
        if not 0.5 < a < 1.0:
            raise DomainError(f"Temkin atom must lie in (1/2, 1), got {a}")
        return cls.two_point_known(1.0 - a, a, 1.0 - p)

    def to_dict(self) -> dict:
        out = {"family": self.family.name, "theta": list(self.theta), "box": self.box.to_list()}
        if isinstance(self.family, TwoPointKnown):
            out["atoms"] = [self.family.a1, self.family.a2]
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> EnvModel:
        family = family_from_name(spec["family"], spec.get("atoms"))
        box = None
        if spec.get("box") is not None:
            bounds = spec["box"]
            default = family.default_box()
            box = ThetaBox([b[0] for b in bounds], [b[1] for b in bounds], default.coupling)
        return cls(family, tuple(spec["theta"]), box)


def _check_box_admissible(family: Family, box: ThetaBox) -> None:
    lo, hi = box.lower, box.upper
    if isinstance(family, (TwoPointKnown, TwoPointFree)):
        if lo[0] < 0.0 or hi[0] > 1.0:
            raise DomainError("mixture weight box must lie in [0, 1]")
        if isinstance(family, TwoPointFree):
            if lo[1] <= 0.0 or lo[2] <= 0.0 or hi[1] >= 1.0 or hi[2] >= 1.0:
                raise DomainError("atom boxes must lie inside (0, 1)")
            if box.coupling is None or box.coupling[:2] != (2, 1) or box.coupling[2] <= 0:
                raise DomainError("two-point-free box needs an a2 - a1 >= gap > 0 constraint")
    else:
        if lo[0] <= 0.0 or lo[1] <= 0.0:
            raise DomainError("Beta box must lie in (0, inf)^2")
        if box.coupling is None or box.coupling[:2] != (0, 1) or box.coupling[2] <= 1.0:
            raise DomainError("Beta box needs an alpha - beta >= gap > 1 constraint")


@dataclass(frozen=True)
class RegimeReport:
    e_log_rho: float
    e_rho: float
    transient_right: bool
    ballistic: bool
    kappa: float
    speed_limit_c: float | None


def sample_environment(model: EnvModel, site_lo: int, site_hi: int, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. ``omega_x`` for ``x = site_lo..site_hi`` (inclusive)."""
    if not site_lo <= 0 <= site_hi:
        raise DomainError(f"site range must contain 0, got [{site_lo}, {site_hi}]")
    return draw_omegas(model, site_hi - site_lo + 1, rng)


def draw_omegas(model: EnvModel, size: int, rng: np.random.Generator) -> np.ndarray:
    fam = model.family
    if isinstance(fam, BetaFamily):
        alpha, beta = model.theta
        return rng.beta(alpha, beta, size)
    p, a1, a2 = fam.atoms(model.theta)
    return np.where(rng.random(size) < p, a1, a2)


def rho_moment(model: EnvModel, s: float) -> float:
    """``E[rho_0 ** s]`` with ``rho_0 = (1 - omega_0) / omega_0``."""
    fam = model.family
    if isinstance(fam, BetaFamily):
        alpha, beta = model.theta
        if s >= alpha or s <= -beta:
            raise InfiniteMomentError(f"E[rho^{s}] is infinite for Beta({alpha}, {beta})")
        return math.exp(special.betaln(alpha - s, beta + s) - special.betaln(alpha, beta))
    p, a1, a2 = fam.atoms(model.theta)
    r1 = (1.0 - a1) / a1
    r2 = (1.0 - a2) / a2
    return p * r1**s + (1.0 - p) * r2**s


def e_log_rho(model: EnvModel) -> float:
    fam = model.family
    if isinstance(fam, BetaFamily):
        alpha, beta = model.theta
        return float(special.digamma(beta) - special.digamma(alpha))
    p, a1, a2 = fam.atoms(model.theta)
    return p * math.log((1.0 - a1) / a1) + (1.0 - p) * math.log((1.0 - a2) / a2)


def solve_kappa(model: EnvModel, s_max: float = KAPPA_S_MAX, tol: float = KAPPA_TOL) -> float:
    """Positive root of ``E[rho^s] = 1`` by bisection; ``inf`` if none below ``s_max``.

    Returns ``nan`` for walks that are not transient to the right, where no
    positive root exists.
    """
    if e_log_rho(model) >= 0.0:
        return math.nan
    lo = KAPPA_S_MIN
    hi = s_max
    if isinstance(model.family, BetaFamily):
        hi = min(s_max, model.theta[0] * (1.0 - 1e-12))

    def f(s):
        return rho_moment(model, s) - 1.0

    if f(lo) >= 0.0:
        return lo
    if f(hi) < 0.0:
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify_regime(model: EnvModel, s_max: float = KAPPA_S_MAX) -> RegimeReport:
    elr = e_log_rho(model)
    try:
        er = rho_moment(model, 1.0)
    except InfiniteMomentError:
        er = math.inf
    transient = elr < 0.0
    ballistic = transient and er < 1.0
    c = (1.0 + er) / (1.0 - er) if ballistic else None
    return RegimeReport(
        e_log_rho=elr,
        e_rho=er,
        transient_right=transient,
        ballistic=ballistic,
        kappa=solve_kappa(model, s_max),
        speed_limit_c=c,
    )


def moment_condition(model: EnvModel) -> dict:
    """``E rho^3`` and whether it is below 1.

    The normality argument for the free two-point family needs a finite third
    moment of the stationary law, which holds iff ``E rho^3 < 1``; reports
    carry the flag instead of refusing to run.
    """
    try:
        m3 = rho_moment(model, 3.0)
    except InfiniteMomentError:
        m3 = math.inf
    return {"e_rho_cubed": m3 if math.isfinite(m3) else None, "e_rho_cubed_below_one": bool(m3 < 1.0)}


def moment_jacobian(model: EnvModel) -> np.ndarray:
    """Matrix ``J[i, k] = d/dtheta_i E[omega_0 ** (k + 1)]`` for ``k < d``.

    Full rank of this matrix is enough for a non-degenerate Fisher
    information.
    """
    fam = model.family
    d = fam.dim
    jac = np.empty((d, d))
    if isinstance(fam, BetaFamily):
        alpha, beta = model.theta
        for k in range(d):
            idx = np.arange(k + 1)
            moment = np.prod((alpha + idx) / (alpha + beta + idx))
            jac[0, k] = moment * np.sum(1.0 / (alpha + idx) - 1.0 / (alpha + beta + idx))
            jac[1, k] = -moment * np.sum(1.0 / (alpha + beta + idx))
        return jac
    p, a1, a2 = fam.atoms(model.theta)
    for k in range(d):
        jac[0, k] = a1 ** (k + 1) - a2 ** (k + 1)
        if d == 3:
            jac[1, k] = p * (k + 1) * a1**k
            jac[2, k] = (1.0 - p) * (k + 1) * a2**k
    return jac


def temkin_speed(a: float, p: float) -> float:
    """Limit of ``T_n / n`` for the Temkin law, valid for ``p > a > 1/2``."""
    return (a + p - 2.0 * a * p) / ((2.0 * a - 1.0) * (p - a))

"""Log annealed weights ``phi_theta(x, y)`` and the criterion ``ell_n``.

``phi_theta(x, y) = log int a^(x+1) (1-a)^y d nu_theta(a)``; the criterion
sums it over consecutive pairs ``(L_{x+1}, L_x)`` of left-step counts. All
functions here accept scalar or array ``x, y`` and broadcast; gradients are
returned with the parameter axis last, Hessians with the two parameter axes
last.

Two-point mixtures are handled through the component log-weights
``t_j = log w_j + (x+1) log a_j + y log(1-a_j)`` combined by log-sum-exp, so
counts in the thousands stay finite. Beta sums are evaluated with digamma
and trigamma differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .env_models import BetaFamily, EnvModel, Family, TwoPointFree, TwoPointKnown
from .errors import DomainError


@dataclass(frozen=True)
class LikelihoodEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    n: int


def _xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y < 0):
        raise DomainError("phi is defined on nonnegative integer pairs")
    return x, y


def _safe_log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _mix_components(family, theta, x, y):
    """Per-atom log-likelihoods and normalized weights for a two-point law.

    Returns ``(phi, u1, u2, s1, s2, r1, r2, p)`` where ``u_j = A_j e^-phi``
    with ``A_j = a_j^(x+1) (1-a_j)^y``, ``s_j`` and ``r_j`` the first and
    second ``a_j``-derivatives of ``log A_j``.
    """
    family.check(theta)
    p, a1, a2 = family.atoms(theta)
    la1 = (x + 1.0) * math.log(a1) + y * math.log1p(-a1)
    la2 = (x + 1.0) * math.log(a2) + y * math.log1p(-a2)
    phi = np.logaddexp(_safe_log(p) + la1, _safe_log(1.0 - p) + la2)
    u1 = np.exp(la1 - phi)
    u2 = np.exp(la2 - phi)
    s1 = (x + 1.0) / a1 - y / (1.0 - a1)
    s2 = (x + 1.0) / a2 - y / (1.0 - a2)
    r1 = -(x + 1.0) / a1**2 - y / (1.0 - a1) ** 2
    r2 = -(x + 1.0) / a2**2 - y / (1.0 - a2) ** 2
    return phi, u1, u2, s1, s2, r1, r2, p


def _check_beta(theta):
    BetaFamily().check(theta)
    return float(theta[0]), float(theta[1])


def phi(family: Family, theta, x, y):
    x, y = _xy(x, y)
    if isinstance(family, BetaFamily):
        a, b = _check_beta(theta)
        return special.betaln(x + 1.0 + a, y + b) - special.betaln(a, b)
    return _mix_components(family, theta, x, y)[0]


def phi_beta_sums(theta, x: int, y: int) -> float:
    """Beta ``phi`` as explicit log sums; independent cross-check of :func:`phi`."""
    a, b = _check_beta(theta)
    return (
        math.fsum(math.log(k + a) for k in range(x + 1))
        + math.fsum(math.log(k + b) for k in range(y))
        - math.fsum(math.log(k + a + b) for k in range(x + y + 1))
    )


def grad_phi(family: Family, theta, x, y) -> np.ndarray:
    x, y = _xy(x, y)
    if isinstance(family, BetaFamily):
        a, b = _check_beta(theta)
        common = special.digamma(x + y + 1.0 + a + b) - special.digamma(a + b)
        da = special.digamma(x + 1.0 + a) - special.digamma(a) - common
        db = special.digamma(y + b) - special.digamma(b) - common
        return np.stack([da, db], axis=-1)
    return _mix_grad(family, _mix_components(family, theta, x, y))


def _mix_grad(family, comps):
    _, u1, u2, s1, s2, _, _, p = comps
    dp = u1 - u2
    if isinstance(family, TwoPointKnown):
        return dp[..., None]
    return np.stack([dp, p * u1 * s1, (1.0 - p) * u2 * s2], axis=-1)


def hess_phi(family: Family, theta, x, y) -> np.ndarray:
    x, y = _xy(x, y)
    if isinstance(family, BetaFamily):
        a, b = _check_beta(theta)
        common = special.polygamma(1, a + b) - special.polygamma(1, x + y + 1.0 + a + b)
        haa = -(special.polygamma(1, a) - special.polygamma(1, x + 1.0 + a)) + common
        hbb = -(special.polygamma(1, b) - special.polygamma(1, y + b)) + common
        out = np.empty(np.broadcast(x, y).shape + (2, 2))
        out[..., 0, 0] = haa
        out[..., 1, 1] = hbb
        out[..., 0, 1] = out[..., 1, 0] = common
        return out
    return _mix_hess(family, _mix_components(family, theta, x, y))


def _mix_hess(family, comps):
    _, u1, u2, s1, s2, r1, r2, p = comps
    dp = u1 - u2
    if isinstance(family, TwoPointKnown):
        return (-(dp**2))[..., None, None]
    # Expanded mixture form sum_j w_j (d2 t_j + dt_j dt_j^T) - dphi dphi^T;
    # equal to the factored closed forms but free of their removable
    # singularity at (x+1)(1-a_j) = y a_j.
    d1 = p * u1 * s1
    d2 = (1.0 - p) * u2 * s2
    out = np.empty(np.shape(dp) + (3, 3))
    out[..., 0, 0] = -(dp**2)
    out[..., 0, 1] = out[..., 1, 0] = u1 * s1 - d1 * dp
    out[..., 0, 2] = out[..., 2, 0] = -u2 * s2 - d2 * dp
    out[..., 1, 1] = p * u1 * (s1**2 + r1) - d1**2
    out[..., 2, 2] = (1.0 - p) * u2 * (s2**2 + r2) - d2**2
    out[..., 1, 2] = out[..., 2, 1] = -d1 * d2
    return out


def phi_all(family: Family, theta, x, y):
    """``(phi, grad_phi, hess_phi)`` sharing one evaluation of the mixture terms."""
    if isinstance(family, BetaFamily):
        return phi(family, theta, x, y), grad_phi(family, theta, x, y), hess_phi(family, theta, x, y)
    x, y = _xy(x, y)
    comps = _mix_components(family, theta, x, y)
    return comps[0], _mix_grad(family, comps), _mix_hess(family, comps)


def _pairs(L):
    L = np.asarray(L)
    if L.ndim != 1 or len(L) < 2:
        raise DomainError("left-step statistics must be a vector (L_0, ..., L_n) with n >= 1")
    if np.any(L < 0):
        raise DomainError("left-step counts must be nonnegative")
    return L[1:].astype(np.int64), L[:-1].astype(np.int64)


def pair_counts(L):
    """Distinct pairs ``(L_{x+1}, L_x)`` with multiplicities, for weighted sums."""
    x, y = _pairs(L)
    width = int(y.max()) + 1
    keys, counts = np.unique(x * width + y, return_counts=True)
    return (keys // width).astype(float), (keys % width).astype(float), counts.astype(float), len(x)


def criterion_value(family: Family, theta, L) -> float:
    x, y, w, _ = pair_counts(L)
    return math.fsum(np.ravel(phi(family, theta, x, y) * w))


def criterion(family: Family, theta, L) -> LikelihoodEval:
    """``ell_n(theta) = sum_{x<n} phi_theta(L_{x+1}, L_x)`` with derivatives."""
    x, y, w, n = pair_counts(L)
    f, g, h = phi_all(family, theta, x, y)
    value = math.fsum(np.ravel(f * w))
    grad = np.tensordot(w, g, axes=1)
    hess = np.tensordot(w, h, axes=1)
    hess = 0.5 * (hess + hess.T)
    return LikelihoodEval(value, grad, hess, n)


def model_criterion(model: EnvModel, L) -> LikelihoodEval:
    return criterion(model.family, model.theta, L)

"""Normal and chi-square CDFs and quantiles.

The normal CDF uses ``math.erfc``; the chi-square CDF is the regularized
lower incomplete gamma ``P(d/2, x/2)`` evaluated by its power series below
``a + 1`` and by a Lentz continued fraction above. Quantiles invert the CDFs
by bisection, which is slow but monotone and reproducible bit for bit.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_MAX_TERMS = 10_000


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _bisect(cdf, u: float, lo: float, hi: float) -> float:
    while cdf(hi) < u:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if cdf(mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_quantile(u: float) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u}")
    if u < 0.5:
        return -normal_quantile(1.0 - u)
    return _bisect(normal_cdf, u, 0.0, 8.0)


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    for k in range(1, _MAX_TERMS):
        term *= x / (a + k)
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # upper tail Q(a, x) by modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float) -> float:
    """``P(a, x) = gamma(a, x) / Gamma(a)``."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def chi2_cdf(x: float, df: int) -> float:
    return regularized_lower_gamma(df / 2.0, x / 2.0)


def chi2_quantile(u: float, df: int) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u}")
    return _bisect(lambda v: chi2_cdf(v, df), u, 0.0, max(4.0 * df, 16.0))

"""Small-sample robust statistics.

Incomplete beta function, Harrell-Davis quantile weights and estimator,
moments, average ranks and Spearman rank correlation.  Everything here is a
pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedCorrelationError

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 500


def log_beta(a: float, b: float) -> float:
    """Logarithm of the complete beta function."""
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def complete_beta(a: float, b: float) -> float:
    return math.exp(log_beta(a, b))


def _beta_cf(x: float, a: float, b: float) -> float:
    # Modified Lentz evaluation of the incomplete beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def _check_beta_args(z, a, b):
    if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise InputError(f"beta parameters must be positive and finite, got a={a}, b={b}")
    if not 0.0 <= z <= 1.0:
        raise InputError(f"z must lie in [0, 1], got {z}")


def regularized_incomplete_beta(z: float, a: float, b: float) -> float:
    """Regularized incomplete beta ``I_z(a, b)``, i.e. ``B(z, a, b) / B(1, a, b)``."""
    _check_beta_args(z, a, b)
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    log_front = a * math.log(z) + b * math.log1p(-z) - log_beta(a, b)
    front = math.exp(log_front)
    if z < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(z, a, b) / a
    return 1.0 - front * _beta_cf(1.0 - z, b, a) / b


def incomplete_beta(z: float, a: float, b: float) -> float:
    """Non-regularized incomplete beta ``int_0^z y^(a-1) (1-y)^(b-1) dy``.

    Raises:
        InputError: if ``z`` is outside [0, 1] or ``a``, ``b`` are not positive.
    """
    return regularized_incomplete_beta(z, a, b) * complete_beta(a, b)


@dataclass(frozen=True)
class HdWeights:
    """Harrell-Davis weights for ``n`` order statistics at quantile ``alpha``."""

    n: int
    alpha: float
    weights: np.ndarray


@lru_cache(maxsize=1024)
def _hd_weight_tuple(n: int, alpha: float) -> tuple[float, ...]:
    a = (n + 1) * alpha
    b = (n + 1) * (1.0 - alpha)
    if alpha == 0.5:
        # Mirror the lower half so the median weights are symmetric bit for bit.
        half = [regularized_incomplete_beta(i / n, a, b) for i in range(n // 2 + 1)]
        lower = [half[i] - half[i - 1] for i in range(1, n // 2 + 1)]
        middle = [1.0 - 2.0 * half[-1]] if n % 2 else []
        return tuple(lower + middle + lower[::-1])
    cdf = [regularized_incomplete_beta(i / n, a, b) for i in range(n + 1)]
    return tuple(cdf[i] - cdf[i - 1] for i in range(1, n + 1))


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")


def hd_weights(n: int, alpha: float) -> HdWeights:
    """Weights ``w_{n,i}`` of the Harrell-Davis estimator.

    ``w_i`` is the mass a Beta((n+1)alpha, (n+1)(1-alpha)) distribution puts
    on ``((i-1)/n, i/n]``.
    """
    if int(n) != n or n < 1:
        raise InputError(f"n must be a positive integer, got {n}")
    _check_alpha(alpha)
    w = np.array(_hd_weight_tuple(int(n), float(alpha)))
    w.flags.writeable = False
    return HdWeights(int(n), float(alpha), w)


def hd_quantile(samples, alpha: float) -> float:
    """Harrell-Davis estimate of the ``alpha`` quantile of ``samples``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise InputError("hd_quantile needs at least one sample")
    w = hd_weights(x.size, alpha).weights
    # Summing offsets from the midrange keeps constant and symmetric samples exact;
    # at the median the mirrored pairs are added first so their offsets cancel.
    center = 0.5 * (x[0] + x[-1])
    d = x - center
    if alpha == 0.5:
        h = x.size // 2
        offset = float(np.dot(w[:h], d[:h] + d[::-1][:h]))
        if x.size % 2:
            offset += w[h] * d[h]
    else:
        offset = float(np.dot(w, d))
    return min(max(center + offset, x[0]), x[-1])


def hd_median(samples) -> float:
    return hd_quantile(samples, 0.5)


def mean_std(samples) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (``n - 1`` denominator)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InputError(f"mean_std needs at least 2 samples, got {x.size}")
    return float(x.mean()), float(x.std(ddof=1))


def average_ranks(values, descending: bool = False) -> np.ndarray:
    """Ranks starting at 1, ties receiving the mean of the positions they span.

    With ``descending=True`` the largest value gets rank 1.
    """
    v = np.asarray(values, dtype=float)
    return rankdata(-v if descending else v, method="average")


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises:
        InputError: on length mismatch or fewer than two observations.
        UndefinedCorrelationError: if either vector is constant.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputError("spearman needs at least 2 observations")
    rx = average_ranks(x) - (x.size + 1) / 2.0
    ry = average_ranks(y) - (y.size + 1) / 2.0
    sxx = float(np.dot(rx, rx))
    syy = float(np.dot(ry, ry))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(np.dot(rx, ry)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))

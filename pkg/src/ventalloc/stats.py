"""Scalar statistics kernels: normal quantiles, incomplete beta, discrete CVaR.

Everything here is deterministic, closed-form numerics. The inverse normal
CDF uses Acklam's rational approximation polished by two Halley steps
against the exact erfc, which brings it to full double precision (the
rational seed alone is good to ~1.15e-9).
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

# Acklam's coefficients for the inverse normal CDF rational approximation.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_cdf(x: float) -> float:
    """Standard normal CDF via the exact complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF, accurate to full double precision.

    Raises ValueError outside (0, 1); p exactly 0/1 would be +-inf and no
    caller here wants that silently. The upper half mirrors to the lower
    tail (1 - p is exact there), where erfc keeps full relative precision
    for the Halley refinements.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"norm_ppf requires 0 < p < 1, got {p}")
    if p > 0.5:
        return -norm_ppf(1.0 - p)
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # Two Halley refinements against the exact CDF.
    for _ in range(2):
        e = norm_cdf(x) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def normal_quantile(mean: float, std: float, p: float) -> float:
    """Quantile of N(mean, std); degenerate std 0 returns the mean."""
    if std < 0.0:
        raise ValueError(f"std must be nonnegative, got {std}")
    if std == 0.0:
        return mean
    return mean + std * norm_ppf(p)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("betainc_reg requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: int) -> float:
    """Two-tailed p-value of Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_reg(df / 2.0, 0.5, x)


def cvar_discrete(values: Sequence[float], probs: Sequence[float], alpha: float,
                  ) -> tuple[float, float]:
    """VaR and CVaR of a discrete distribution by direct sorted-tail evaluation.

    Returns (var, cvar) where var is the exact minimizer eta of the
    Rockafellar-Uryasev objective eta + E[(v - eta)_+]/(1 - alpha) and cvar
    its value. alpha = 0 gives (min, mean); probabilities must sum to ~1.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    v = np.asarray(values, dtype=float)
    q = np.asarray(probs, dtype=float)
    if v.shape != q.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("values and probs must be equal-length 1-D sequences")
    total = q.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, expected 1")
    order = np.argsort(v, kind="stable")
    v, q = v[order], q[order]
    cum = np.cumsum(q)
    # VaR = the alpha-quantile: first atom whose cumulative mass reaches alpha.
    idx = int(np.searchsorted(cum, alpha + 1e-15))
    idx = min(idx, v.size - 1)
    var = float(v[idx])
    if alpha == 0.0:
        return float(v[0]), float(np.dot(v, q) / total)
    tail = 1.0 - alpha
    mass_above = float(q[idx + 1:].sum())
    weight_at_var = max(0.0, tail - mass_above)
    cvar = (weight_at_var * var + float(np.dot(v[idx + 1:], q[idx + 1:]))) / tail
    return var, float(cvar)

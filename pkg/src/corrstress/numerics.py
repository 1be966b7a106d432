"""Special functions and quantile routines.

Every quantile is obtained by inverting an independently implemented CDF
(error function, regularised incomplete gamma and beta functions) with a
bracketed, bisection-safeguarded Newton iteration. Only the standard
``math`` module is used so the routines can double as test oracles.
"""

from __future__ import annotations

import math
from typing import Callable

_EPS = 2.220446049250313e-16
_TINY = 1e-300
_MAX_ITER = 100_000
_INV_E = math.exp(-1.0)


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


def _check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return p


# ---------------------------------------------------------------------------
# Normal distribution
# ---------------------------------------------------------------------------


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# Acklam's rational approximation, used as a starting point only.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def _acklam(p: float) -> float:
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - plow:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF.

    Acklam's approximation refined by Newton steps on ``normal_cdf``; the
    refinement works on the smaller tail so that ``|Phi(z) - p| <= 1e-12``.
    """
    p = _check_probability(p)
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -normal_quantile(1.0 - p) if 1.0 - p != p else 0.0
    z = _acklam(p)
    for _ in range(4):
        err = normal_cdf(z) - p
        d = normal_pdf(z)
        if d <= 0.0:
            break
        step = err / d
        # Halley correction; d'(z) = -z d(z)
        step = step / (1.0 + 0.5 * z * step)
        z -= step
        if abs(step) <= 4.0 * _EPS * abs(z):
            break
    return z


# ---------------------------------------------------------------------------
# Root finding on monotone CDFs
# ---------------------------------------------------------------------------


def _invert_increasing(
    f: Callable[[float], float],
    dfdx: Callable[[float], float],
    x0: float,
    lo: float,
    hi: float,
    lower_limit: float = -math.inf,
) -> float:
    """Solve ``f(x) = 0`` for an increasing ``f`` with safeguarded Newton.

    ``lo``/``hi`` need not bracket the root on entry; they are expanded
    geometrically. ``lower_limit`` is a hard support boundary (e.g. 0).
    """
    flo = f(lo)
    while flo > 0.0:
        hi, lo = lo, (lo - 2.0 * abs(lo) - 1.0 if lower_limit == -math.inf else
                      lower_limit + 0.5 * (lo - lower_limit))
        flo = f(lo)
        if lo == lower_limit or (lower_limit > -math.inf and lo - lower_limit < _TINY):
            return lo
    fhi = f(hi)
    while fhi < 0.0:
        lo, hi = hi, 2.0 * hi + 1.0
        fhi = f(hi)
        if not math.isfinite(hi):
            raise DomainError("failed to bracket quantile")
    x = min(max(x0, lo), hi)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(500):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        d = dfdx(x)
        xn = x - fx / d if d > 0.0 and math.isfinite(d) else math.nan
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 2.0 * _EPS * max(abs(x), _TINY) or hi - lo <= 2.0 * _EPS * abs(hi):
            return xn
        x = xn
    return x


# ---------------------------------------------------------------------------
# Incomplete gamma, chi-square, inverse gamma
# ---------------------------------------------------------------------------


def _log_gamma_prefactor(a: float, x: float) -> float:
    return -x + a * math.log(x) - math.lgamma(a)


def _gamma_series(a: float, x: float) -> float:
    ap = a
    total = delta = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * _EPS:
            return total * math.exp(_log_gamma_prefactor(a, x))
    raise ArithmeticError("incomplete gamma series did not converge")


def _gamma_cf(a: float, x: float) -> float:
    # modified Lentz for the continued fraction of Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(_log_gamma_prefactor(a, x)) * h
    raise ArithmeticError("incomplete gamma continued fraction did not converge")


def gamma_p(a: float, x: float) -> float:
    """Regularised lower incomplete gamma function P(a, x)."""
    if a <= 0.0:
        raise DomainError("shape must be positive")
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularised upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0.0:
        raise DomainError("shape must be positive")
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def gamma_pdf(x: float, a: float) -> float:
    """Density of Gamma(a, rate 1)."""
    if x <= 0.0:
        return 0.0
    return math.exp((a - 1.0) * math.log(x) - x - math.lgamma(a))


def gamma_quantile(p: float, a: float, upper: bool = False) -> float:
    """``x`` with ``P(a, x) = p`` (or ``Q(a, x) = p`` when ``upper``), unit rate."""
    p = _check_probability(p)
    if a <= 0.0:
        raise DomainError("shape must be positive")
    # Wilson-Hilferty start
    z = normal_quantile(1.0 - p if upper else p)
    t = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * math.sqrt(a))
    x0 = a * t ** 3 if t > 0.0 else 0.5 * a
    if upper:
        f = lambda x: p - gamma_q(a, x)
    else:
        f = lambda x: gamma_p(a, x) - p
    return _invert_increasing(f, lambda x: gamma_pdf(x, a), x0, 0.5 * x0, 2.0 * x0 + 1.0,
                              lower_limit=0.0)


def chi_square_cdf(x: float, m: int) -> float:
    return gamma_p(0.5 * m, 0.5 * x)


def chi_square_quantile(p: float, m: int) -> float:
    """Quantile of the chi-squared distribution with ``m`` degrees of freedom."""
    if m < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {m!r}")
    return 2.0 * gamma_quantile(p, 0.5 * m)


def inverse_gamma_cdf(q: float, a: float, b: float) -> float:
    """P(V <= q) for V ~ Ig(a, b), i.e. 1/V ~ Gamma(a, rate b)."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError("inverse gamma parameters must be positive")
    if q <= 0.0:
        return 0.0
    return gamma_q(a, b / q)


def inverse_gamma_quantile(p: float, a: float, b: float) -> float:
    """Quantile of Ig(a, b) via ``P(V <= q) = P(G >= 1/q)``, G ~ Gamma(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError("inverse gamma parameters must be positive")
    return b / gamma_quantile(p, a, upper=True)


# ---------------------------------------------------------------------------
# Incomplete beta and Student t
# ---------------------------------------------------------------------------


def _beta_cf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def beta_inc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, nu: float) -> float:
    if nu <= 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")
    if t == 0.0:
        return 0.5
    t2 = t * t
    if t2 < nu:
        half = 0.5 * beta_inc(0.5, 0.5 * nu, t2 / (nu + t2))
        return 0.5 + half if t > 0 else 0.5 - half
    tail = 0.5 * beta_inc(0.5 * nu, 0.5, nu / (nu + t2))
    return 1.0 - tail if t > 0 else tail


def student_t_pdf(t: float, nu: float) -> float:
    log_c = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return math.exp(log_c - 0.5 * (nu + 1.0) * math.log1p(t * t / nu))


def student_t_quantile(p: float, nu: float) -> float:
    """Quantile of the Student t distribution with ``nu`` degrees of freedom."""
    p = _check_probability(p)
    if nu <= 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_quantile(1.0 - p, nu)
    if nu == 1.0:
        x0 = math.tan(math.pi * (p - 0.5))
    elif nu == 2.0:
        x0 = (2.0 * p - 1.0) / math.sqrt(2.0 * p * (1.0 - p))
    else:
        # Cornish-Fisher type expansion around the normal quantile
        z = normal_quantile(p)
        g1 = (z ** 3 + z) / 4.0
        g2 = (5.0 * z ** 5 + 16.0 * z ** 3 + 3.0 * z) / 96.0
        x0 = z + g1 / nu + g2 / nu ** 2
        if not math.isfinite(x0) or x0 <= 0.0:
            x0 = z
    return _invert_increasing(lambda t: student_t_cdf(t, nu) - p,
                              lambda t: student_t_pdf(t, nu),
                              x0, 0.0, 2.0 * x0 + 1.0, lower_limit=0.0)


# ---------------------------------------------------------------------------
# Lambert W
# ---------------------------------------------------------------------------


def lambert_w0(z: float) -> float:
    """Principal real branch of the Lambert W function.

    Halley iteration started from a branch-point series near ``-1/e``, a
    ``log1p`` based guess for moderate ``z`` and the asymptotic
    ``log z - log log z`` form for large ``z``.
    """
    z = float(z)
    if math.isnan(z):
        raise DomainError("lambert_w0 of NaN")
    branch = -_INV_E
    if z < branch:
        # tolerate rounding of -1/e itself
        if z >= branch - 4.0 * _EPS:
            return -1.0
        raise DomainError(f"lambert_w0 requires z >= -1/e, got {z!r}")
    if z == 0.0:
        return 0.0
    if math.isinf(z):
        return math.inf
    if z == branch:
        return -1.0
    if z < -0.25:
        p = math.sqrt(2.0 * (math.e * z + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif z < 3.0:
        l1 = math.log1p(z)
        w = l1 * (1.0 - math.log1p(l1) / (2.0 + l1))
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 2.0 * _EPS * (1.0 + abs(w)):
            break
    return w

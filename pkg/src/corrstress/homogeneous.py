"""Closed forms for the stylised homogeneous portfolio.

``n = 2**m`` instruments carry every combination of ``m`` binary factors,
with equal weights and equal volatility ``sigma``. These formulas serve as
a calculator and as the oracle for the numeric scenario search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import DomainError


@dataclass(frozen=True)
class HomogeneousSpec:
    m: int
    sigma: float
    beta: float | tuple[float, ...] = 0.0
    rho_beta: float = 0.0
    sigma_beta: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        b = self.betas
        if b.size != self.m or np.any(b < 0):
            raise ValueError(f"need {self.m} nonnegative coefficients")
        if self.m > 1 and not -1.0 / (self.m - 1) < self.rho_beta < 1.0:
            raise ValueError("rho_beta outside (-1/(m-1), 1)")
        if self.sigma_beta < 0:
            raise ValueError("sigma_beta must be nonnegative")

    @property
    def n(self) -> int:
        return 2 ** self.m

    @property
    def betas(self) -> np.ndarray:
        b = np.atleast_1d(np.asarray(self.beta, dtype=float))
        return np.full(self.m, b[0]) if b.size == 1 else b

    @property
    def homogeneous_beta(self) -> float:
        b = self.betas
        if not np.all(b == b[0]):
            raise ValueError("coefficients are not homogeneous")
        return float(b[0])


def binary_exposures(m: int) -> np.ndarray:
    """``2**m x m`` 0/1 matrix; row ``i`` is the binary expansion of ``i``."""
    i = np.arange(2 ** m)[:, None]
    return ((i >> np.arange(m)[None, :]) & 1).astype(float)


def homog_variance(spec: HomogeneousSpec) -> float:
    """``sigma**2 / n * prod_k (1 + exp(-beta_k))``."""
    return spec.sigma ** 2 / spec.n * float(np.prod(1.0 + np.exp(-spec.betas)))


def homog_avg_correlation(m: int, betas) -> float:
    b = np.atleast_1d(np.asarray(betas, dtype=float))
    if b.size == 1:
        b = np.full(m, b[0])
    n = 2 ** m
    return (float(np.prod(1.0 + np.exp(-b))) - 1.0) / (n - 1)


def calibrate_homog_beta(m: int, target_rho: float, tol: float = 1e-12) -> float:
    """Homogeneous coefficient giving average correlation ``target_rho``."""
    if not 0.0 < target_rho <= 1.0:
        raise DomainError(f"target correlation must lie in (0, 1], got {target_rho!r}")
    if m < 1:
        raise DomainError("m must be >= 1")
    if target_rho == 1.0:
        return 0.0
    n = 2 ** m

    def rho(b: float) -> float:
        return ((1.0 + math.exp(-b)) ** m - 1.0) / (n - 1)

    lo, hi = 0.0, 1.0
    while rho(hi) > target_rho:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if rho(mid) > target_rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def variance_sensitivity(spec: HomogeneousSpec, l: int | None = None) -> float:
    """Derivative of :func:`homog_variance` in ``beta_l`` (0-based), or the
    total derivative along a common shift of all coefficients when ``l`` is
    None."""
    b = spec.betas
    pref = spec.sigma ** 2 / spec.n
    if l is None:
        return -pref * float(np.sum(np.exp(-b) * np.prod(1.0 + np.exp(-b)) / (1.0 + np.exp(-b))))
    if not 0 <= l < spec.m:
        raise IndexError(f"factor index {l} out of range")
    others = np.delete(b, l)
    return -pref * math.exp(-b[l]) * float(np.prod(1.0 + np.exp(-others)))


def peripheral_loading(j: int, rho_beta: float) -> float:
    """Shift of each peripheral coefficient per unit common core shift,
    ``j rho / ((j-1) rho + 1)``."""
    return j * rho_beta / ((j - 1) * rho_beta + 1.0)


def stressed_variance(spec: HomogeneousSpec, j: int, delta_beta: float) -> float:
    """Variance when ``j`` core coefficients move by ``delta_beta`` and the
    others follow their conditional expectation."""
    if not 1 <= j <= spec.m:
        raise ValueError(f"number of core factors must be in [1, {spec.m}], got {j}")
    beta = spec.homogeneous_beta
    core = beta + delta_beta
    periph = beta + peripheral_loading(j, spec.rho_beta) * delta_beta
    if core < 0 or periph < 0:
        raise ValueError("stressed coefficients must stay nonnegative")
    return (spec.sigma ** 2 / spec.n * (1.0 + math.exp(-core)) ** j
            * (1.0 + math.exp(-periph)) ** (spec.m - j))


def homog_worst_case_shift(m: int, sigma_beta: float, rho_beta: float, h: float) -> float:
    """Size of the common coefficient reduction on the Mahalanobis boundary."""
    if h < 0:
        raise ValueError("h must be nonnegative")
    return math.sqrt(h * sigma_beta ** 2 * (1.0 + (m - 1) * rho_beta) / m)


def homog_worst_case_beta(beta_bar: float, m: int, sigma_beta: float, rho_beta: float, h: float,
                          truncate: bool = True) -> float:
    """Worst-case common coefficient within Mahalanobis radius ``sqrt(h)``.

    A negative value is truncated at 0 (with a warning) unless ``truncate``
    is False.
    """
    b = beta_bar - homog_worst_case_shift(m, sigma_beta, rho_beta, h)
    if b < 0 and truncate:
        warnings.warn(f"worst-case coefficient {b:.6g} < 0 truncated to 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return b

"""Variance-covariance value-at-risk under normal, Student t and jointly
stressed (correlation plus volatility) return distributions.

All VaR figures are returned as positive loss magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .numerics import DomainError, inverse_gamma_quantile, normal_quantile, student_t_quantile

TRADING_DAYS = 250


@dataclass(frozen=True)
class PortfolioWeights:
    w: np.ndarray
    value: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if not np.all(np.isfinite(w)) or not math.isfinite(self.value):
            raise ValueError("weights and value must be finite")
        object.__setattr__(self, "w", w)

    @classmethod
    def equal(cls, n: int, value: float = 1.0) -> "PortfolioWeights":
        return cls(np.full(n, 1.0 / n), value)


def horizon_vol(annual_vol, days: float = 1.0, trading_days: int = TRADING_DAYS):
    """Scale an annualised volatility to a ``days`` horizon (square-root rule)."""
    return np.asarray(annual_vol, dtype=float) * math.sqrt(days / trading_days)


def covariance(corr: np.ndarray, vols) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    vols = np.asarray(vols, dtype=float).ravel()
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1] or corr.shape[0] != vols.size:
        raise ValueError(f"dimension mismatch: corr {corr.shape}, vols {vols.shape}")
    if np.any(vols < 0):
        raise ValueError("volatilities must be nonnegative")
    return vols[:, None] * corr * vols[None, :]


def portfolio_variance(weights: PortfolioWeights, cov: np.ndarray) -> float:
    w = weights.w
    if cov.shape != (w.size, w.size):
        raise ValueError(f"covariance {cov.shape} does not match {w.size} weights")
    v = float(w @ cov @ w)
    if v < 0.0:
        if v < -1e-12:
            raise ArithmeticError(f"negative portfolio variance {v:.3e}")
        v = 0.0
    return v


def _check_alpha(alpha: float) -> None:
    if not 0.5 < alpha < 1.0:
        raise DomainError(f"confidence level must lie in (0.5, 1), got {alpha!r}")


def _check_nu(nu: float) -> None:
    if not nu > 2.0:
        raise DomainError(f"nu must exceed 2 for a finite covariance, got {nu!r}")


def var_normal(weights: PortfolioWeights, cov: np.ndarray, alpha: float) -> float:
    """``-Phi^{-1}(1-alpha) * V0 * sqrt(w' Sigma w)``."""
    _check_alpha(alpha)
    return -normal_quantile(1.0 - alpha) * abs(weights.value) * math.sqrt(
        portfolio_variance(weights, cov))


def t_scale(nu: float) -> float:
    """Dispersion-to-covariance factor ``sqrt((nu-2)/nu)``."""
    _check_nu(nu)
    return math.sqrt((nu - 2.0) / nu)


def var_t(weights: PortfolioWeights, cov: np.ndarray, alpha: float, nu: float) -> float:
    """Student t VaR with covariance ``cov`` (dispersion ``(nu-2)/nu * cov``)."""
    _check_alpha(alpha)
    _check_nu(nu)
    return (-student_t_quantile(1.0 - alpha, nu) * abs(weights.value) * t_scale(nu)
            * math.sqrt(portfolio_variance(weights, cov)))


def mixing_quantile(vol_alpha: float, nu: float) -> float:
    """Quantile of the Ig(nu/2, nu/2) mixing variable."""
    return inverse_gamma_quantile(vol_alpha, 0.5 * nu, 0.5 * nu)


def var_joint_stress(
    weights: PortfolioWeights,
    cov: np.ndarray,
    alpha: float,
    nu: float,
    vol_alpha: float,
) -> float:
    """Normal VaR with the mixing variable pinned at its ``vol_alpha`` quantile.

    ``cov`` may already carry a correlation stress; the two stresses combine
    multiplicatively.
    """
    _check_alpha(alpha)
    _check_nu(nu)
    q = mixing_quantile(vol_alpha, nu)
    return (-normal_quantile(1.0 - alpha) * abs(weights.value) * math.sqrt(q) * t_scale(nu)
            * math.sqrt(portfolio_variance(weights, cov)))


def _t_loglik(x: np.ndarray, cov: np.ndarray, nu: float) -> float:
    t, d = x.shape
    disp = cov * (nu - 2.0) / nu
    chol = np.linalg.cholesky(disp)
    z = np.linalg.solve(chol, x.T)
    maha = np.einsum("ij,ij->j", z, z)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(t * (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu) - 0.5 * d * math.log(nu * math.pi))
                 - 0.5 * t * logdet - 0.5 * (nu + d) * np.log1p(maha / nu).sum())


@dataclass(frozen=True)
class NuFit:
    nu: float
    nu_moment: float
    loglik: float


def fit_t_nu(returns: np.ndarray, nu_bounds: tuple[float, float] = (2.05, 500.0)) -> NuFit:
    """Degrees of freedom of a zero-mean multivariate t.

    The covariance is matched to the sample second moment, a kurtosis-based
    moment estimate ``4 + 6/kappa`` gives the start value, and the
    likelihood is then maximised over ``nu`` alone.
    """
    x = np.asarray(returns, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x = x[np.all(np.isfinite(x), axis=1)]
    if x.shape[0] <= x.shape[1] + 2:
        raise ValueError("too few complete observations to fit nu")
    cov = x.T @ x / x.shape[0]
    sd = np.sqrt(np.diag(cov))
    excess = np.mean((x / sd) ** 4, axis=0) - 3.0
    kappa = float(np.mean(excess))
    lo, hi = nu_bounds
    nu0 = 4.0 + 6.0 / kappa if kappa > 0 else hi
    nu0 = min(max(nu0, lo * 1.01), hi)
    res = minimize(lambda v: -_t_loglik(x, cov, math.exp(v[0])) / x.shape[0], [math.log(nu0)],
                   method="L-BFGS-B", bounds=[(math.log(lo), math.log(hi))])
    nu = float(math.exp(res.x[0]))
    return NuFit(nu=nu, nu_moment=nu0, loglik=_t_loglik(x, cov, nu))

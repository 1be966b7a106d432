"""Factor-distance correlation model.

Correlations are parameterised as ``c_ij = exp(-sum_k beta_k * d_k[i, j])``
where ``d_k`` is the (optionally range-normalised) absolute difference of
factor ``k`` between instruments ``i`` and ``j``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import nnls

logger = logging.getLogger(__name__)


class RankError(ValueError):
    """Regression design does not identify all coefficients."""


class InsufficientHistoryError(ValueError):
    """Not enough dated observations for the requested window."""


@dataclass(frozen=True)
class DistanceMatrixSet:
    """Per-factor pairwise distance matrices.

    ``d`` has shape ``(m, n, n)``; ``ranges`` holds the divisor applied to
    each factor (1.0 when normalisation is off or the factor is constant).
    """

    d: np.ndarray
    ranges: np.ndarray
    names: tuple[str, ...] = ()

    @property
    def n_factors(self) -> int:
        return self.d.shape[0]

    @property
    def n_instruments(self) -> int:
        return self.d.shape[1]

    def subset(self, idx: Sequence[int]) -> "DistanceMatrixSet":
        idx = np.asarray(idx, dtype=int)
        return DistanceMatrixSet(self.d[:, idx][:, :, idx], self.ranges, self.names)

    def is_binary(self, tol: float = 1e-12) -> bool:
        d = self.d
        return bool(np.all((np.abs(d) <= tol) | (np.abs(d - 1.0) <= tol)))


def build_distances(
    exposures: Sequence[Sequence[float]] | np.ndarray,
    normalise: bool = True,
    names: Sequence[str] = (),
) -> DistanceMatrixSet:
    """Pairwise absolute factor differences, divided by the factor range when
    ``normalise`` is set. Constant factors give all-zero matrices."""
    rows = [np.asarray(r, dtype=float).ravel() for r in exposures]
    if not rows:
        raise ValueError("no exposures given")
    m = rows[0].size
    if any(r.size != m for r in rows):
        raise ValueError("ragged exposure vectors: all instruments need the same factor count")
    x = np.vstack(rows)
    if not np.all(np.isfinite(x)):
        raise ValueError("exposures must be finite")
    d = np.abs(x.T[:, :, None] - x.T[:, None, :])
    ranges = np.ones(m)
    if normalise:
        spread = x.max(axis=0) - x.min(axis=0)
        ranges = np.where(spread > 0, spread, 1.0)
        d = d / ranges[:, None, None]
    return DistanceMatrixSet(d, ranges, tuple(names))


def _check_beta(beta: np.ndarray, m: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != m:
        raise ValueError(f"expected {m} coefficients, got {beta.size}")
    if np.any(beta < 0) or not np.all(np.isfinite(beta)):
        raise ValueError(f"coefficients must be finite and nonnegative, got {beta}")
    return beta


@dataclass(frozen=True)
class CorrelationModel:
    beta: np.ndarray
    distances: DistanceMatrixSet

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_beta(self.beta, self.distances.n_factors))

    def matrix(self) -> np.ndarray:
        return correlation_matrix(self)

    def with_beta(self, beta) -> "CorrelationModel":
        return CorrelationModel(np.asarray(beta, dtype=float), self.distances)


def correlation_matrix(model: CorrelationModel) -> np.ndarray:
    """``c_ij = exp(-sum_k beta_k d_k[i, j])``."""
    return factor_correlation(model.beta, model.distances)


def factor_correlation(beta, distances: DistanceMatrixSet) -> np.ndarray:
    beta = _check_beta(beta, distances.n_factors)
    exponent = np.tensordot(beta, distances.d, axes=1)
    return np.exp(-exponent)


def _pair_design(distances: DistanceMatrixSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = distances.n_instruments
    iu, ju = np.triu_indices(n, k=1)
    X = distances.d[:, iu, ju].T
    return X, iu, ju


def calibrate_betas(
    empirical: np.ndarray,
    distances: DistanceMatrixSet,
    clip_eps: float = 0.01,
) -> np.ndarray:
    """Least-squares fit of ``-log(max(c_ij, clip_eps))`` on the distance
    regressors over pairs ``i < j``, without intercept and with ``beta >= 0``.

    Pairs whose empirical correlation is NaN are left out of the fit.
    """
    if not 0.0 < clip_eps < 1.0:
        raise ValueError("clip_eps must lie in (0, 1)")
    c = np.asarray(empirical, dtype=float)
    n = distances.n_instruments
    if c.shape != (n, n):
        raise ValueError(f"empirical matrix has shape {c.shape}, expected {(n, n)}")
    X, iu, ju = _pair_design(distances)
    y_raw = c[iu, ju]
    keep = np.isfinite(y_raw)
    X, y_raw = X[keep], y_raw[keep]
    m = distances.n_factors
    informative = np.any(X > 0, axis=1)
    if informative.sum() < m:
        raise RankError(f"only {int(informative.sum())} pairs with positive distance for {m} factors")
    constant = ~np.any(X > 0, axis=0)
    if np.any(constant):
        bad = [distances.names[k] if distances.names else str(k) for k in np.flatnonzero(constant)]
        raise RankError(f"regressor(s) without variation: {', '.join(bad)}")
    if np.linalg.matrix_rank(X) < m:
        raise RankError("distance regressors are collinear")
    y = -np.log(np.maximum(y_raw, clip_eps))
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    if np.all(beta >= 0):
        return beta
    # active-set refit (Lawson-Hanson) enforces beta >= 0
    beta, _ = nnls(X, y)
    return beta


def rolling_calibration(
    returns: pd.DataFrame,
    distances: DistanceMatrixSet,
    window: int = 250,
    clip_eps: float = 0.01,
    min_valid_frac: float = 0.8,
) -> pd.DataFrame:
    """Recalibrate the coefficients on each date from the ``window`` return
    rows strictly before it.

    ``returns`` columns must be aligned with the instruments of
    ``distances``. Instruments with fewer than ``min_valid_frac * window``
    valid returns in a window are dropped from that date's fit.
    """
    m = distances.n_factors
    if returns.shape[1] != distances.n_instruments:
        raise ValueError("return panel columns do not match the distance set")
    if window < m + 1:
        raise ValueError(f"window {window} too short for {m} factors (need >= {m + 1})")
    if len(returns) < window + 1:
        raise InsufficientHistoryError(
            f"rolling calibration needs {window + 1} dated rows, panel has {len(returns)}")
    values = returns.to_numpy(dtype=float)
    min_obs = int(np.ceil(min_valid_frac * window))
    out = []
    for t in range(window, len(returns)):
        block = values[t - window:t]
        valid = np.isfinite(block).sum(axis=0)
        std = pd.DataFrame(block).std().to_numpy()
        cols = np.flatnonzero((valid >= min_obs) & (std > 0))
        if cols.size < 2:
            raise InsufficientHistoryError(
                f"{returns.index[t]}: only {cols.size} instruments with {min_obs} valid returns")
        emp = pd.DataFrame(block[:, cols]).corr(min_periods=min_obs).to_numpy()
        out.append(calibrate_betas(emp, distances.subset(cols), clip_eps))
    names = list(distances.names) if distances.names else [f"beta_{k + 1}" for k in range(m)]
    return pd.DataFrame(np.vstack(out), index=returns.index[window:], columns=names)


@dataclass(frozen=True)
class BetaDistribution:
    """Gaussian law of the coefficients: scenario origin ``mean`` and
    covariance ``cov`` of coefficient changes."""

    mean: np.ndarray
    cov: np.ndarray
    sigma_beta: float = float("nan")
    rho_beta: float = float("nan")
    degenerate: bool = False
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def condition_number(self) -> float:
        eig = np.linalg.eigvalsh(self.cov)
        if eig[0] <= 0:
            return float("inf")
        return float(eig[-1] / eig[0])

    @classmethod
    def homogeneous(cls, mean, sigma_beta: float, rho_beta: float, m: int | None = None):
        """Equicorrelated covariance ``sigma_beta**2 * ((1-rho) I + rho 11')``."""
        mean = np.asarray(mean, dtype=float)
        if mean.ndim == 0:
            if m is None:
                raise ValueError("m required for scalar mean")
            mean = np.full(m, float(mean))
        m = mean.size
        cov = sigma_beta ** 2 * ((1.0 - rho_beta) * np.eye(m) + rho_beta * np.ones((m, m)))
        return cls(mean, cov, sigma_beta=sigma_beta, rho_beta=rho_beta)


def estimate_beta_distribution(beta_series: pd.DataFrame | np.ndarray) -> BetaDistribution:
    """Sample covariance of first differences of a coefficient series.

    The mean is anchored at the most recent coefficients. ``sigma_beta`` is
    the average per-factor standard deviation of the changes and ``rho_beta``
    the average pairwise correlation over factors with nonzero variance.
    """
    names: tuple[str, ...] = ()
    if isinstance(beta_series, pd.DataFrame):
        names = tuple(str(c) for c in beta_series.columns)
        values = beta_series.to_numpy(dtype=float)
    else:
        values = np.atleast_2d(np.asarray(beta_series, dtype=float))
    if values.shape[0] < 3:
        raise ValueError(
            f"need at least 3 coefficient vectors to estimate a change covariance, got {values.shape[0]}")
    diffs = np.diff(values, axis=0)
    cov = np.atleast_2d(np.cov(diffs, rowvar=False, ddof=1))
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sigma_beta = float(sd.mean())
    live = sd > 0
    degenerate = sigma_beta == 0.0 or np.linalg.matrix_rank(cov) < cov.shape[0]
    rho_beta = 0.0
    if live.sum() >= 2:
        sub = cov[np.ix_(live, live)] / np.outer(sd[live], sd[live])
        iu = np.triu_indices(int(live.sum()), k=1)
        rho_beta = float(sub[iu].mean())
    if degenerate:
        logger.warning("coefficient change covariance is singular (sigma_beta=%g)", sigma_beta)
    return BetaDistribution(values[-1].copy(), cov, sigma_beta=sigma_beta, rho_beta=rho_beta,
                            degenerate=bool(degenerate), names=names)

"""Scenario machinery for general portfolios.

Plausibility of a coefficient scenario is measured by its Mahalanobis
distance under a Gaussian :class:`BetaDistribution`. The worst case within a
radius is found by simulated annealing in whitened coordinates followed by
an SLSQP polish; first-order conditions are checked through the Lambert W
closed form available for indicator factors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .factor_model import BetaDistribution, DistanceMatrixSet, factor_correlation
from .numerics import DomainError, chi_square_quantile, lambert_w0
from .portfolio_risk import (PortfolioWeights, covariance, var_joint_stress, var_normal,
                             var_t)

logger = logging.getLogger(__name__)

__all__ = [
    "AnnealingConfig", "BetaDistribution", "StressScenario", "StationarityReport",
    "VarianceObjective", "conditional_stress", "mahalanobis", "quantile_to_radius",
    "scenario_var", "stationarity_check", "stationary_beta", "worst_case_search",
]


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


_MAX_CONDITION = 1e12


def _cholesky(dist: BetaDistribution) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(dist.cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("coefficient covariance is not positive definite") from exc
    diag = np.diag(chol)
    if diag.min() <= 0 or (diag.max() / diag.min()) ** 2 > _MAX_CONDITION:
        raise SingularCovarianceError(
            f"coefficient covariance is near-singular (condition ~{(diag.max() / diag.min()) ** 2:.3g})")
    return chol


def _forward(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Row-wise ``L^{-1} x`` for ``rhs`` of shape (R, m), fixed operation order."""
    m = chol.shape[0]
    out = np.empty_like(rhs)
    for i in range(m):
        acc = rhs[:, i].copy()
        for k in range(i):
            acc -= chol[i, k] * out[:, k]
        out[:, i] = acc / chol[i, i]
    return out


def _lower_mul(chol: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise ``L u`` for ``u`` of shape (R, m)."""
    m = chol.shape[0]
    out = np.zeros_like(u)
    for i in range(m):
        for k in range(i + 1):
            out[:, i] += chol[i, k] * u[:, k]
    return out


def mahalanobis(beta, dist: BetaDistribution) -> float:
    """``sqrt((beta - mean)' cov^{-1} (beta - mean))`` via a Cholesky solve."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != dist.dim:
        raise ValueError(f"expected {dist.dim} coefficients, got {beta.size}")
    z = _forward(_cholesky(dist), (beta - dist.mean)[None, :])[0]
    return float(math.sqrt(z @ z))


def conditional_stress(delta_core, core_idx: Sequence[int], dist: BetaDistribution) -> np.ndarray:
    """Full change vector with peripheral entries at ``S_us S_ss^{-1} delta_core``."""
    core = np.asarray(core_idx, dtype=int).ravel()
    m = dist.dim
    if core.size == 0 or core.size >= m or len(set(core.tolist())) != core.size:
        raise ValueError("core factors must be a nonempty proper subset")
    delta_core = np.asarray(delta_core, dtype=float).ravel()
    if delta_core.size != core.size:
        raise ValueError("one shift per core factor required")
    periph = np.setdiff1d(np.arange(m), core)
    s_ss = dist.cov[np.ix_(core, core)]
    s_us = dist.cov[np.ix_(periph, core)]
    try:
        coef = np.linalg.solve(s_ss, delta_core)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("core covariance block is singular") from exc
    out = np.empty(m)
    out[core] = delta_core
    out[periph] = s_us @ coef
    return out


def quantile_to_radius(alpha_star: float, m: int) -> float:
    """Squared Mahalanobis radius ``h`` covering probability ``alpha_star``."""
    return chi_square_quantile(alpha_star, m)


def scenario_var(
    weights: PortfolioWeights,
    distances: DistanceMatrixSet,
    vols,
    beta,
    alpha: float = 0.99,
    distribution: str = "normal",
    nu: float | None = None,
    vol_alpha: float | None = None,
) -> float:
    """VaR with the correlation matrix implied by ``beta``.

    ``distribution`` is ``"normal"``, ``"t"`` or ``"joint"`` (t mixing
    variable fixed at its ``vol_alpha`` quantile).
    """
    cov = covariance(factor_correlation(beta, distances), vols)
    if distribution == "normal":
        return var_normal(weights, cov, alpha)
    if nu is None:
        raise ValueError(f"nu required for distribution {distribution!r}")
    if distribution == "t":
        return var_t(weights, cov, alpha, nu)
    if distribution == "joint":
        if vol_alpha is None:
            raise ValueError("vol_alpha required for the joint stress")
        return var_joint_stress(weights, cov, alpha, nu, vol_alpha)
    raise ValueError(f"unknown distribution {distribution!r}")


class VarianceObjective:
    """Portfolio variance as a function of the coefficients.

    Instrument pairs sharing a distance pattern are aggregated, so the
    variance is ``sum_g a_g exp(-patterns_g . beta)``.
    """

    def __init__(self, weights: PortfolioWeights, distances: DistanceMatrixSet, vols):
        ws = weights.w * np.asarray(vols, dtype=float).ravel()
        if ws.size != distances.n_instruments:
            raise ValueError("weights/vols do not match the distance set")
        pair_w = np.outer(ws, ws).ravel()
        d = distances.d.reshape(distances.n_factors, -1).T
        patterns, inverse = np.unique(d, axis=0, return_inverse=True)
        self.patterns = np.ascontiguousarray(patterns)
        self.coef = np.bincount(inverse.ravel(), weights=pair_w, minlength=patterns.shape[0])
        self.m = distances.n_factors

    def exponents(self, betas: np.ndarray) -> np.ndarray:
        betas = np.atleast_2d(betas)
        e = np.zeros((betas.shape[0], self.patterns.shape[0]))
        for k in range(self.m):
            e += betas[:, k:k + 1] * self.patterns[None, :, k]
        return e

    def batch(self, betas: np.ndarray) -> np.ndarray:
        return np.exp(-self.exponents(betas)) @ self.coef

    def __call__(self, beta) -> float:
        return float(self.batch(np.asarray(beta, dtype=float)[None, :])[0])

    def gradient(self, beta) -> np.ndarray:
        terms = self.coef * np.exp(-self.exponents(np.asarray(beta, dtype=float)[None, :])[0])
        return -(self.patterns.T @ terms)


@dataclass(frozen=True)
class AnnealingConfig:
    """Simulated annealing settings; all runs are deterministic in ``seed``."""

    seed: int = 12345
    restarts: int = 20
    cooling: float = 0.95
    steps_per_temperature: int = 400
    n_temperatures: int = 60
    initial_temperature: float = 0.05
    step_scale: float = 0.5
    beta_cap: float = 20.0
    polish: bool = True
    spread_tol: float = 1e-6


@dataclass(frozen=True)
class StressScenario:
    beta: np.ndarray
    mahalanobis: float
    constraint_quantile: float | str | None = None
    label: str = ""
    h: float = 0.0
    variance: float = float("nan")
    var: float = float("nan")
    base_var: float = float("nan")
    on_boundary: bool = False
    converged: bool = True
    restart_spread: float = 0.0
    restart_objectives: tuple[float, ...] = field(default=())


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, restart]))


def worst_case_search(
    weights: PortfolioWeights,
    distances: DistanceMatrixSet,
    vols,
    dist: BetaDistribution,
    h: float,
    config: AnnealingConfig = AnnealingConfig(),
    alpha: float = 0.99,
    quantile: float | None = None,
    initial_points: Sequence[np.ndarray] = (),
    label: str = "",
) -> StressScenario:
    """Maximise the portfolio variance over ``{beta >= 0 : D^2(beta) <= h}``.

    ``h = inf`` searches the box ``[0, beta_cap]^m`` instead. Restarts use
    independent random streams derived from ``(seed, restart)``; the best
    point of every restart is polished with SLSQP. ``initial_points`` are
    extra feasible candidates (e.g. the optimum of a smaller radius).
    """
    if not h >= 0:
        raise ValueError("radius h must be nonnegative")
    objective = VarianceObjective(weights, distances, vols)
    mean = dist.mean
    m = mean.size
    if np.any(mean < 0):
        raise ValueError("scenario origin has negative coefficients")
    unconstrained = math.isinf(h)
    chol = _cholesky(dist)
    q_inv = np.linalg.inv(dist.cov)
    f0 = objective(mean)
    scale = f0 if f0 > 0 else 1.0
    cap = config.beta_cap if unconstrained else math.inf
    if unconstrained:
        constraint_label: float | str | None = "unconstrained"
    else:
        constraint_label = quantile

    def d2(b: np.ndarray) -> np.ndarray:
        z = _forward(chol, np.atleast_2d(b) - mean)
        return np.einsum("ij,ij->i", z, z)

    def finish(beta: np.ndarray, restart_vals: Sequence[float]) -> StressScenario:
        var_value = objective(beta)
        cov = covariance(factor_correlation(beta, distances), vols)
        base_cov = covariance(factor_correlation(mean, distances), vols)
        vals = np.asarray(restart_vals, dtype=float)
        spread = float((vals.max() - vals.min()) / abs(vals.max())) if vals.size and vals.max() else 0.0
        dist_b = float(math.sqrt(d2(beta)[0]))
        on_boundary = (not unconstrained) and h > 0 and abs(dist_b ** 2 - h) <= 1e-7 * max(h, 1.0)
        return StressScenario(
            beta=beta, mahalanobis=dist_b, constraint_quantile=constraint_label, label=label,
            h=h, variance=var_value, var=var_normal(weights, cov, alpha),
            base_var=var_normal(weights, base_cov, alpha), on_boundary=bool(on_boundary),
            converged=spread <= config.spread_tol, restart_spread=spread,
            restart_objectives=tuple(float(v) for v in vals))

    if h == 0:
        return finish(mean.copy(), [f0])

    R = config.restarts
    radius = math.sqrt(h) if not unconstrained else math.nan
    rngs = [_restart_rng(config.seed, r) for r in range(R)]

    # starting points: restart 0 at the origin, others uniform in the feasible set
    B = np.tile(mean, (R, 1))
    for r in range(1, R):
        rng = rngs[r]
        for _ in range(100):
            if unconstrained:
                cand = rng.uniform(0.0, cap, size=m)
            else:
                direction = rng.standard_normal(m)
                direction /= np.linalg.norm(direction)
                u = direction * radius * rng.random() ** (1.0 / m)
                cand = np.maximum(mean + chol @ u, 0.0)
                if d2(cand)[0] > h:
                    continue
            B[r] = cand
            break
    F = objective.batch(B) / scale
    best_B, best_F = B.copy(), F.copy()

    T0 = config.initial_temperature
    step0 = config.step_scale * (radius if not unconstrained else cap)
    for level in range(config.n_temperatures):
        T = T0 * config.cooling ** level
        tau = step0 * max(math.sqrt(T / T0), 1e-3)
        Z = np.stack([rng.standard_normal((config.steps_per_temperature, m)) for rng in rngs])
        Ua = np.stack([rng.random(config.steps_per_temperature) for rng in rngs])
        for s in range(config.steps_per_temperature):
            if unconstrained:
                P = np.clip(B + tau * Z[:, s], 0.0, cap)
                feasible = np.ones(R, dtype=bool)
            else:
                U = _forward(chol, B - mean) + tau * Z[:, s]
                nu2 = np.einsum("ij,ij->i", U, U)
                outside = nu2 > h
                U[outside] *= (radius / np.sqrt(nu2[outside]))[:, None]
                P = np.maximum(mean + _lower_mul(chol, U), 0.0)
                feasible = d2(P) <= h * (1.0 + 1e-12)
            FP = objective.batch(P) / scale
            gain = FP - F
            with np.errstate(over="ignore"):
                accept = feasible & ((gain >= 0) | (Ua[:, s] < np.exp(gain / T)))
            B[accept] = P[accept]
            F[accept] = FP[accept]
            better = accept & (F > best_F)
            best_B[better] = B[better]
            best_F[better] = F[better]

    grad_scale = 1.0 / scale
    cons = [] if unconstrained else [{
        "type": "ineq",
        "fun": lambda b: (h - d2(b)[0]) / max(h, 1.0),
        "jac": lambda b: -2.0 * (q_inv @ (b - mean)) / max(h, 1.0),
    }]
    bounds = [(0.0, cap if unconstrained else None)] * m

    def polish(start: np.ndarray) -> tuple[np.ndarray, float]:
        start_val = objective(start) / scale
        if not config.polish:
            return start, start_val
        res = minimize(lambda b: -objective(b) / scale, start,
                       jac=lambda b: -objective.gradient(b) * grad_scale,
                       method="SLSQP", bounds=bounds, constraints=cons,
                       options={"ftol": 1e-15, "maxiter": 500})
        b = np.clip(res.x, 0.0, cap)
        if not unconstrained:
            dd = d2(b)[0]
            if dd > h:
                b = mean + (b - mean) * math.sqrt(h / dd) * (1.0 - 1e-15)
                b = np.maximum(b, 0.0)
        val = objective(b) / scale
        return (b, val) if val >= start_val else (start, start_val)

    polished = [polish(best_B[r]) for r in range(R)]
    restart_vals = [v for _, v in polished]
    extras = []
    for p in initial_points:
        p = np.asarray(p, dtype=float)
        if np.all(p >= 0) and (unconstrained or d2(p)[0] <= h * (1.0 + 1e-12)):
            extras.append(polish(p))
    candidates = polished + extras
    best = max(range(len(candidates)), key=lambda i: candidates[i][1])
    scenario = finish(candidates[best][0], restart_vals)
    if not scenario.converged:
        logger.warning("restart optima differ by %.3g (relative) for h=%s", scenario.restart_spread, h)
    return scenario


def stationary_beta(c1: float, c2: float, c3: float) -> float:
    """Root of ``-c1 exp(-beta) + c2 + c3 beta = 0`` on the principal branch:
    ``W(c1 exp(c2/c3) / c3) - c2/c3``."""
    if c1 == 0 or c3 == 0:
        raise DomainError("c1 and c3 must be nonzero")
    ratio = c2 / c3
    arg = c1 * math.exp(ratio) / c3
    if arg < -math.exp(-1.0):
        raise DomainError(f"Lambert argument {arg:.6g} below -1/e: no real stationary point")
    return lambert_w0(arg) - ratio


@dataclass(frozen=True)
class StationarityReport:
    skipped: bool
    notice: str = ""
    lagrange_multiplier: float = 0.0
    gradient: np.ndarray | None = None
    max_abs_gradient: float = float("nan")
    relative_gradient: float = float("nan")
    constraint_residual: float = float("nan")
    c1: np.ndarray | None = None
    c2: np.ndarray | None = None
    c3: np.ndarray | None = None
    lambert_beta: np.ndarray | None = None
    free: np.ndarray | None = None


def stationarity_check(
    scenario: StressScenario,
    weights: PortfolioWeights,
    distances: DistanceMatrixSet,
    vols,
    dist: BetaDistribution,
    bound_tol: float = 1e-9,
) -> StationarityReport:
    """Evaluate the Lagrangian first-order conditions at a search result.

    Only valid for indicator (0/1) distances. The multiplier is fitted by
    least squares over coordinates not pinned at ``beta = 0``; it is zero
    for interior scenarios. Pinned coordinates are excluded from the
    reported gradient norm.
    """
    if not distances.is_binary():
        return StationarityReport(skipped=True,
                                  notice="non-indicator factor distances: first-order check skipped")
    beta = np.asarray(scenario.beta, dtype=float)
    m = beta.size
    objective = VarianceObjective(weights, distances, vols)
    grad_f = objective.gradient(beta)
    q = np.linalg.inv(dist.cov)
    a = 2.0 * q @ (beta - dist.mean)
    free = beta > bound_tol
    lam = 0.0
    if scenario.on_boundary and np.any(free) and float(a[free] @ a[free]) > 0:
        lam = -float(grad_f[free] @ a[free]) / float(a[free] @ a[free])
    grad_l = grad_f + lam * a

    # per-coordinate form -c1 e^{-beta_l} + c2 + c3 beta_l
    c1 = np.empty(m)
    for l in range(m):
        e = objective.exponents(beta[None, :])[0] - beta[l] * objective.patterns[:, l]
        c1[l] = float(np.sum(objective.coef * np.exp(-e) * objective.patterns[:, l]))
    dev = beta - dist.mean
    c2 = np.array([2.0 * lam * (q[l] @ dev - q[l, l] * dev[l]) - 2.0 * lam * dist.mean[l] * q[l, l]
                   for l in range(m)])
    c3 = 2.0 * lam * np.diag(q)
    lam_beta = np.full(m, np.nan)
    if lam != 0.0:
        for l in range(m):
            try:
                lam_beta[l] = stationary_beta(c1[l], c2[l], c3[l])
            except DomainError:
                pass
    g_free = grad_l[free] if np.any(free) else np.zeros(0)
    max_abs = float(np.abs(g_free).max()) if g_free.size else 0.0
    ref = float(np.abs(grad_f).max())
    return StationarityReport(
        skipped=False, lagrange_multiplier=lam, gradient=grad_l, max_abs_gradient=max_abs,
        relative_gradient=max_abs / ref if ref > 0 else max_abs,
        constraint_residual=abs(mahalanobis(beta, dist) ** 2 - scenario.h) if not math.isinf(scenario.h) else 0.0,
        c1=c1, c2=c2, c3=c3, lambert_beta=lam_beta, free=free)

"""CDS and index-tranche valuation helpers.

Premiums are paid continuously, hazard rates are flat and derived from
spreads through the credit triangle ``lambda = s / (1 - R)``. Expected
tranche losses use the large-homogeneous-pool one-factor Gaussian model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .numerics import normal_cdf, normal_pdf, normal_quantile


class DegenerateNettingError(ValueError):
    """Net spread-weighted exposure is too close to zero for percentage weights."""


class ConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CdsQuote:
    spread: float
    maturity: float
    recovery: float = 0.4
    rate: float = 0.0

    def __post_init__(self):
        if self.spread < 0:
            raise ValueError("spread must be nonnegative")
        if not self.recovery < 1:
            raise ValueError("recovery must be < 1")
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")


@dataclass(frozen=True)
class CdsPosition:
    """Signed notional: positive for a protection seller, negative for a buyer."""

    id: str
    notional: float

    def __post_init__(self):
        if self.notional == 0:
            raise ValueError(f"position {self.id}: zero notional")

    @classmethod
    def from_side(cls, id: str, notional: float, side: str) -> "CdsPosition":
        side = side.strip().lower()
        if side not in ("seller", "buyer"):
            raise ValueError(f"position {id}: side must be 'seller' or 'buyer', got {side!r}")
        return cls(id, abs(notional) if side == "seller" else -abs(notional))


@dataclass(frozen=True)
class TrancheQuote:
    k1: float
    k2: float
    upfront: float
    running_spread: float
    base_corr_k1: float
    base_corr_k2: float
    index_spread: float
    maturity: float
    recovery: float = 0.4
    rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.k1 < self.k2 <= 1.0:
            raise ValueError(f"need 0 <= K1 < K2 <= 1, got ({self.k1}, {self.k2})")
        for rho in (self.base_corr_k1, self.base_corr_k2):
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"base correlation must lie in [0, 1), got {rho}")
        if not self.recovery < 1:
            raise ValueError("recovery must be < 1")
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")


def credit_triangle(spread: float, recovery: float) -> float:
    """Flat hazard rate ``s / (1 - R)``."""
    if not recovery < 1:
        raise ValueError(f"recovery must be < 1, got {recovery!r}")
    return spread / (1.0 - recovery)


def annuity(k: float, maturity: float) -> float:
    """``int_0^T exp(-k u) du``, with a series for tiny ``k T``."""
    x = k * maturity
    if abs(x) < 1e-8:
        return maturity * (1.0 - x / 2.0 + x * x / 6.0)
    return -math.expm1(-x) / k


def rpv01(quote: CdsQuote) -> float:
    """Risky duration ``(1 - exp(-(r + lambda) T)) / (r + lambda)``."""
    return annuity(quote.rate + credit_triangle(quote.spread, quote.recovery), quote.maturity)


def cds_mtm(contract_spread: float, quote: CdsQuote, notional: float, side: str = "seller") -> float:
    """Mark-to-market of an existing CDS: ``(s0 - s_t) RPV01 |A|`` for the
    protection seller, the negative for the buyer."""
    value = (contract_spread - quote.spread) * rpv01(quote) * abs(notional)
    side = side.lower()
    if side == "seller":
        return value
    if side == "buyer":
        return -value
    raise ValueError(f"side must be 'seller' or 'buyer', got {side!r}")


def _exposures(positions: Sequence[CdsPosition], quotes: Sequence[CdsQuote]) -> np.ndarray:
    if len(positions) != len(quotes):
        raise ValueError("one quote per position required")
    return np.array([p.notional * rpv01(q) * q.spread for p, q in zip(positions, quotes)])


def pnl_weights(
    positions: Sequence[CdsPosition],
    quotes: Sequence[CdsQuote],
    min_abs_total: float = 1e-8,
) -> tuple[float, np.ndarray]:
    """Linearised portfolio value ``V_{t-1}`` and spread-return weights.

    ``w_i = A_i RPV01_i s_i / sum_j A_j RPV01_j s_j`` and
    ``V_{t-1} = -sum_j A_j RPV01_j s_j`` so that ``dV = V_{t-1} * w . r``.
    """
    e = _exposures(positions, quotes)
    total = float(e.sum())
    if abs(total) < min_abs_total:
        raise DegenerateNettingError(
            f"net spread exposure {total:.3g} below {min_abs_total:g}: weights unbounded")
    return -total, e / total


def linear_pnl(positions: Sequence[CdsPosition], quotes: Sequence[CdsQuote], spread_returns) -> float:
    """First-order P&L ``-sum_i A_i RPV01_i r_i s_i``, time decay ignored."""
    r = np.asarray(spread_returns, dtype=float).ravel()
    e = _exposures(positions, quotes)
    if r.size != e.size:
        raise ValueError("one spread return per position required")
    return -float(e @ r)


# ---------------------------------------------------------------------------
# Tranches
# ---------------------------------------------------------------------------


def lhp_base_expected_loss(k: float, default_prob: float, recovery: float, rho: float) -> float:
    """``E[min(L, K)]`` for the pool loss fraction ``L`` of a large
    homogeneous pool under a one-factor Gaussian copula."""
    lgd = 1.0 - recovery
    if k <= 0.0 or default_prob <= 0.0:
        return 0.0
    if default_prob >= 1.0:
        return min(lgd, k)
    if k >= lgd:
        return lgd * default_prob
    if rho <= 0.0:
        return min(lgd * default_prob, k)
    c = normal_quantile(default_prob)
    sr, s1 = math.sqrt(rho), math.sqrt(1.0 - rho)
    # L(M) = lgd * Phi((c - sr M)/s1) is decreasing in M; L <= K iff M >= m_star
    m_star = (c - s1 * normal_quantile(k / lgd)) / sr
    tail, _ = quad(lambda x: normal_pdf(x) * normal_cdf((c - sr * x) / s1), m_star, math.inf,
                   epsabs=1e-14, epsrel=1e-12, limit=200)
    return lgd * tail + k * normal_cdf(m_star)


def index_default_probability(quote: TrancheQuote) -> float:
    return -math.expm1(-credit_triangle(quote.index_spread, quote.recovery) * quote.maturity)


def tranche_expected_loss(quote: TrancheQuote) -> float:
    """Expected tranche loss as a fraction of the tranche width, each base
    tranche priced at its own base correlation."""
    p = index_default_probability(quote)
    el2 = lhp_base_expected_loss(quote.k2, p, quote.recovery, quote.base_corr_k2)
    el1 = lhp_base_expected_loss(quote.k1, p, quote.recovery, quote.base_corr_k1)
    return (el2 - el1) / (quote.k2 - quote.k1)


def tranche_survival_at_maturity(quote: TrancheQuote, pool_size: int | None = None) -> float:
    """``Q(T, K1, K2) = 1 - ETL(K1, K2)``, clamped to [0, 1].

    ``pool_size`` is accepted for interface stability; the LHP limit is used.
    """
    return min(1.0, max(0.0, 1.0 - tranche_expected_loss(quote)))


def tranche_equivalent_spread(quote: TrancheQuote, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Running spread without upfront that is value-equivalent to the quoted
    (upfront, running) pair: fixed point of ``s = U / RPV01(s) + S``."""
    return equivalent_spread(quote.upfront, quote.running_spread, quote.maturity,
                             quote.recovery, quote.rate, tol=tol, max_iter=max_iter)


def equivalent_spread(
    upfront: float,
    running: float,
    maturity: float,
    recovery: float = 0.4,
    rate: float = 0.0,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> float:
    """Fixed-point iteration from ``s0 = S + U/T``. Steps are halved once
    successive corrections change sign; slow monotone contraction (map slope
    near one, e.g. large upfronts) is accelerated by Aitken extrapolation."""
    U, S = upfront, running
    if U == 0.0:
        return S

    def g(s: float) -> float:
        return U / annuity(rate + credit_triangle(s, recovery), maturity) + S

    s = S + U / maturity
    trace = [s]
    damping = 1.0
    prev_step = 0.0
    for _ in range(max_iter):
        if s <= 0.0:
            raise ConvergenceError(
                f"equivalent spread turned nonpositive ({s:.6g}); upfront {U} violates U > -S*RPV01")
        step = g(s) - s
        if abs(step) <= tol:
            return s + step
        if prev_step * step < 0.0:
            damping = 0.5
        ratio = step / prev_step if prev_step else 0.0
        jump = s + step / (1.0 - ratio) if 0.5 < ratio < 1.0 else 0.0
        s = jump if jump > 0.0 else s + damping * step
        prev_step = step
        trace.append(s)
    raise ConvergenceError(f"equivalent spread did not converge; last iterates {trace[-5:]}")

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ndtr

from corrstress import credit_pricing as cp

mp.mp.dps = 30


def mp_base_el(k, p, recovery, rho):
    """``E[min(L, K)]`` integrating the capped conditional loss over the factor."""
    lgd = 1 - mp.mpf(recovery)
    c = mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1)
    sr, s1 = mp.sqrt(rho), mp.sqrt(1 - mp.mpf(rho))
    loss = lambda x: lgd * mp.ncdf((c - sr * x) / s1)
    kink = (c - s1 * mp.sqrt(2) * mp.erfinv(2 * mp.mpf(k) / lgd - 1)) / sr
    f = lambda x: min(loss(x), mp.mpf(k)) * mp.npdf(x)
    return mp.quad(f, [-mp.inf, kink, mp.inf])


def quote(**kw):
    base = dict(k1=0.03, k2=0.07, upfront=0.02, running=0.01, base_corr_k1=0.2, base_corr_k2=0.3,
                index_spread=0.012, maturity=5.0)
    base.update(kw)
    return cp.TrancheQuote(base["k1"], base["k2"], base["upfront"], base["running"],
                           base["base_corr_k1"], base["base_corr_k2"], base["index_spread"],
                           base["maturity"])


def test_credit_triangle():
    assert cp.credit_triangle(0.012, 0.4) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        cp.credit_triangle(0.01, 1.0)


@given(st.floats(1e-5, 0.2), st.floats(0.0, 0.9), st.floats(0.0, 0.08), st.floats(0.25, 30))
def test_rpv01_against_quadrature(s, recovery, r, T):
    q = cp.CdsQuote(s, T, recovery, r)
    k = r + s / (1 - recovery)
    ref, _ = quad(lambda u: math.exp(-k * u), 0, T, epsabs=1e-14, epsrel=1e-13)
    assert cp.rpv01(q) == pytest.approx(ref, abs=1e-8)


def test_rpv01_zero_hazard_limit():
    assert cp.rpv01(cp.CdsQuote(0.0, 5.0)) == pytest.approx(5.0, abs=1e-15)
    assert cp.annuity(1e-12, 5.0) == pytest.approx(5.0 * (1 - 2.5e-12), rel=1e-15)


def test_mtm_signs():
    q = cp.CdsQuote(0.01, 5.0)
    assert cp.cds_mtm(0.012, q, 1e7, "seller") > 0
    assert cp.cds_mtm(0.012, q, 1e7, "buyer") == -cp.cds_mtm(0.012, q, 1e7, "seller")
    assert cp.cds_mtm(0.01, q, 1e7) == 0.0
    with pytest.raises(ValueError):
        cp.cds_mtm(0.01, q, 1e7, "hedger")


def test_linear_pnl_is_first_order_mtm_change():
    pos = [cp.CdsPosition("a", 1e7), cp.CdsPosition("b", -4e6)]
    quotes = [cp.CdsQuote(0.01, 5.0), cp.CdsQuote(0.02, 3.0)]
    r = np.array([1e-4, -2e-4])
    moved = [cp.CdsQuote(q.spread * (1 + x), q.maturity) for q, x in zip(quotes, r)]
    exact = sum(cp.cds_mtm(q.spread, mq, abs(p.notional), "seller" if p.notional > 0 else "buyer")
                for p, q, mq in zip(pos, quotes, moved))
    lin = cp.linear_pnl(pos, quotes, r)
    assert lin == pytest.approx(exact, rel=1e-3)
    value, w = cp.pnl_weights(pos, quotes)
    assert w.sum() == pytest.approx(1.0)
    assert value * float(w @ r) == pytest.approx(lin, rel=1e-12)


def test_single_seller_weight_and_value_sign():
    value, w = cp.pnl_weights([cp.CdsPosition("a", 1e7)], [cp.CdsQuote(0.01, 5.0)])
    assert w == pytest.approx([1.0])
    assert value < 0  # a seller loses when spreads widen


def test_degenerate_netting():
    q = cp.CdsQuote(0.01, 5.0)
    with pytest.raises(cp.DegenerateNettingError):
        cp.pnl_weights([cp.CdsPosition("a", 1e7), cp.CdsPosition("b", -1e7)], [q, q])


def test_position_side_parsing():
    assert cp.CdsPosition.from_side("x", 5.0, "Buyer").notional == -5.0
    with pytest.raises(ValueError):
        cp.CdsPosition.from_side("x", 5.0, "long")
    with pytest.raises(ValueError):
        cp.CdsPosition("x", 0.0)


@pytest.mark.parametrize("k,p,rho", [(0.03, 0.06, 0.2), (0.07, 0.06, 0.3), (0.15, 0.2, 0.5),
                                     (0.3, 0.02, 0.05), (0.01, 0.5, 0.9)])
def test_base_expected_loss_against_mpmath(k, p, rho):
    assert cp.lhp_base_expected_loss(k, p, 0.4, rho) == pytest.approx(float(mp_base_el(k, p, 0.4, rho)),
                                                                     abs=1e-12)


def test_base_expected_loss_limits():
    assert cp.lhp_base_expected_loss(0.0, 0.1, 0.4, 0.3) == 0.0
    assert cp.lhp_base_expected_loss(0.7, 0.1, 0.4, 0.3) == pytest.approx(0.06)
    assert cp.lhp_base_expected_loss(0.03, 0.1, 0.4, 0.0) == pytest.approx(0.03)
    assert cp.lhp_base_expected_loss(0.6 - 1e-9, 0.1, 0.4, 0.3) == pytest.approx(0.06, abs=1e-9)


def test_whole_pool_conservation():
    points = [0.0, 0.03, 0.07, 0.1, 0.15, 0.3, 1.0]
    corrs = [0.0, 0.15, 0.25, 0.3, 0.4, 0.6, 0.7]
    p_total = 0.0
    for (k1, c1), (k2, c2) in zip(zip(points, corrs), zip(points[1:], corrs[1:])):
        q = quote(k1=k1, k2=k2, base_corr_k1=c1, base_corr_k2=c2)
        p_total += (k2 - k1) * cp.tranche_expected_loss(q)
    q = quote()
    assert p_total == pytest.approx(0.6 * cp.index_default_probability(q), abs=1e-9)


def test_equity_tranche_against_monte_carlo():
    q = quote(k1=0.0, k2=0.03, base_corr_k2=0.2)
    p = cp.index_default_probability(q)
    c = math.sqrt(2) * float(mp.erfinv(2 * p - 1))
    m = np.random.default_rng(2024).standard_normal(1_000_000)
    loss = 0.6 * ndtr((c - math.sqrt(0.2) * m) / math.sqrt(0.8))
    x = np.minimum(loss, 0.03) / 0.03
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(cp.tranche_expected_loss(q) - x.mean()) <= 3 * se


def test_survival_clamped():
    assert 0.0 <= cp.tranche_survival_at_maturity(quote(k1=0.0, k2=0.03, index_spread=0.5)) <= 1.0


def test_quote_validation():
    with pytest.raises(ValueError):
        quote(k1=0.07, k2=0.03)
    with pytest.raises(ValueError):
        quote(base_corr_k1=1.0)


def test_equivalent_spread_without_upfront():
    assert cp.equivalent_spread(0.0, 0.05, 5.0) == 0.05


@given(st.floats(-0.05, 0.55), st.floats(0.0, 0.05), st.floats(1.0, 10.0))
def test_equivalent_spread_fixed_point(upfront, running, T):
    # no positive solution below -S*RPV01 or at upfronts reaching the loss given default
    assume(upfront > -0.5 * running)
    s = cp.equivalent_spread(upfront, running, T)
    g = upfront / cp.annuity(s / 0.6, T) + running
    assert abs(s - g) <= 1e-10


def test_equivalent_spread_infeasible_upfront():
    with pytest.raises(cp.ConvergenceError):
        cp.equivalent_spread(-0.5, 0.01, 5.0)


def bisect_equivalent_spread(U, S, T, recovery, rate):
    """Root of ``s - U/RPV01(s) - S`` by plain bisection, independent of the iteration."""
    f = lambda s: s - U / cp.annuity(rate + s / (1 - recovery), T) - S
    lo, hi = 1e-9, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return 0.5 * (lo + hi)


def test_equivalent_spread_with_rate_against_bisection():
    s = cp.equivalent_spread(0.05, 0.01, 5.0, recovery=0.4, rate=0.02)
    assert s == pytest.approx(bisect_equivalent_spread(0.05, 0.01, 5.0, 0.4, 0.02), abs=1e-9)


@given(st.floats(0.0, 0.25), st.floats(0.001, 0.25), st.floats(0.0, 0.04))
def test_equivalent_spread_increasing_in_upfront_and_running(upfront, du, running):
    base = cp.equivalent_spread(upfront, running, 5.0)
    assert cp.equivalent_spread(upfront + du, running, 5.0) > base
    assert cp.equivalent_spread(upfront, running + du / 10, 5.0) > base


@given(st.floats(0.0, 0.2), st.floats(0.0, 0.1), st.floats(1e-4, 0.05))
def test_rpv01_decreasing_in_spread_and_rate(s, r, ds):
    assert cp.rpv01(cp.CdsQuote(s + ds, 5.0, 0.4, r)) < cp.rpv01(cp.CdsQuote(s, 5.0, 0.4, r))
    assert cp.rpv01(cp.CdsQuote(s, 5.0, 0.4, r + ds)) < cp.rpv01(cp.CdsQuote(s, 5.0, 0.4, r))


def test_offsetting_positions_net_to_zero():
    q = cp.CdsQuote(0.015, 5.0)
    assert cp.cds_mtm(0.01, q, 1e6, "seller") + cp.cds_mtm(0.01, q, 1e6, "buyer") == 0.0
    legs = [cp.CdsPosition("a", 1e6), cp.CdsPosition("a", -1e6)]
    assert cp.linear_pnl(legs, [q, q], [0.05, 0.05]) == pytest.approx(0.0, abs=1e-9)


def test_linear_pnl_scales_with_notional():
    quotes = [cp.CdsQuote(0.01, 5.0), cp.CdsQuote(0.02, 10.0)]
    r = [0.03, -0.01]
    one = cp.linear_pnl([cp.CdsPosition("a", 1e6), cp.CdsPosition("b", -4e5)], quotes, r)
    two = cp.linear_pnl([cp.CdsPosition("a", 2e6), cp.CdsPosition("b", -8e5)], quotes, r)
    assert two == pytest.approx(2 * one, rel=1e-14)


def test_zero_index_spread_means_no_tranche_loss():
    assert cp.tranche_survival_at_maturity(quote(index_spread=0.0)) == 1.0


def test_whole_pool_conservation_single_correlation():
    points = [0.0, 0.03, 0.07, 0.15, 1.0]
    total = sum((k2 - k1) * cp.tranche_expected_loss(quote(k1=k1, k2=k2, base_corr_k1=0.3,
                                                           base_corr_k2=0.3))
                for k1, k2 in zip(points, points[1:]))
    assert total == pytest.approx(0.6 * cp.index_default_probability(quote()), abs=1e-9)


def test_equity_tranche_100bp_against_monte_carlo():
    q = quote(k1=0.0, k2=0.03, base_corr_k2=0.3, index_spread=0.01)
    c = math.sqrt(2) * float(mp.erfinv(2 * cp.index_default_probability(q) - 1))
    m = np.random.default_rng(11).standard_normal(1_000_000)
    x = np.minimum(0.6 * ndtr((c - math.sqrt(0.3) * m) / math.sqrt(0.7)), 0.03) / 0.03
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(cp.tranche_survival_at_maturity(q) - (1 - x.mean())) <= 3 * se

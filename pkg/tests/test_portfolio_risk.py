import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corrstress import portfolio_risk as pr
from corrstress.numerics import DomainError

mp.mp.dps = 30

# reference (VaR, t-VaR, joint t-VaR) rows of a report computed at nu = 13.5
REFERENCE_ROWS = {
    "base": (339.32, 354.98, 354.98),
    0.7: (366.87, 383.80, 386.28),
    0.8: (369.39, 386.44, 416.41),
    0.9: (372.89, 390.10, 464.40),
    0.95: (375.76, 393.11, 510.54),
    0.99: (381.08, 398.67, 617.38),
    0.995: (383.00, 400.68, 664.73),
    0.999: (386.88, 404.74, 780.37),
    "unconstrained": (620.96, 649.62, 1252.53),
}


def two_asset():
    cov = pr.covariance(np.array([[1.0, 0.4], [0.4, 1.0]]), [0.01, 0.02])
    return pr.PortfolioWeights([0.6, 0.4], value=1e6), cov


def mp_t_quantile(p, nu):
    nu = mp.mpf(nu)
    target = 2 * (1 - mp.mpf(p))
    lo, hi = mp.mpf(0), mp.mpf(50)
    for _ in range(150):
        t = (lo + hi) / 2
        tail = mp.betainc(nu / 2, mp.mpf(1) / 2, 0, nu / (nu + t * t), regularized=True)
        lo, hi = (t, hi) if tail > target else (lo, t)
    return lo


def test_var_normal_direct():
    w, cov = two_asset()
    sd = math.sqrt(0.36e-4 + 0.16 * 4e-4 + 2 * 0.24 * 0.4 * 2e-4)
    assert pr.var_normal(w, cov, 0.99) == pytest.approx(float(mp.sqrt(2) * mp.erfinv(0.98)) * 1e6 * sd,
                                                       rel=1e-13)


def test_var_sign_of_value_does_not_matter():
    w, cov = two_asset()
    assert pr.var_normal(pr.PortfolioWeights(w.w, -1e6), cov, 0.99) == pr.var_normal(w, cov, 0.99)


def test_t_var_ratio_at_13_5():
    w, cov = two_asset()
    ratio = pr.var_t(w, cov, 0.99, 13.5) / pr.var_normal(w, cov, 0.99)
    expect = float(mp_t_quantile(0.99, 13.5) * mp.sqrt(mp.mpf(11.5) / 13.5) / (mp.sqrt(2) * mp.erfinv(0.98)))
    assert ratio == pytest.approx(expect, rel=1e-10)
    assert ratio == pytest.approx(1.0462, abs=2e-3)


@pytest.mark.parametrize("row", list(REFERENCE_ROWS))
def test_reference_t_var_ratio(row):
    var, tvar, _ = REFERENCE_ROWS[row]
    w, cov = two_asset()
    ratio = pr.var_t(w, cov, 0.99, 13.5) / pr.var_normal(w, cov, 0.99)
    # reference figures are rounded to two decimals
    assert tvar / var == pytest.approx(ratio, abs=0.01 / var * 2)


@pytest.mark.parametrize("row", [q for q in REFERENCE_ROWS if q != "base"])
def test_reference_joint_stress_ratio(row):
    var, _, joint = REFERENCE_ROWS[row]
    vol_alpha = 0.999 if row == "unconstrained" else row
    w, cov = two_asset()
    ratio = pr.var_joint_stress(w, cov, 0.99, 13.5, vol_alpha) / pr.var_normal(w, cov, 0.99)
    assert joint / var == pytest.approx(ratio, abs=0.01 / var * 3)


@given(st.floats(0.51, 0.999), st.floats(2.5, 60.0))
def test_joint_stress_identity(vol_alpha, nu):
    w, cov = two_asset()
    ratio = pr.var_joint_stress(w, cov, 0.99, nu, vol_alpha) / pr.var_normal(w, cov, 0.99)
    assert ratio == pytest.approx(math.sqrt(pr.mixing_quantile(vol_alpha, nu) * (nu - 2) / nu), rel=1e-12)


def test_mixing_quantile_against_mpmath():
    q = pr.mixing_quantile(0.99, 13.5)
    assert float(mp.gammainc(6.75, 6.75 / mp.mpf(q), mp.inf, regularized=True)) == pytest.approx(0.99, abs=1e-12)


def test_zero_correlation_and_zero_vol():
    w = pr.PortfolioWeights([0.5, 0.5])
    assert pr.var_normal(w, pr.covariance(np.eye(2), [0.0, 0.0]), 0.99) == 0.0
    v = pr.var_normal(w, pr.covariance(np.eye(2), [0.02, 0.02]), 0.99)
    assert v == pytest.approx(2.3263478740408408 * 0.02 * math.sqrt(0.5), rel=1e-12)


def test_domain_errors():
    w, cov = two_asset()
    with pytest.raises(DomainError):
        pr.var_normal(w, cov, 0.3)
    with pytest.raises(DomainError):
        pr.var_t(w, cov, 0.99, 2.0)
    with pytest.raises(DomainError):
        pr.var_joint_stress(w, cov, 0.99, 1.5, 0.9)
    with pytest.raises(ValueError):
        pr.portfolio_variance(w, np.eye(3))
    with pytest.raises(ArithmeticError):
        pr.portfolio_variance(pr.PortfolioWeights([0.4, 0.6]), np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_horizon_vol():
    assert pr.horizon_vol(0.25) == pytest.approx(0.25 / math.sqrt(250))
    assert pr.horizon_vol(0.25, 10, 252) == pytest.approx(0.25 * math.sqrt(10 / 252))


def test_equal_weights():
    assert pr.PortfolioWeights.equal(4).w == pytest.approx([0.25] * 4)


def test_nu_fit_recovers_heavy_tails():
    rng = np.random.default_rng(11)
    nu, n, d = 6.0, 20000, 3
    a = np.linalg.cholesky(np.array([[1, 0.3, 0.2], [0.3, 1, 0.4], [0.2, 0.4, 1]]))
    v = nu / rng.chisquare(nu, size=n)
    x = np.sqrt(v)[:, None] * (rng.standard_normal((n, d)) @ a.T)
    fit = pr.fit_t_nu(x)
    assert fit.nu == pytest.approx(nu, rel=0.15)
    assert fit.nu_moment > 2


def test_nu_fit_gaussian_hits_upper_bound_region():
    x = np.random.default_rng(2).standard_normal((5000, 2))
    assert pr.fit_t_nu(x).nu > 50


@pytest.mark.parametrize("nu", [4.0, 13.5, 40.0])
def test_joint_stress_at_mixing_mean_equals_normal_var(nu):
    # P(V <= E[V]) for V ~ Ig(nu/2, nu/2) with E[V] = nu/(nu-2)
    mean = mp.mpf(nu) / (nu - 2)
    level = float(mp.gammainc(mp.mpf(nu) / 2, mp.mpf(nu) / 2 / mean, mp.inf, regularized=True))
    w, cov = two_asset()
    assert pr.var_joint_stress(w, cov, 0.99, nu, level) == pytest.approx(pr.var_normal(w, cov, 0.99), rel=1e-9)

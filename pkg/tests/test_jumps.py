import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from conftest import WEEK, random_model
from skewparity.errors import ModelError
from skewparity.jumps import (
    filtering_estimate,
    posterior_jump_prob,
    quadratic_rule_nd,
    threshold_points_1d,
)
from skewparity.mixture import MixtureModel, simulate_returns, to_period
from skewparity.panel import ReturnPanel

CARRY = dict(mu=0.1010, sigma=0.0291, mu_tilde=-0.0223, sigma_tilde=0.0257, pi=0.005)


def test_weekly_carry_thresholds():
    rule = threshold_points_1d(**CARRY, pi_star=0.30, dt=WEEK)
    assert rule.y_minus == pytest.approx(-0.0124, abs=1e-4)
    assert rule.y_plus == pytest.approx(0.0174, abs=1e-4)
    assert rule.kappa_sigma == pytest.approx(3.70, abs=5e-3)


def test_weekly_three_asset_threshold(weekly3):
    rule = quadratic_rule_nd(weekly3, pi_star=0.30, dt=WEEK)
    assert rule.exact
    assert rule.r_star == pytest.approx(16.03, abs=0.01)


def _posterior_1d(y, mu, sigma, mu_tilde, sigma_tilde, pi, dt):
    s1 = sigma * math.sqrt(dt)
    s2 = math.sqrt(s1 ** 2 + sigma_tilde ** 2)
    f1 = (1 - pi) * norm.pdf(y, mu * dt, s1)
    f2 = pi * norm.pdf(y, mu * dt + mu_tilde, s2)
    return f2 / (f1 + f2)


def test_posterior_matches_bayes_formula():
    m = MixtureModel(CARRY["pi"], [CARRY["mu"]], [[CARRY["sigma"] ** 2]],
                     [CARRY["mu_tilde"]], [[CARRY["sigma_tilde"] ** 2]])
    y = np.linspace(-0.05, 0.05, 101)
    got = posterior_jump_prob(m, y[:, None], dt=WEEK)
    want = _posterior_1d(y, **CARRY, dt=WEEK)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-300)


def test_1d_rule_equals_posterior_rule_on_grid():
    m = MixtureModel(CARRY["pi"], [CARRY["mu"]], [[CARRY["sigma"] ** 2]],
                     [CARRY["mu_tilde"]], [[CARRY["sigma_tilde"] ** 2]])
    rule = threshold_points_1d(**CARRY, dt=WEEK)
    y = np.linspace(-0.06, 0.06, 10_000)
    post = posterior_jump_prob(m, y[:, None], dt=WEEK)
    # skip points where rounding decides the comparison
    clear = np.abs(post - 0.3) > 1e-12
    assert np.count_nonzero(rule.flags(y)[clear] != (post >= 0.3)[clear]) == 0


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(-0.2, 0.3), sigma=st.floats(0.02, 0.4), mt=st.floats(-0.2, 0.2),
       stl=st.floats(0.005, 0.3), pi=st.floats(0.001, 0.5), pi_star=st.floats(0.05, 0.95))
def test_1d_rule_equivalence_property(mu, sigma, mt, stl, pi, pi_star):
    rule = threshold_points_1d(mu, sigma, mt, stl, pi, pi_star, dt=WEEK)
    m = MixtureModel(pi, [mu], [[sigma * sigma]], [mt], [[stl * stl]])
    hw = 8 * math.sqrt(sigma ** 2 * WEEK + stl ** 2)
    y = np.linspace(mu * WEEK - hw, mu * WEEK + hw, 2001)
    post = posterior_jump_prob(m, y[:, None], dt=WEEK)
    clear = np.abs(post - pi_star) > 1e-9
    assert np.all(rule.flags(y)[clear] == (post >= pi_star)[clear])
    if rule.discriminant < 0:
        assert np.all(post >= pi_star - 1e-9)


def test_negative_discriminant_flags_everything():
    # prior close to one half and a low pi_star: the posterior never drops below pi_star
    rule = threshold_points_1d(0.0, 0.2, 0.0, 0.01, 0.45, pi_star=0.2)
    assert rule.discriminant < 0
    assert math.isnan(rule.y_minus) and math.isnan(rule.y_plus)
    assert np.all(rule.flags(np.linspace(-1, 1, 11)))


def test_nd_rule_equals_posterior_rule_on_grid(weekly3):
    rule = quadratic_rule_nd(weekly3, dt=WEEK)
    rng = np.random.default_rng(0)
    p = to_period(weekly3, WEEK)
    y = p.mu + rng.normal(size=(10_000, 3)) * np.sqrt(np.diag(p.sigma2)) * 3
    post = posterior_jump_prob(weekly3, y, dt=WEEK)
    clear = np.abs(post - 0.3) > 1e-10
    assert np.count_nonzero(rule.flags(y)[clear] != (post >= 0.3)[clear]) == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), pi_star=st.floats(0.05, 0.95))
def test_nd_rule_equivalence_property(seed, pi_star):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    m = random_model(rng, n, lam=float(rng.uniform(0.005, 0.3)))
    rule = quadratic_rule_nd(m, pi_star=pi_star, dt=WEEK)
    p = to_period(m, WEEK)
    y = p.mu + rng.normal(size=(2000, n)) * np.sqrt(np.diag(p.sigma2)) * 3
    post = posterior_jump_prob(m, y, dt=WEEK)
    clear = np.abs(post - pi_star) > 1e-8
    assert np.all(rule.flags(y)[clear] == (post >= pi_star)[clear])


def test_nd_rule_reduces_to_1d_rule():
    m = MixtureModel(CARRY["pi"], [CARRY["mu"]], [[CARRY["sigma"] ** 2]],
                     [CARRY["mu_tilde"]], [[CARRY["sigma_tilde"] ** 2]])
    nd = quadratic_rule_nd(m, dt=WEEK)
    one = threshold_points_1d(**CARRY, dt=WEEK)
    lo, hi = nd.v[0] - math.sqrt(nd.r_star / nd.Q[0, 0]), nd.v[0] + math.sqrt(nd.r_star / nd.Q[0, 0])
    assert lo == pytest.approx(one.y_minus, rel=1e-9)
    assert hi == pytest.approx(one.y_plus, rel=1e-9)


def test_nd_rule_without_range_falls_back_to_posterior(weekly3):
    # bonds have no jumps: Q is singular. Shift their jump mean off the range of Q
    m = MixtureModel(weekly3.lam, weekly3.mu, weekly3.sigma, [0.01, -0.012, -0.0223], weekly3.sigma_tilde)
    rule = quadratic_rule_nd(m, dt=WEEK)
    assert not rule.exact
    y = to_period(m, WEEK).mu + np.random.default_rng(1).normal(size=(500, 3)) * 0.02
    np.testing.assert_array_equal(rule.flags(y), posterior_jump_prob(m, y, dt=WEEK) >= 0.3)


def test_threshold_input_validation():
    with pytest.raises(ModelError):
        threshold_points_1d(**{**CARRY, "sigma_tilde": 0.0})
    with pytest.raises(ModelError):
        threshold_points_1d(**CARRY, pi_star=1.0)
    with pytest.raises(ModelError):
        threshold_points_1d(**{**CARRY, "pi": 0.0})


# --- filtering estimator ------------------------------------------------------------


def test_filtering_without_jumps_is_rolling_moments():
    rng = np.random.default_rng(2)
    panel = ReturnPanel(rng.normal(0.001, 0.01, (120, 2)), dt=WEEK)
    f = filtering_estimate(panel, 0.0, [0.0, 0.0], np.zeros((2, 2)), window=52)
    for t in (51, 80, 119):
        w = panel.data[t - 51: t + 1]
        np.testing.assert_allclose(f.mu[t], w.mean(axis=0) / WEEK, rtol=1e-12)
        np.testing.assert_allclose(f.sigma[t], np.cov(w, rowvar=False, bias=True) / WEEK, rtol=1e-10)
    assert np.all(np.isnan(f.mu[:51]))
    assert f.start == 51


def test_filtering_excludes_planted_jumps():
    rng = np.random.default_rng(3)
    y = rng.normal(0.002, 0.004, (200, 1))
    y[[80, 120, 150]] = -0.05
    panel = ReturnPanel(y, dt=WEEK)
    f = filtering_estimate(panel, 0.005, [-0.0223], [[0.0257 ** 2]], window=52)
    assert f.flags[[80, 120, 150]].all()
    assert f.flags[52:].sum() <= 6
    clean = np.delete(y[100:153], [20, 50], axis=0)
    assert f.mu[152, 0] == pytest.approx(clean.mean() / WEEK, rel=0.05)


def test_filtering_uses_only_past_data():
    m = to_period(MixtureModel(0.02, [0.05], [[0.01]], [-0.03], [[0.0004]]), WEEK)
    data = simulate_returns(m, 150, seed=4).data
    full = filtering_estimate(ReturnPanel(data, dt=WEEK), 0.02, [-0.03], [[0.0004]])
    cut = filtering_estimate(ReturnPanel(data[:100], dt=WEEK), 0.02, [-0.03], [[0.0004]])
    np.testing.assert_array_equal(full.mu[:100], cut.mu)
    np.testing.assert_array_equal(full.posterior[:100], cut.posterior)


def test_filtering_carries_forward_when_window_is_all_jumps():
    y = np.zeros((60, 1))
    y[:52, 0] = np.random.default_rng(5).normal(0, 0.001, 52)
    y[52:, 0] = -0.5
    f = filtering_estimate(ReturnPanel(y, dt=WEEK), 0.3, [-0.5], [[1e-4]], window=52)
    assert f.flags[52:].all()
    assert f.n_flagged[59] == 8
    assert not f.carried.any()
    g = filtering_estimate(ReturnPanel(y, dt=WEEK), 0.3, [-0.5], [[1e-4]], window=5)
    assert g.carried[56:].all()
    np.testing.assert_array_equal(g.mu[59], g.mu[56])


def test_filtering_validation():
    panel = ReturnPanel(np.zeros((10, 2)))
    with pytest.raises(ModelError):
        filtering_estimate(panel, 0.1, [0, 0], np.zeros((2, 2)), window=2)
    with pytest.raises(ModelError):
        filtering_estimate(panel, 0.1, [0, 0], np.zeros((2, 2)), window=20)
    with pytest.raises(ModelError):
        filtering_estimate(ReturnPanel(np.zeros((60, 2))), 0.1, [0], np.zeros((2, 2)))


def test_filtering_beats_contaminated_covariance():
    # frequent, well-separated jumps; per-period units
    true = MixtureModel(0.05, [0.001, 0.0005], [[1e-4, 2e-5], [2e-5, 4e-5]], [-0.06, -0.03],
                        [[4e-4, 1e-4], [1e-4, 2e-4]])
    panel = simulate_returns(true, 2000, seed=11)
    f = filtering_estimate(panel, 0.05, true.mu_tilde, true.sigma_tilde, window=104)
    dates = np.arange(f.start + 1, panel.T)
    frac = f.flags[dates].mean()
    se = np.sqrt(0.05 * 0.95 / dates.size)
    assert abs(frac - 0.05) <= 3 * se
    closer = 0
    for t in dates:
        w = panel.data[t - 103: t + 1]
        rolling = np.cov(w, rowvar=False, bias=True)
        closer += np.linalg.norm(f.sigma[t] - true.sigma) < np.linalg.norm(rolling - true.sigma)
    assert closer >= 0.9 * dates.size

"""Jump detection by posterior probabilities and the equivalent thresholding rules.

An observation is flagged as a jump when the posterior probability of the
jump regime reaches ``pi_star``. In one dimension the flagged set is the
complement of an interval; in general it is the exterior of a quadric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ModelError, SingularCovarianceError
from .estimation import _factor, _gauss_logpdf
from .mixture import MixtureModel, to_period
from .panel import ReturnPanel

DEFAULT_PI_STAR = 0.30


def _check_prob(name, p, closed=False):
    ok = 0.0 <= p <= 1.0 if closed else 0.0 < p < 1.0
    if not ok:
        raise ModelError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {p}")


def _log_odds(y, pi, m1, c1, m2, c2):
    """``log((1-pi) f1(y)) - log(pi f2(y))`` row-wise."""
    l1 = math.log1p(-pi) + _gauss_logpdf(y, m1, _factor(c1, 1))
    l2 = math.log(pi) + _gauss_logpdf(y, m2, _factor(c2, 2))
    if np.any(np.isneginf(l1) & np.isneginf(l2)):
        raise ArithmeticError("observation has zero density under both regimes")
    return l1 - l2


def posterior_jump_prob(model: MixtureModel, observations, dt: float = 1.0,
                        pi: Optional[float] = None) -> np.ndarray:
    """Posterior probability that each observation comes from the jump regime.

    Parameters
    ----------
    model : MixtureModel
        Annual normal regime and per-period jump component.
    observations : array_like, shape (n,) or (T, n)
        Period returns.
    dt : float
        Holding period of the observations in years.
    pi : float, optional
        Prior jump probability per period; defaults to ``model.lam``.

    Returns
    -------
    ndarray
        Probabilities, shape ``(T,)`` (a 0-d array for a single observation).
    """
    pi = model.lam if pi is None else float(pi)
    _check_prob("pi", pi, closed=True)
    y = np.asarray(observations, dtype=float)
    single = y.ndim == 1 and model.n > 1 or y.ndim == 0
    y = y.reshape(-1, model.n)
    if pi == 0.0:
        out = np.zeros(y.shape[0])
    elif pi == 1.0:
        out = np.ones(y.shape[0])
    else:
        p = to_period(model, dt)
        out = expit(-_log_odds(y, pi, p.mu, p.sigma, p.mu2, p.sigma2))
    return out[0] if single else out


# --- one dimension ------------------------------------------------------------


@dataclass(frozen=True)
class JumpRule1D:
    """Flag ``y`` when ``alpha_q y^2 + 2 beta_q y + gamma_q >= 0``.

    With a nonnegative discriminant this is ``y <= y_minus or y >= y_plus``.
    With a negative one the quadratic is positive everywhere and every
    observation is flagged; ``y_minus`` and ``y_plus`` are then NaN.
    ``kappa_sigma`` expresses the half-width of the interval in normal-regime
    standard deviations.
    """

    y_minus: float
    y_plus: float
    alpha_q: float
    beta_q: float
    gamma_q: float
    discriminant: float
    kappa_sigma: float

    def quadratic(self, y):
        y = np.asarray(y, dtype=float)
        return self.alpha_q * y * y + 2.0 * self.beta_q * y + self.gamma_q

    def flags(self, y) -> np.ndarray:
        return self.quadratic(y) >= 0.0


def threshold_points_1d(mu: float, sigma: float, mu_tilde: float, sigma_tilde: float,
                        pi: float, pi_star: float = DEFAULT_PI_STAR, dt: float = 1.0) -> JumpRule1D:
    """Truncation points of the single-asset jump rule.

    ``mu`` and ``sigma`` are annual, ``mu_tilde`` and ``sigma_tilde`` per
    period, ``pi`` the jump probability per period.
    """
    _check_prob("pi", pi)
    _check_prob("pi_star", pi_star)
    if not sigma_tilde > 0.0:
        raise ModelError("zero jump volatility: the rule is not quadratic")
    if not sigma > 0.0:
        raise ModelError("normal-regime volatility must be positive")
    s1 = sigma * sigma * dt
    s2 = s1 + sigma_tilde * sigma_tilde
    a = sigma_tilde * sigma_tilde
    b = (mu_tilde * sigma * sigma - mu * sigma_tilde * sigma_tilde) * dt
    log_k = math.log(pi * (1.0 - pi_star) / (pi_star * (1.0 - pi)))
    c = (mu * dt) ** 2 * s2 - (mu * dt + mu_tilde) ** 2 * s1 + (2.0 * log_k + math.log(s1 / s2)) * s2 * s1
    disc = b * b - a * c
    if disc >= 0.0:
        root = math.sqrt(disc)
        y_minus = (-b - root) / a
        y_plus = (-b + root) / a
        kappa = root / (a * sigma * math.sqrt(dt))
    else:
        y_minus = y_plus = kappa = math.nan
    return JumpRule1D(y_minus, y_plus, a, b, c, disc, kappa)


# --- several dimensions ----------------------------------------------------------


@dataclass(frozen=True)
class JumpRuleND:
    """Flag ``y`` when ``(y - v)' Q (y - v) >= r_star``.

    ``exact`` is False when the linear term of the log-odds does not lie in
    the range of ``Q``; :meth:`flags` then evaluates the posterior directly.
    """

    Q: np.ndarray
    v: np.ndarray
    r_star: float
    exact: bool
    pi: float
    pi_star: float
    period_model: MixtureModel

    def quadratic_form(self, y) -> np.ndarray:
        d = np.atleast_2d(np.asarray(y, dtype=float)) - self.v
        return np.einsum("ij,jk,ik->i", d, self.Q, d)

    def flags(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.exact:
            return self.quadratic_form(y) >= self.r_star
        p = self.period_model
        return expit(-_log_odds(y, self.pi, p.mu, p.sigma, p.mu2, p.sigma2)) >= self.pi_star


def _inverse(m, name):
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(f"{name} is not invertible", regime=name) from None
    ci = np.linalg.inv(c)
    return ci.T @ ci, 2.0 * np.log(np.diag(c)).sum()


def quadratic_rule_nd(model: MixtureModel, pi: Optional[float] = None,
                      pi_star: float = DEFAULT_PI_STAR, dt: float = 1.0) -> JumpRuleND:
    """Quadric form of the posterior jump rule.

    Works with a singular jump covariance (assets without jumps) by using
    the pseudo-inverse of ``Q``.
    """
    pi = model.lam if pi is None else float(pi)
    _check_prob("pi", pi)
    _check_prob("pi_star", pi_star)
    p = to_period(model, dt)
    i1, ld1 = _inverse(p.sigma, "Sigma dt")
    i2, ld2 = _inverse(p.sigma2, "Sigma dt + Sigma_tilde")
    Q = 0.5 * ((i1 - i2) + (i1 - i2).T)
    b = i1 @ p.mu - i2 @ p.mu2
    v = np.linalg.pinv(Q, rcond=1e-10, hermitian=True) @ b
    resid = np.abs(Q @ v - b).max()
    scale = np.abs(b).max() + np.abs(Q).max() * np.abs(v).max()
    exact = bool(resid <= 1e-8 * max(scale, 1e-300))
    log_k = math.log(pi * (1.0 - pi_star) / (pi_star * (1.0 - pi)))
    r_star = float(v @ Q @ v + p.mu2 @ i2 @ p.mu2 - p.mu @ i1 @ p.mu - 2.0 * log_k - (ld1 - ld2))
    Q.setflags(write=False)
    v.setflags(write=False)
    return JumpRuleND(Q, v, r_star, exact, pi, pi_star, p)


# --- filtering estimator ----------------------------------------------------------


@dataclass(frozen=True)
class FilteredSeries:
    """Output of :func:`filtering_estimate`, one entry per date.

    ``posterior`` and ``flags`` refer to the newest observation of each
    window and are NaN / False before the first estimation date. ``mu`` and
    ``sigma`` are annual normal-regime estimates using data through each
    date (NaN before the end of the first window). ``n_kept`` counts window
    observations used, ``n_flagged`` those excluded as jumps, and
    ``carried`` marks dates where too few observations survived and the
    previous estimate was kept.
    """

    posterior: np.ndarray
    flags: np.ndarray
    mean_posterior: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    n_kept: np.ndarray
    n_flagged: np.ndarray
    carried: np.ndarray
    start: int
    window: int
    pi_star: float


def filtering_estimate(panel: ReturnPanel, pi: float, mu_tilde, sigma_tilde,
                       pi_star: float = DEFAULT_PI_STAR, window: int = 52) -> FilteredSeries:
    """Rolling normal-regime estimates that exclude detected jumps.

    The first window is assumed jump-free. At every later date the window's
    posterior jump probabilities are computed with the previous estimates,
    observations with posterior below ``pi_star`` are kept, and the mean and
    (biased) covariance of the kept returns give the new estimates.

    Parameters
    ----------
    panel : ReturnPanel
    pi : float
        Jump probability per period.
    mu_tilde, sigma_tilde : array_like
        Jump mean and covariance per period.
    pi_star : float
        Posterior level at which an observation counts as a jump.
    window : int
        Rolling window length in periods; must exceed the number of assets.
    """
    y = panel.data
    T, n = y.shape
    dt = panel.dt
    if window <= n:
        raise ModelError(f"window ({window}) must exceed the number of assets ({n})")
    if T < window + 1:
        raise ModelError(f"need at least {window + 1} observations, got {T}")
    _check_prob("pi", pi, closed=True)
    _check_prob("pi_star", pi_star)
    mt = np.atleast_1d(np.asarray(mu_tilde, dtype=float))
    st = np.atleast_2d(np.asarray(sigma_tilde, dtype=float))
    if mt.shape != (n,) or st.shape != (n, n):
        raise ModelError("jump parameters do not match the panel dimension")

    posterior = np.full(T, np.nan)
    flags = np.zeros(T, dtype=bool)
    mean_post = np.full(T, np.nan)
    mu = np.full((T, n), np.nan)
    sigma = np.full((T, n, n), np.nan)
    n_kept = np.zeros(T, dtype=int)
    n_flagged = np.zeros(T, dtype=int)
    carried = np.zeros(T, dtype=bool)

    t0 = window - 1
    first = y[:window]
    m_hat = first.mean(axis=0)
    d = first - m_hat
    c_hat = d.T @ d / window
    mu[t0] = m_hat / dt
    sigma[t0] = c_hat / dt
    n_kept[t0] = window
    for t in range(window, T):
        w = y[t - window + 1: t + 1]
        if pi > 0.0:
            c2 = c_hat + st
            post = expit(-_log_odds(w, pi, m_hat, c_hat, m_hat + mt, c2))
        else:
            post = np.zeros(window)
        jump = post >= pi_star
        posterior[t] = post[-1]
        flags[t] = jump[-1]
        mean_post[t] = post.mean()
        keep = ~jump
        k = int(keep.sum())
        n_kept[t] = k
        n_flagged[t] = window - k
        if k <= n:
            carried[t] = True
        else:
            kept = w[keep]
            m_hat = kept.mean(axis=0)
            d = kept - m_hat
            c_hat = d.T @ d / k
        mu[t] = m_hat / dt
        sigma[t] = c_hat / dt
    for arr in (posterior, flags, mean_post, mu, sigma, n_kept, n_flagged, carried):
        arr.setflags(write=False)
    return FilteredSeries(posterior, flags, mean_post, mu, sigma, n_kept, n_flagged, carried, t0, window, pi_star)

"""Rolling-window allocation backtests and descriptive statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import skew

from .budgeting import RiskBudget, solve_rb
from .errors import ModelError, SkewParityError
from .estimation import ConstraintSet, constrained_ml_fit
from .jumps import DEFAULT_PI_STAR, filtering_estimate
from .mixture import MixtureModel, to_period
from .panel import ReturnPanel
from .risk import RiskMeasure

ESTIMATORS = ("rolling_gaussian", "filtering", "windowed_ml")
MU_CONVENTIONS = ("zero", "estimate")


def compute_returns(prices, frequency: int = 1, overlapping: bool = False,
                    base_dt: float = 1.0, labels=(), dates=None) -> ReturnPanel:
    """Simple returns over ``frequency`` base periods.

    Parameters
    ----------
    prices : array_like, shape (T,) or (T, n)
        Positive prices, oldest first.
    frequency : int
        Number of base periods per return (5 turns daily prices into weekly
        returns).
    overlapping : bool
        Slide the return window by one base period instead of ``frequency``.
    base_dt : float
        Length of one base period in years; the panel gets
        ``dt = base_dt * frequency``.
    dates : sequence, optional
        Price dates; each return is stamped with the date it ends on.
    """
    p = np.asarray(prices, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if frequency < 1:
        raise ModelError("frequency must be at least 1")
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
        raise ModelError("prices must be finite and positive")
    if p.shape[0] <= frequency:
        raise ModelError(f"insufficient history: {p.shape[0]} prices for {frequency}-period returns")
    if overlapping:
        end = np.arange(frequency, p.shape[0])
    else:
        end = np.arange(frequency, p.shape[0], frequency)
    r = p[end] / p[end - frequency] - 1.0
    stamps = None if dates is None else tuple(dates[i] for i in end)
    return ReturnPanel(r, dt=base_dt * frequency, labels=tuple(labels), dates=stamps)


def max_drawdown(returns) -> np.ndarray:
    """Largest peak-to-trough loss of the cumulated series, as a positive fraction."""
    r = np.asarray(returns, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    nav = np.vstack([np.ones((1, r.shape[1])), np.cumprod(1.0 + r, axis=0)])
    peak = np.maximum.accumulate(nav, axis=0)
    return (1.0 - nav / peak).max(axis=0)


@dataclass(frozen=True)
class DescriptiveStats:
    labels: tuple
    best: np.ndarray
    worst: np.ndarray
    max_drawdown: np.ndarray
    skewness: np.ndarray


def descriptive_stats(panel: ReturnPanel) -> DescriptiveStats:
    """Best and worst returns, maximum drawdown and sample skewness per asset.

    Skewness is the uncorrected ratio ``m3 / m2^1.5`` of central moments.
    """
    if panel.T < 3:
        raise ModelError("need at least 3 observations")
    y = panel.data
    return DescriptiveStats(
        labels=panel.labels,
        best=y.max(axis=0),
        worst=y.min(axis=0),
        max_drawdown=max_drawdown(y),
        skewness=np.atleast_1d(skew(y, axis=0, bias=True)),
    )


def expected_drawdown(mu_tilde, sigma_tilde, dt: float, tau: float):
    """Jump size exceeded once every ``tau`` years on average: ``mu_tilde + Phi^-1(dt / tau) sigma_tilde``."""
    if not (dt > 0 and tau > 0 and dt < tau):
        raise ModelError(f"need 0 < dt < tau, got dt={dt}, tau={tau}")
    return np.asarray(mu_tilde) + ndtri(dt / tau) * np.asarray(sigma_tilde)


# --- backtest -------------------------------------------------------------------


@dataclass(frozen=True)
class JumpParams:
    """Per-period jump probability, mean and covariance."""

    pi: float
    mu_tilde: np.ndarray
    sigma_tilde: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu_tilde", np.atleast_1d(np.asarray(self.mu_tilde, dtype=float)))
        object.__setattr__(self, "sigma_tilde", np.atleast_2d(np.asarray(self.sigma_tilde, dtype=float)))
        if not 0.0 <= self.pi < 1.0:
            raise ModelError(f"jump probability must lie in [0, 1), got {self.pi}")

    @classmethod
    def from_model(cls, model: MixtureModel) -> "JumpParams":
        return cls(model.lam, model.mu_tilde, model.sigma_tilde)


@dataclass(frozen=True)
class BacktestConfig:
    """Backtest settings.

    ``window`` and ``rebalance`` are in periods of the panel. ``budgets``
    defaults to equal risk contributions. The risk measure of the
    allocation is evaluated over one holding period.
    """

    window: int = 52
    rebalance: int = 4
    measure: RiskMeasure = RiskMeasure.VOLATILITY
    budgets: Optional[RiskBudget] = None
    alpha: float = 0.95
    mu_convention: str = "zero"
    estimator: str = "rolling_gaussian"
    pi_star: float = DEFAULT_PI_STAR

    def __post_init__(self):
        object.__setattr__(self, "measure", RiskMeasure.parse(self.measure))
        if self.rebalance < 1:
            raise ModelError("rebalance frequency must be at least 1")
        if self.window < 2:
            raise ModelError("window must be at least 2")
        if self.mu_convention not in MU_CONVENTIONS:
            raise ModelError(f"mu convention must be one of {MU_CONVENTIONS}")
        if self.estimator not in ESTIMATORS:
            raise ModelError(f"estimator must be one of {ESTIMATORS}")
        if not 0.0 < self.alpha < 1.0:
            raise ModelError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class BacktestResult:
    """Outcome of :func:`run_backtest`.

    ``rebalance_dates`` are row indices of the panel: weights decided at
    ``t`` use returns up to ``t - 1`` and first earn the return of row ``t``.
    ``holdings`` are the drifted weights at the start of every period from
    row ``window`` on, aligned with ``returns`` and ``nav``.
    """

    rebalance_dates: np.ndarray
    weights: np.ndarray
    turnover_events: np.ndarray
    holdings: np.ndarray
    returns: np.ndarray
    nav: np.ndarray
    cumulative_turnover: np.ndarray
    turnover: float
    incidents: tuple
    summary: dict = field(default_factory=dict)
    dates: Optional[tuple] = None


class _Estimator:
    """Normal-regime and jump parameters from data through ``t - 1``."""

    def __init__(self, panel, config, jumps):
        self.panel = panel
        self.config = config
        self.jumps = jumps
        self.filtered = None
        self.previous = None
        n = panel.n
        if config.estimator != "rolling_gaussian":
            if jumps is None:
                raise ModelError(f"estimator {config.estimator!r} needs jump parameters")
            if jumps.mu_tilde.shape != (n,) or jumps.sigma_tilde.shape != (n, n):
                raise ModelError("jump parameters do not match the panel dimension")
        if config.estimator == "filtering":
            self.filtered = filtering_estimate(
                panel, jumps.pi, jumps.mu_tilde, jumps.sigma_tilde, config.pi_star, config.window
            )

    def period_model(self, t: int) -> MixtureModel:
        cfg = self.config
        dt = self.panel.dt
        y = self.panel.data[t - cfg.window: t]
        if cfg.estimator == "rolling_gaussian":
            m = y.mean(axis=0)
            d = y - m
            model = MixtureModel.gaussian(m, d.T @ d / cfg.window)
        elif cfg.estimator == "filtering":
            f = self.filtered
            model = MixtureModel(
                self.jumps.pi, f.mu[t - 1] * dt, f.sigma[t - 1] * dt,
                self.jumps.mu_tilde, self.jumps.sigma_tilde,
            )
        else:
            sub = ReturnPanel(y, dt=dt)
            fit = constrained_ml_fit(
                sub,
                self.jumps.pi,
                ConstraintSet(fixed_jump=(self.jumps.mu_tilde, self.jumps.sigma_tilde)),
                start=self.previous,
            )
            self.previous = fit.model
            model = to_period(fit.model, dt)
        if cfg.mu_convention == "zero":
            model = model.with_zero_mean()
        return model


def run_backtest(panel: ReturnPanel, config: BacktestConfig = BacktestConfig(),
                 jump_params: Optional[JumpParams] = None) -> BacktestResult:
    """Out-of-sample risk-budgeting backtest.

    At every rebalance date the configured estimator is run on the window
    ending the period before, the risk-budgeting portfolio is solved, and
    the weights then drift with asset returns until the next rebalance. A
    failure at a date keeps the previous weights and is logged in
    ``incidents``.
    """
    T, n = panel.T, panel.n
    w = config.window
    if w <= n:
        raise ModelError(f"window ({w}) must exceed the number of assets ({n})")
    if T <= w:
        raise ModelError(f"panel has {T} rows; need more than the window ({w})")
    budgets = config.budgets or RiskBudget.equal(n)
    if budgets.n != n:
        raise ModelError(f"{budgets.n} budgets for {n} assets")
    est = _Estimator(panel, config, jump_params)
    y = panel.data

    dates = np.arange(w, T, config.rebalance)
    weights = np.empty((dates.size, n))
    turn = np.zeros(dates.size)
    holdings = np.empty((T - w, n))
    port = np.empty(T - w)
    cum_turn = np.empty(T - w)
    incidents = []

    current = None
    total = 0.0
    k = 0
    for s, t in enumerate(range(w, T)):
        if k < dates.size and t == dates[k]:
            try:
                model = est.period_model(t)
                target = solve_rb(model, budgets, config.alpha, config.measure).weights
            except (SkewParityError, ArithmeticError, np.linalg.LinAlgError) as exc:
                incidents.append((int(t), type(exc).__name__, str(exc)))
                target = current if current is not None else np.full(n, 1.0 / n)
            target = np.array(target, dtype=float)
            if current is not None:
                turn[k] = np.abs(target - current).sum()
                total += turn[k]
            current = target
            weights[k] = current
            k += 1
        holdings[s] = current
        r = float(current @ y[t])
        port[s] = r
        cum_turn[s] = total
        grown = current * (1.0 + y[t])
        current = grown / grown.sum() if 1.0 + r > 0.0 else current

    nav = np.cumprod(1.0 + port)
    years = (T - w) * panel.dt
    turnover = total / years
    periods_per_year = 1.0 / panel.dt
    vol = float(port.std(ddof=1) * math.sqrt(periods_per_year)) if port.size > 1 else math.nan
    mean = float(port.mean() * periods_per_year)
    summary = {
        "annual_return": mean,
        "volatility": vol,
        "sharpe": mean / vol if vol and vol > 0 else math.nan,
        "max_drawdown": float(max_drawdown(port)[0]),
        "skewness": float(skew(port, bias=True)) if port.size > 2 else math.nan,
        "turnover": turnover,
        "final_nav": float(nav[-1]),
        "incidents": len(incidents),
    }
    for arr in (dates, weights, turn, holdings, port, nav, cum_turn):
        arr.setflags(write=False)
    out_dates = None if panel.dates is None else panel.dates[w:]
    return BacktestResult(
        rebalance_dates=dates,
        weights=weights,
        turnover_events=turn,
        holdings=holdings,
        returns=port,
        nav=nav,
        cumulative_turnover=cum_turn,
        turnover=turnover,
        incidents=tuple(incidents),
        summary=summary,
        dates=out_dates,
    )

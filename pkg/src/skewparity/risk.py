"""Value-at-risk, expected shortfall and Euler risk contributions.

Losses are positive numbers: ``L(x) = -R(x)``. All outputs are fractions of
portfolio value. Three risk measures are supported: the volatility of the
normal regime, the Gaussian expected shortfall (the mixture with the jump
probability set to zero) and the expected shortfall of the full mixture.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from ._backend import kernels
from .errors import ModelError
from .mixture import MixtureModel, PortfolioDistribution, _weights


class RiskMeasure(enum.Enum):
    VOLATILITY = "volatility"
    GAUSSIAN_ES = "gaussian_es"
    MIXTURE_ES = "mixture_es"

    @classmethod
    def parse(cls, value) -> "RiskMeasure":
        """Accept a member, its value, or the CLI aliases ``vol``/``ges``/``mes``."""
        if isinstance(value, cls):
            return value
        aliases = {"vol": cls.VOLATILITY, "ges": cls.GAUSSIAN_ES, "mes": cls.MIXTURE_ES}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def uses_alpha(self) -> bool:
        return self is not RiskMeasure.VOLATILITY


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ModelError(f"confidence level must lie in (0, 1), got {alpha}")


def _check_dist(dist: PortfolioDistribution):
    for pi, _, sigma in dist.regimes():
        if sigma <= 0.0:
            raise ModelError("degenerate regime: zero volatility with positive probability")


def value_at_risk(dist: PortfolioDistribution, alpha: float) -> float:
    """Loss quantile at level ``alpha`` of the mixture, by bisection."""
    _check_alpha(alpha)
    _check_dist(dist)
    v = kernels.mixture_var(alpha, dist.pi1, dist.mu1, dist.sigma1, dist.pi2, dist.mu2, dist.sigma2)
    if math.isnan(v):
        raise ArithmeticError("could not bracket the value-at-risk within 60 standard deviations")
    return v


def loss_cdf(dist: PortfolioDistribution, v: float) -> float:
    """``P(L <= v)`` for the mixture loss."""
    return kernels.loss_cdf(v, dist.pi1, dist.mu1, dist.sigma1, dist.pi2, dist.mu2, dist.sigma2)


def expected_shortfall(dist: PortfolioDistribution, alpha: float) -> float:
    """Average loss beyond the value-at-risk at level ``alpha``."""
    v = value_at_risk(dist, alpha)
    return kernels.mixture_es(alpha, v, dist.pi1, dist.mu1, dist.sigma1, dist.pi2, dist.mu2, dist.sigma2)


def gaussian_es(mean: float, vol: float, alpha: float) -> float:
    """Closed-form expected shortfall of a Gaussian return ``N(mean, vol^2)``."""
    _check_alpha(alpha)
    return -mean + vol * kernels.norm_pdf(float(ndtri(alpha))) / (1.0 - alpha)


def _es_value_grad(model: MixtureModel, x: np.ndarray, alpha: float, lam: float):
    s1x = np.ascontiguousarray(model.sigma @ x)
    s2x = np.ascontiguousarray(model.sigma2 @ x)
    grad = np.empty(model.n)
    es, v = kernels.es_value_grad(
        alpha,
        lam,
        np.ascontiguousarray(x),
        np.ascontiguousarray(model.mu),
        np.ascontiguousarray(model.mu_tilde),
        s1x,
        s2x,
        grad,
    )
    if math.isnan(es):
        if (1.0 - lam > 0.0 and x @ s1x <= 0.0) or (lam > 0.0 and x @ s2x <= 0.0):
            raise ModelError("portfolio volatility is zero in a regime with positive probability")
        raise ArithmeticError("expected shortfall gradient is undefined at this point")
    return es, v, grad


def es_gradient(model: MixtureModel, x, alpha: float) -> np.ndarray:
    """Gradient of the mixture expected shortfall: the marginal risks."""
    _check_alpha(alpha)
    x = _weights(model, x).astype(float)
    return _es_value_grad(model, x, alpha, model.lam)[2]


def risk_value_grad(model: MixtureModel, x, alpha: Optional[float], measure) -> tuple:
    """Total risk and its gradient for one of the supported measures.

    Returns ``(risk, gradient, var)``; ``var`` is None for volatility.
    """
    measure = RiskMeasure.parse(measure)
    x = _weights(model, x).astype(float)
    if measure is RiskMeasure.VOLATILITY:
        sx = model.sigma @ x
        vol = math.sqrt(max(float(x @ sx), 0.0))
        if vol <= 0.0:
            raise ModelError("portfolio volatility is zero")
        return vol, sx / vol, None
    _check_alpha(alpha)
    lam = model.lam if measure is RiskMeasure.MIXTURE_ES else 0.0
    es, v, grad = _es_value_grad(model, x, alpha, lam)
    return es, grad, v


def risk_measure(model: MixtureModel, x, alpha: Optional[float], measure) -> float:
    return risk_value_grad(model, x, alpha, measure)[0]


@dataclass(frozen=True)
class RiskDecomposition:
    """Euler decomposition of a portfolio's risk.

    ``risk`` is the expected shortfall for the ES measures and the volatility
    otherwise; ``value_at_risk`` is None for volatility.
    """

    measure: RiskMeasure
    alpha: Optional[float]
    weights: np.ndarray
    risk: float
    value_at_risk: Optional[float]
    marginal: np.ndarray
    contributions: np.ndarray
    relative: np.ndarray

    @property
    def expected_shortfall(self) -> Optional[float]:
        return None if self.measure is RiskMeasure.VOLATILITY else self.risk


def risk_contributions(model: MixtureModel, x, alpha: Optional[float] = 0.95,
                       measure=RiskMeasure.MIXTURE_ES) -> RiskDecomposition:
    """Marginal risks ``MR_i``, contributions ``x_i MR_i`` and their shares."""
    measure = RiskMeasure.parse(measure)
    x = _weights(model, x).astype(float)
    risk, grad, v = risk_value_grad(model, x, alpha, measure)
    rc = x * grad
    for arr in (x, grad, rc):
        arr.setflags(write=False)
    rel = rc / risk
    rel.setflags(write=False)
    return RiskDecomposition(
        measure=measure,
        alpha=alpha if measure.uses_alpha else None,
        weights=x,
        risk=risk,
        value_at_risk=v,
        marginal=grad,
        contributions=rc,
        relative=rel,
    )

"""Two-regime Gaussian mixture model of asset returns.

Returns over one holding period are drawn from the normal regime
``N(mu, Sigma)`` with probability ``1 - lam`` and from the jump regime
``N(mu + mu_tilde, Sigma + Sigma_tilde)`` with probability ``lam``. A
portfolio ``x`` then has a univariate two-component mixture return, which is
what every closed-form moment, density and risk computation works on.

Parameters are stored per holding period. :func:`to_period` converts a model
whose normal-regime parameters are annual into per-period units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ModelError, UndefinedSkewness
from .panel import ReturnPanel

# relative floor for the smallest eigenvalue of a PSD matrix
PSD_TOL = 1e-10
# below this the variance is treated as zero
VARIANCE_FLOOR = 1e-300


def _as_vector(name, value, n=None):
    v = np.array(value, dtype=float).reshape(-1)
    if n is not None and v.shape[0] != n:
        raise ModelError(f"{name} has length {v.shape[0]}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ModelError(f"{name} has non-finite entries")
    v.setflags(write=False)
    return v


def _as_matrix(name, value, n):
    m = np.array(value, dtype=float)
    if m.ndim == 0 or m.size == 1:
        m = m.reshape(1, 1)
    if m.shape != (n, n):
        raise ModelError(f"{name} has shape {m.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(m)):
        raise ModelError(f"{name} has non-finite entries")
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-15 * max(1.0, np.abs(m).max())):
        raise ModelError(f"{name} is not symmetric")
    m = 0.5 * (m + m.T)
    m.setflags(write=False)
    return m


def check_psd(name, m):
    """Raise :class:`ModelError` unless ``m`` is positive semi-definite."""
    eig = np.linalg.eigvalsh(m)
    top = max(eig[-1], 0.0)
    if eig[0] < -PSD_TOL * top or (top == 0.0 and eig[0] < 0.0):
        raise ModelError(f"{name} is not positive semi-definite (smallest eigenvalue {eig[0]:.3g})")


def covariance_from(vols, corr=None):
    """Covariance matrix from volatilities and a correlation matrix."""
    vols = np.atleast_1d(np.asarray(vols, dtype=float))
    if corr is None:
        corr = np.eye(vols.size)
    corr = np.asarray(corr, dtype=float)
    return corr * np.outer(vols, vols)


@dataclass(frozen=True)
class MixtureModel:
    """Parameters ``(lam, mu, sigma, mu_tilde, sigma_tilde)`` of the return model.

    ``lam`` is the probability of a jump during one holding period, ``mu`` and
    ``sigma`` describe the normal regime, ``mu_tilde`` and ``sigma_tilde`` the
    jump amplitude. Arrays are copied and frozen at construction.
    """

    lam: float
    mu: np.ndarray
    sigma: np.ndarray
    mu_tilde: np.ndarray
    sigma_tilde: np.ndarray

    def __post_init__(self):
        lam = float(self.lam)
        if not 0.0 <= lam <= 1.0:
            raise ModelError(f"jump probability must lie in [0, 1], got {lam}")
        mu = _as_vector("mu", self.mu)
        n = mu.shape[0]
        sigma = _as_matrix("sigma", self.sigma, n)
        mu_tilde = _as_vector("mu_tilde", self.mu_tilde, n)
        sigma_tilde = _as_matrix("sigma_tilde", self.sigma_tilde, n)
        check_psd("sigma", sigma)
        check_psd("sigma_tilde", sigma_tilde)
        eig = np.linalg.eigvalsh(sigma + sigma_tilde)
        if not eig[0] > 1e-14 * max(eig[-1], 0.0) or eig[-1] <= 0.0:
            raise ModelError("sigma + sigma_tilde must be positive definite")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu_tilde", mu_tilde)
        object.__setattr__(self, "sigma_tilde", sigma_tilde)

    @classmethod
    def from_volatilities(cls, lam, mu, vols, corr, mu_tilde, vols_tilde, corr_tilde=None):
        """Build a model from volatilities and correlation matrices."""
        return cls(
            lam,
            mu,
            covariance_from(vols, corr),
            mu_tilde,
            covariance_from(vols_tilde, corr_tilde),
        )

    @classmethod
    def gaussian(cls, mu, sigma):
        """A model without jumps."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return cls(0.0, mu, sigma, np.zeros_like(mu), np.zeros((mu.size, mu.size)))

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def mu2(self) -> np.ndarray:
        """Mean of the jump regime."""
        return self.mu + self.mu_tilde

    @property
    def sigma2(self) -> np.ndarray:
        """Covariance of the jump regime."""
        return self.sigma + self.sigma_tilde

    def with_lambda(self, lam: float) -> "MixtureModel":
        return replace(self, lam=lam)

    def with_zero_mean(self) -> "MixtureModel":
        """Same model with the normal-regime expected returns set to zero."""
        return replace(self, mu=np.zeros(self.n))

    def without_jumps(self) -> "MixtureModel":
        return replace(self, lam=0.0)


def to_period(model: MixtureModel, dt: float, scale_lambda: bool = False) -> MixtureModel:
    """Scale the normal-regime parameters of ``model`` to a holding period ``dt``.

    ``mu`` and ``sigma`` are multiplied by ``dt``; the jump amplitude is per
    period already. With ``scale_lambda`` the jump probability is treated as
    an annual intensity and multiplied by ``dt`` as well.
    """
    if not dt > 0:
        raise ModelError(f"dt must be positive, got {dt}")
    lam = model.lam * dt if scale_lambda else model.lam
    return MixtureModel(lam, model.mu * dt, model.sigma * dt, model.mu_tilde, model.sigma_tilde)


@dataclass(frozen=True)
class PortfolioDistribution:
    """Univariate two-component normal mixture of a portfolio return."""

    pi1: float
    mu1: float
    sigma1: float
    pi2: float
    mu2: float
    sigma2: float

    def __post_init__(self):
        for name in ("pi1", "mu1", "sigma1", "pi2", "mu2", "sigma2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ModelError(f"{name} is not finite")
            object.__setattr__(self, name, value)
        if not (0.0 <= self.pi1 <= 1.0 and 0.0 <= self.pi2 <= 1.0):
            raise ModelError("regime probabilities must lie in [0, 1]")
        if abs(self.pi1 + self.pi2 - 1.0) > 1e-12:
            raise ModelError(f"regime probabilities sum to {self.pi1 + self.pi2}, not 1")
        if self.sigma1 < 0.0 or self.sigma2 < 0.0:
            raise ModelError("regime volatilities must be nonnegative")

    @property
    def lam(self) -> float:
        return self.pi2

    def regimes(self):
        """``(pi, mu, sigma)`` triples with positive weight."""
        out = []
        if self.pi1 > 0.0:
            out.append((self.pi1, self.mu1, self.sigma1))
        if self.pi2 > 0.0:
            out.append((self.pi2, self.mu2, self.sigma2))
        return out


def _quad(name, x, m):
    q = float(x @ m @ x)
    scale = float(np.abs(x) @ np.abs(m) @ np.abs(x))
    if q < 0.0:
        if q < -1e-12 * scale:
            raise ModelError(f"negative quadratic form in {name}: {q:.3g}")
        q = 0.0
    return q


def _weights(model, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.n:
        raise ModelError(f"weights have length {x.shape[0]}, model has {model.n} assets")
    return x


def portfolio_distribution(model: MixtureModel, x) -> PortfolioDistribution:
    """Return distribution of portfolio ``x`` under ``model``."""
    x = _weights(model, x)
    m1 = float(x @ model.mu)
    jump_mean = float(x @ model.mu_tilde)
    q1 = _quad("sigma", x, model.sigma)
    qj = _quad("sigma_tilde", x, model.sigma_tilde)
    return PortfolioDistribution(
        1.0 - model.lam,
        m1,
        math.sqrt(q1),
        model.lam,
        m1 + jump_mean,
        math.sqrt(q1 + qj),
    )


def mixture_density(dist: PortfolioDistribution, y):
    """Density of the portfolio return at ``y`` (scalar or array)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for pi, mu, sigma in dist.regimes():
        if sigma <= 0.0:
            raise ModelError("degenerate regime: zero volatility with positive probability")
        z = (y - mu) / sigma
        out = out + pi * np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return out if out.ndim else float(out)


class Moments(NamedTuple):
    mean: float
    variance: float
    skewness: float


def _skewness(pi1, pi2, dmu, s1sq, s2sq):
    # dmu = mu1 - mu2
    variance = pi1 * s1sq + pi2 * s2sq + pi1 * pi2 * dmu * dmu
    if not variance >= VARIANCE_FLOOR:
        raise UndefinedSkewness("variance is zero; skewness is undefined")
    third = pi1 * pi2 * ((pi2 - pi1) * dmu ** 3 + 3.0 * dmu * (s1sq - s2sq))
    return variance, third / variance ** 1.5


def mixture_moments(dist: PortfolioDistribution) -> Moments:
    """Mean, variance and skewness of a two-component normal mixture."""
    mean = dist.pi1 * dist.mu1 + dist.pi2 * dist.mu2
    variance, skew = _skewness(
        dist.pi1, dist.pi2, dist.mu1 - dist.mu2, dist.sigma1 ** 2, dist.sigma2 ** 2
    )
    return Moments(mean, variance, skew)


def portfolio_skewness(model: MixtureModel, x) -> float:
    """Skewness of the portfolio return from ``x'mu_tilde``, ``x'Sigma x``, ``x'Sigma_tilde x``."""
    x = _weights(model, x)
    lam = model.lam
    jump_mean = float(x @ model.mu_tilde)
    q1 = _quad("sigma", x, model.sigma)
    qj = _quad("sigma_tilde", x, model.sigma_tilde)
    p = lam - lam * lam
    denom = q1 + lam * qj + p * jump_mean ** 2
    if not denom >= VARIANCE_FLOOR:
        raise UndefinedSkewness("variance is zero; skewness is undefined")
    return p * ((1.0 - 2.0 * lam) * jump_mean ** 3 + 3.0 * jump_mean * qj) / denom ** 1.5


def limit_skewness_zero_vol(model: MixtureModel, x) -> float:
    """Limit of the portfolio skewness as the normal-regime volatility vanishes."""
    x = _weights(model, x)
    lam = model.lam
    d_mu = float(x @ model.mu_tilde)
    d_var = _quad("sigma_tilde", x, model.sigma_tilde)
    p = lam - lam * lam
    denom = p * d_mu ** 2 + lam * d_var
    if not denom > 0.0:
        raise UndefinedSkewness("jump mean and jump variance are both zero; limit undefined")
    return d_mu * p * ((1.0 - 2.0 * lam) * d_mu ** 2 + 3.0 * d_var) / denom ** 1.5


def _cholesky(m):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        n = m.shape[0]
        jitter = 1e-12 * np.trace(m) / n
        try:
            return np.linalg.cholesky(m + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            # zero or numerically indefinite: symmetric square root
            w, v = np.linalg.eigh(m)
            return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_regimes(model: MixtureModel, periods: int, seed: Optional[int] = None):
    """Draw ``periods`` return vectors and the regime indicator of each draw.

    Returns ``(data, jumps)`` where ``data`` has shape ``(periods, n)`` and
    ``jumps`` is a boolean vector, True for jump-regime draws.
    """
    if periods < 1:
        raise ModelError("periods must be at least 1")
    rng = np.random.default_rng(seed)
    jumps = rng.random(periods) < model.lam
    z = rng.standard_normal((periods, model.n))
    l1 = _cholesky(model.sigma)
    l2 = _cholesky(model.sigma2)
    data = np.where(jumps[:, None], model.mu2 + z @ l2.T, model.mu + z @ l1.T)
    return data, jumps


def simulate_returns(
    model: MixtureModel,
    periods: int,
    seed: Optional[int] = None,
    dt: float = 1.0,
    labels: Sequence[str] = (),
) -> ReturnPanel:
    """Simulated return panel; reproducible for a fixed ``seed``."""
    data, _ = simulate_regimes(model, periods, seed)
    return ReturnPanel(data, dt=dt, labels=tuple(labels))

"""Maximum-likelihood estimation of the two-regime model.

Period returns ``y_t`` observed every ``dt`` years are modelled as

    (1 - pi) N(mu dt, Sigma dt) + pi N(mu dt + mu_tilde, Sigma dt + Sigma_tilde)

so ``mu`` and ``Sigma`` are annual while the jump amplitude is expressed per
holding period. With ``dt = 1`` this is the plain two-component mixture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize

from .errors import ModelError, RegimeCollapseError, SingularCovarianceError
from .mixture import MixtureModel, to_period
from .panel import ReturnPanel

_LOG_2PI = math.log(2.0 * math.pi)
COLLAPSE_MASS = 1e-8


def _factor(cov, regime):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            f"covariance of regime {regime} is singular or not positive definite", regime=regime
        ) from None


def _gauss_logpdf(y, mean, chol):
    """Row-wise log density of ``N(mean, chol chol')``."""
    z = np.linalg.solve(chol, (y - mean).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (y.shape[1] * _LOG_2PI + logdet + np.einsum("ij,ij->j", z, z))


def _component_logpdfs(y, pi, m1, c1, m2, c2):
    """``log((1-pi) f1)`` and ``log(pi f2)`` per row; absent regimes give -inf."""
    T = y.shape[0]
    if pi < 1.0:
        l1 = math.log1p(-pi) + _gauss_logpdf(y, m1, _factor(c1, 1))
    else:
        l1 = np.full(T, -np.inf)
    if pi > 0.0:
        l2 = math.log(pi) + _gauss_logpdf(y, m2, _factor(c2, 2))
    else:
        l2 = np.full(T, -np.inf)
    return l1, l2


def log_likelihood(panel: ReturnPanel, model: MixtureModel) -> float:
    """Log-likelihood of the panel under the model at the panel frequency."""
    if panel.n != model.n:
        raise ModelError(f"panel has {panel.n} assets, model has {model.n}")
    p = to_period(model, panel.dt)
    l1, l2 = _component_logpdfs(panel.data, p.lam, p.mu, p.sigma, p.mu2, p.sigma2)
    return float(np.logaddexp(l1, l2).sum())


# --- EM -----------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    """Settings of :func:`em_fit`.

    ``init`` is ``"quantile"`` (tail split on a Mahalanobis score) or a
    :class:`MixtureModel` used as starting point.
    """

    max_iterations: int = 1000
    loglik_tolerance: float = 1e-8
    ridge: float = 1e-10
    init: Union[str, MixtureModel] = "quantile"
    tail_fraction: float = 0.10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ModelError("max_iterations must be at least 1")
        if not self.loglik_tolerance > 0:
            raise ModelError("loglik_tolerance must be positive")
        if self.ridge < 0:
            raise ModelError("ridge must be nonnegative")
        if isinstance(self.init, str) and self.init != "quantile":
            raise ModelError(f"unknown initialization {self.init!r}")
        if not 0.0 < self.tail_fraction < 1.0:
            raise ModelError("tail_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class FitResult:
    """Fitted model and diagnostics.

    ``loglik`` is the log-likelihood of the returned model; ``posterior`` the
    probability of the jump regime per observation. ``projection_distance``
    is the Frobenius distance removed when projecting ``sigma_tilde`` to the
    PSD cone (zero for constrained fits).
    """

    model: MixtureModel
    loglik: float
    iterations: int
    posterior: np.ndarray
    converged: bool
    loglik_trace: tuple = field(default=())
    projection_distance: float = 0.0


def project_psd(m: np.ndarray):
    """Nearest PSD matrix in Frobenius norm and the distance moved."""
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w[0] >= 0.0:
        return m, 0.0
    clipped = (v * np.clip(w, 0.0, None)) @ v.T
    clipped = 0.5 * (clipped + clipped.T)
    return clipped, float(np.sqrt(np.sum(np.clip(w, None, 0.0) ** 2)))


def _floor_cov(c, ridge):
    """Raise eigenvalues below ``ridge * trace / n``; well-conditioned input is unchanged."""
    n = c.shape[0]
    floor = ridge * np.trace(c) / n
    if floor <= 0.0:
        return c
    w, v = np.linalg.eigh(c)
    if w[0] >= floor:
        return c
    c = (v * np.maximum(w, floor)) @ v.T
    return 0.5 * (c + c.T)


def _weighted_moments(y, w, ridge):
    mass = w.sum()
    m = w @ y / mass
    d = y - m
    c = (d * w[:, None]).T @ d / mass
    return m, _floor_cov(0.5 * (c + c.T), ridge)


def _tail_split(y, fraction):
    """Boolean mask of the ``fraction`` largest Mahalanobis scores."""
    T, n = y.shape
    d = y - y.mean(axis=0)
    s = np.atleast_2d(np.cov(y, rowvar=False, bias=True))
    score = np.einsum("ij,ij->i", d @ np.linalg.pinv(s), d)
    k = min(max(int(math.ceil(fraction * T)), 1), T - 1)
    order = np.argsort(score, kind="stable")
    mask = np.zeros(T, dtype=bool)
    mask[order[T - k:]] = True
    return mask


def _e_step(y, params):
    pi, m1, c1, m2, c2 = params
    l1, l2 = _component_logpdfs(y, pi, m1, c1, m2, c2)
    lse = np.logaddexp(l1, l2)
    post = np.exp(l2 - lse)
    return float(lse.sum()), post


def _m_step(y, post, ridge):
    w2 = post
    w1 = 1.0 - post
    mass1, mass2 = w1.sum(), w2.sum()
    if mass1 < COLLAPSE_MASS or mass2 < COLLAPSE_MASS:
        raise RegimeCollapseError(
            "the posterior mass of one regime vanished; "
            "try another initialization or a single-regime model"
        )
    m1, c1 = _weighted_moments(y, w1, ridge)
    m2, c2 = _weighted_moments(y, w2, ridge)
    return mass2 / y.shape[0], m1, c1, m2, c2


def em_fit(panel: ReturnPanel, config: EmConfig = EmConfig()) -> FitResult:
    """Unconstrained two-regime fit by expectation-maximization.

    Regime 1 of the result is the more probable component. The normal
    regime is rescaled to annual units with ``panel.dt``; the jump
    amplitude is the per-period difference of the two regimes.

    Raises
    ------
    RegimeCollapseError
        One regime lost all posterior mass.
    SingularCovarianceError
        A regime covariance cannot be factorized.
    """
    y = panel.data
    T, n = y.shape
    if T <= n:
        raise ModelError(f"need more observations than assets (T={T}, n={n})")
    if isinstance(config.init, MixtureModel):
        p = to_period(config.init, panel.dt)
        params = (p.lam, p.mu, p.sigma, p.mu2, p.sigma2)
    else:
        mask = _tail_split(y, config.tail_fraction)
        params = _m_step(y, mask.astype(float), config.ridge)

    trace = []
    converged = False
    ll, post = _e_step(y, params)
    trace.append(ll)
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        params = _m_step(y, post, config.ridge)
        ll, post = _e_step(y, params)
        trace.append(ll)
        if abs(trace[-1] - trace[-2]) < config.loglik_tolerance:
            converged = True
            break

    pi, m1, c1, m2, c2 = params
    if pi > 0.5:
        pi, m1, c1, m2, c2 = 1.0 - pi, m2, c2, m1, c1
        post = 1.0 - post
    sigma_tilde, dist = project_psd(c2 - c1)
    model = MixtureModel(pi, m1 / panel.dt, c1 / panel.dt, m2 - m1, sigma_tilde)
    post.setflags(write=False)
    return FitResult(
        model=model,
        loglik=log_likelihood(panel, model),
        iterations=iterations,
        posterior=post,
        converged=converged,
        loglik_trace=tuple(trace),
        projection_distance=dist,
    )


# --- constrained maximum likelihood ---------------------------------------------


@dataclass(frozen=True)
class ConstraintSet:
    """Structural restrictions for :func:`constrained_ml_fit`.

    Parameters
    ----------
    no_jump_assets : sequence of int
        Assets whose jump mean, jump volatility and jump correlations are
        pinned to zero.
    fixed_jump : (mu_tilde, sigma_tilde), optional
        Hold the whole jump component at these values and fit only the
        normal regime.
    """

    no_jump_assets: tuple = ()
    fixed_jump: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "no_jump_assets", tuple(sorted(set(int(i) for i in self.no_jump_assets))))
        if self.fixed_jump is not None:
            mt, st = self.fixed_jump
            mt = np.atleast_1d(np.asarray(mt, dtype=float))
            st = np.atleast_2d(np.asarray(st, dtype=float))
            object.__setattr__(self, "fixed_jump", (mt, st))

    def free_jump_assets(self, n: int) -> np.ndarray:
        pinned = set(self.no_jump_assets)
        if any(i < 0 or i >= n for i in pinned):
            raise ModelError(f"constraint refers to an asset outside 0..{n - 1}")
        return np.array([i for i in range(n) if i not in pinned], dtype=int)


@dataclass(frozen=True)
class MlConfig:
    max_evaluations: int = 100_000
    objective_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-9
    tail_fraction: float = 0.10


def _chol_from(theta, n):
    """Lower-triangular factor from log-Cholesky coordinates."""
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = theta
    d = np.diag_indices(n)
    L[d] = np.exp(L[d])
    return L


def _chol_to(c):
    L = np.linalg.cholesky(c)
    L = L.copy()
    d = np.diag_indices(c.shape[0])
    L[d] = np.log(L[d])
    return L[np.tril_indices(c.shape[0])]


def _chol_grad(G, L):
    """Gradient with respect to log-Cholesky coordinates of ``f(L L')``, given
    the symmetric gradient ``G`` with respect to the covariance."""
    dL = 2.0 * G @ L
    d = np.diag_indices(L.shape[0])
    dL[d] *= L[d]
    return dL[np.tril_indices(L.shape[0])]


class _MixtureObjective:
    """Negative mean log-likelihood and gradient on standardized data."""

    def __init__(self, z, pi, free, fixed_jump):
        self.z = z
        self.T, self.n = z.shape
        self.pi = pi
        self.free = free
        self.k = free.size
        self.fixed_jump = fixed_jump
        n, k = self.n, self.k
        self.sizes = [n, n * (n + 1) // 2]
        if fixed_jump is None:
            self.sizes += [k, k * (k + 1) // 2]

    def unpack(self, theta):
        n, k = self.n, self.k
        parts = np.split(theta, np.cumsum(self.sizes)[:-1])
        m1 = parts[0]
        L1 = _chol_from(parts[1], n)
        if self.fixed_jump is None:
            mt = np.zeros(n)
            mt[self.free] = parts[2]
            Lt = _chol_from(parts[3], k)
            st = np.zeros((n, n))
            st[np.ix_(self.free, self.free)] = Lt @ Lt.T
        else:
            mt, st = self.fixed_jump
            Lt = None
        return m1, L1, mt, Lt, st

    def __call__(self, theta):
        z, pi = self.z, self.pi
        m1, L1, mt, Lt, st = self.unpack(theta)
        c1 = L1 @ L1.T
        c2 = c1 + st
        m2 = m1 + mt
        try:
            l1, l2 = _component_logpdfs(z, pi, m1, c1, m2, c2)
        except SingularCovarianceError:
            return np.inf, np.zeros_like(theta)
        lse = np.logaddexp(l1, l2)
        w2 = np.exp(l2 - lse)
        w1 = 1.0 - w2
        grads = []
        gm, gc = [], []
        for w, m, c in ((w1, m1, c1), (w2, m2, c2)):
            ci = np.linalg.inv(c)
            d = (z - m) @ ci
            gm.append(w @ d)
            outer = (d * w[:, None]).T @ d
            gc.append(0.5 * (outer - w.sum() * ci))
        grads.append(gm[0] + gm[1])
        grads.append(_chol_grad(gc[0] + gc[1], L1))
        if self.fixed_jump is None:
            grads.append(gm[1][self.free])
            g2 = gc[1][np.ix_(self.free, self.free)]
            grads.append(_chol_grad(0.5 * (g2 + g2.T), Lt))
        g = np.concatenate(grads)
        return -float(lse.sum()) / self.T, -g / self.T


def constrained_ml_fit(
    panel: ReturnPanel,
    fixed_pi: float,
    constraints: ConstraintSet = ConstraintSet(),
    config: MlConfig = MlConfig(),
    annual_intensity: bool = False,
    start: Optional[MixtureModel] = None,
) -> FitResult:
    """Maximum likelihood with a fixed jump probability and pinned jump entries.

    Parameters
    ----------
    panel : ReturnPanel
    fixed_pi : float
        Jump probability per period, or the annual jump intensity when
        ``annual_intensity`` is set (the per-period probability is then
        ``fixed_pi * panel.dt``).
    constraints : ConstraintSet
    start : MixtureModel, optional
        Warm start; the default splits the sample at a Mahalanobis tail.

    Returns
    -------
    FitResult
        ``model.lam`` is the per-period probability. ``converged`` is False
        when the evaluation budget ran out; the best iterate is returned.
    """
    pi = fixed_pi * panel.dt if annual_intensity else fixed_pi
    if not 0.0 < pi < 1.0:
        raise ModelError(f"jump probability must lie in (0, 1), got {pi}")
    y = panel.data
    T, n = y.shape
    if T <= n:
        raise ModelError(f"need more observations than assets (T={T}, n={n})")
    dt = panel.dt
    free = constraints.free_jump_assets(n)
    if constraints.fixed_jump is None and free.size == 0:
        raise ModelError("all jump parameters pinned; fix the jump component instead")

    # standardize columns so the optimizer sees O(1) parameters
    center = y.mean(axis=0)
    scale = y.std(axis=0)
    scale[scale <= 0.0] = 1.0
    z = (y - center) / scale

    fixed_z = None
    if constraints.fixed_jump is not None:
        mt, st = constraints.fixed_jump
        if mt.shape != (n,) or st.shape != (n, n):
            raise ModelError("fixed jump component has the wrong shape")
        fixed_z = (mt / scale, st / np.outer(scale, scale))
    obj = _MixtureObjective(z, pi, free, fixed_z)

    if start is not None:
        p = to_period(start, dt)
        m1 = (p.mu - center) / scale
        c1 = p.sigma / np.outer(scale, scale)
        mt_z = p.mu_tilde / scale
        st_z = p.sigma_tilde / np.outer(scale, scale)
    else:
        mask = _tail_split(z, max(config.tail_fraction, min(0.5, (n + 2) / T)))
        m1, c1 = _weighted_moments(z, (~mask).astype(float), 1e-8)
        m2, c2 = _weighted_moments(z, mask.astype(float), 1e-8)
        mt_z = m2 - m1
        st_z, _ = project_psd(c2 - c1)
    theta = [m1, _chol_to(_floor_cov(c1, 1e-8))]
    if fixed_z is None:
        sub = st_z[np.ix_(free, free)]
        sub = sub + 1e-2 * np.eye(free.size) * max(np.trace(sub) / free.size, 1e-2)
        theta += [mt_z[free], _chol_to(sub)]
    theta0 = np.concatenate(theta)

    res = minimize(
        obj,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxfun": config.max_evaluations,
            "maxiter": config.max_evaluations,
            "ftol": config.objective_tolerance,
            "gtol": config.gradient_tolerance,
            "maxcor": 20,
        },
    )
    m1, L1, mt, _, st = obj.unpack(res.x)
    D = np.outer(scale, scale)
    c1 = (L1 @ L1.T) * D
    mu = (center + scale * m1) / dt
    sigma = c1 / dt
    if fixed_z is None:
        mu_tilde = np.zeros(n)
        mu_tilde[free] = mt[free] * scale[free]
        sigma_tilde = np.zeros((n, n))
        sub = st[np.ix_(free, free)] * D[np.ix_(free, free)]
        sigma_tilde[np.ix_(free, free)] = 0.5 * (sub + sub.T)
    else:
        mu_tilde, sigma_tilde = constraints.fixed_jump
    model = MixtureModel(pi, mu, 0.5 * (sigma + sigma.T), mu_tilde, sigma_tilde)
    p = to_period(model, dt)
    l1, l2 = _component_logpdfs(y, pi, p.mu, p.sigma, p.mu2, p.sigma2)
    lse = np.logaddexp(l1, l2)
    post = np.exp(l2 - lse)
    post.setflags(write=False)
    converged = bool(res.success) or "REL_REDUCTION_OF_F" in str(res.message)
    return FitResult(
        model=model,
        loglik=float(lse.sum()),
        iterations=int(res.nit),
        posterior=post,
        converged=converged,
        loglik_trace=(),
        projection_distance=0.0,
    )


def gaussian_fit(panel: ReturnPanel) -> MixtureModel:
    """Maximum-likelihood Gaussian model (biased covariance), in annual units."""
    y = panel.data
    mu = y.mean(axis=0)
    sigma = np.atleast_2d(np.cov(y, rowvar=False, bias=True))
    return MixtureModel.gaussian(mu / panel.dt, sigma / panel.dt)

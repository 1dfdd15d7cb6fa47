"""Risk-budgeting portfolios and reference allocations.

The risk-budgeting (RB) portfolio with budgets ``b`` is found by minimizing
the convex function ``R(y) - sum_i b_i log(y_i)`` over ``y > 0`` and
normalizing ``x = y / sum(y)``. For the mixture expected shortfall the
solution is only guaranteed when the confidence level clears the bound
computed by :func:`check_existence`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from ._backend import kernels
from .errors import ExistenceError, ModelError, SolverError
from .mixture import MixtureModel
from .risk import RiskDecomposition, RiskMeasure, risk_contributions, risk_value_grad

RB_TOL = 1e-6
MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class RiskBudget:
    """Relative risk budgets: strictly positive, summing to one."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size == 0:
            raise ModelError("empty risk budget")
        if not np.all(np.isfinite(b)) or np.any(b <= 0.0):
            raise ModelError("risk budgets must be strictly positive")
        if abs(b.sum() - 1.0) > 1e-10:
            raise ModelError(f"risk budgets sum to {b.sum()}, not 1")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def equal(cls, n: int) -> "RiskBudget":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, values) -> "RiskBudget":
        v = np.asarray(values, dtype=float)
        return cls(v / v.sum())

    @property
    def n(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class RbSolution:
    weights: np.ndarray
    decomposition: RiskDecomposition
    iterations: int
    max_budget_violation: float
    y: np.ndarray


@dataclass(frozen=True)
class ExistenceReport:
    alpha: float
    alpha_minus: float
    sr1_plus: float
    lam: float
    exists: bool


@dataclass(frozen=True)
class SimplexSolution:
    weights: np.ndarray
    objective: float
    unique: bool
    iterations: int


# --- simplex helpers -------------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = 1}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _projected_descent(fun_grad, x0, max_iter=20_000, tol=1e-13):
    """Projected gradient with Barzilai-Borwein steps and a nonmonotone
    Armijo safeguard, on the unit simplex."""
    x = project_simplex(np.asarray(x0, dtype=float))
    f, g = fun_grad(x)
    step = 1.0 / max(np.abs(g).max(), 1e-12)
    history = [f]
    it = 0
    for it in range(1, max_iter + 1):
        fref = max(history[-10:])
        t = step
        while True:
            xn = project_simplex(x - t * g)
            fn, gn = fun_grad(xn)
            if fn <= fref + 1e-4 * g @ (xn - x) or t < 1e-20:
                break
            t *= 0.5
        s = xn - x
        yk = gn - g
        x, f, g = xn, fn, gn
        history.append(f)
        if np.abs(s).max() < tol:
            break
        sy = s @ yk
        step = (s @ s) / sy if sy > 0 else 1.0 / max(np.abs(g).max(), 1e-12)
        step = min(max(step, 1e-12), 1e12)
    return x, f, it


# --- existence ---------------------------------------------------------------


def max_sharpe_regime1(model: MixtureModel, starts: int = 20, seed: int = 0) -> float:
    """Largest normal-regime Sharpe ratio over long-only portfolios, floored at 0.

    Multi-start projected gradient ascent over the simplex; the interest
    rate is zero.
    """
    mu = model.mu
    sigma = model.sigma
    if np.all(mu <= 0.0):
        return 0.0

    def neg_sharpe(x):
        sx = sigma @ x
        vol = math.sqrt(max(float(x @ sx), 1e-300))
        ret = float(x @ mu)
        return -ret / vol, -(mu / vol - ret * sx / vol ** 3)

    rng = np.random.default_rng(seed)
    candidates = [np.full(model.n, 1.0 / model.n)]
    candidates += list(rng.dirichlet(np.ones(model.n), size=starts - 1))
    best = 0.0
    for x0 in candidates:
        _, f, _ = _projected_descent(neg_sharpe, x0, max_iter=5000, tol=1e-14)
        best = max(best, -f)
    return best


def _alpha_minus_equation(a, lam, sr):
    q = ndtri((a - lam) / (1.0 - lam))
    return (1.0 - lam) / (1.0 - a) * kernels.norm_pdf(q) + lam * q - (1.0 + lam) * sr


def alpha_minus(lam: float, sr1_plus: float, tol: float = 1e-10) -> float:
    """Lowest confidence level for which the ES risk-budgeting portfolio exists.

    Returns ``lam`` when the defining equation has no sign change because its
    left side exceeds the right everywhere, and 1.0 when it stays below.
    """
    if not 0.0 <= lam < 1.0:
        raise ModelError(f"jump probability must lie in [0, 1), got {lam}")
    lo, hi = lam + 1e-9, 1.0 - 1e-12
    glo = _alpha_minus_equation(lo, lam, sr1_plus)
    ghi = _alpha_minus_equation(hi, lam, sr1_plus)
    if glo >= 0.0:
        return lam
    if ghi < 0.0:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _alpha_minus_equation(mid, lam, sr1_plus) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_existence(model: MixtureModel, alpha: float,
                    sr1_plus: Optional[float] = None) -> ExistenceReport:
    """Whether ``alpha >= max(alpha_minus, lam)``; the RB portfolio then exists."""
    if sr1_plus is None:
        sr1_plus = max_sharpe_regime1(model)
    lam = model.lam
    if lam >= 1.0:
        return ExistenceReport(alpha, 1.0, sr1_plus, lam, False)
    am = alpha_minus(lam, sr1_plus)
    return ExistenceReport(alpha, am, sr1_plus, lam, bool(alpha >= max(am, lam)))


# --- risk budgeting ------------------------------------------------------------


class _CoordinateObjective:
    """Partial derivatives of ``R(y)`` with cheap single-coordinate updates."""

    def __init__(self, model, alpha, measure):
        self.measure = measure
        self.alpha = 0.5 if alpha is None else float(alpha)
        self.lam = model.lam if measure is RiskMeasure.MIXTURE_ES else 0.0
        self.sigma = np.ascontiguousarray(model.sigma)
        self.sigma2 = np.ascontiguousarray(model.sigma2)
        self.mu = np.ascontiguousarray(model.mu)
        self.mu_tilde = np.ascontiguousarray(model.mu_tilde)
        self.grad = np.empty(model.n)
        # contiguous columns for the rank-one updates
        self.cols1 = [np.ascontiguousarray(self.sigma[:, i]) for i in range(model.n)]
        self.cols2 = [np.ascontiguousarray(self.sigma2[:, i]) for i in range(model.n)]

    def value_grad(self, y, s1y, s2y):
        if self.measure is RiskMeasure.VOLATILITY:
            vol = math.sqrt(max(float(y @ s1y), 0.0))
            np.divide(s1y, vol, out=self.grad)
            return vol
        es, _ = kernels.es_value_grad(
            self.alpha, self.lam, y, self.mu, self.mu_tilde, s1y, s2y, self.grad
        )
        if math.isnan(es):
            raise SolverError("risk gradient undefined during line search", best=y.copy())
        return es


_ROOT_ERRORS = {
    1: "risk gradient undefined during line search",
    2: "could not bracket coordinate minimizer",
    3: "risk measure does not increase along a coordinate; "
       "the risk-budgeting portfolio may not exist",
}


def _line_search(obj, y, s1y, s2y, i, b_i, scratch):
    """Set ``y[i]`` to the root of ``dR/dy_i - b_i / y_i`` by bisection."""
    status = kernels.coordinate_root(
        obj.measure is RiskMeasure.VOLATILITY, obj.alpha, obj.lam, i, b_i, y,
        obj.mu, obj.mu_tilde, obj.cols1[i], obj.cols2[i], s1y, s2y, scratch[0], scratch[1],
    )
    if status:
        raise SolverError(_ROOT_ERRORS[status], best=y.copy())


def solve_rb(
    model: MixtureModel,
    budgets: RiskBudget,
    alpha: Optional[float] = 0.95,
    measure=RiskMeasure.MIXTURE_ES,
    tol: float = RB_TOL,
    y0=None,
    check: bool = True,
    max_sweeps: int = MAX_SWEEPS,
) -> RbSolution:
    """Risk-budgeting portfolio by cyclic coordinate descent.

    Parameters
    ----------
    model : MixtureModel
        Return model; use ``model.with_zero_mean()`` for the zero expected
        return convention.
    budgets : RiskBudget
        Target relative risk contributions.
    alpha : float
        Confidence level of the expected shortfall measures.
    measure : RiskMeasure or str
        ``volatility``, ``gaussian_es`` or ``mixture_es``.
    tol : float
        Required ``max_i |RC*_i - b_i|``.
    y0 : array_like, optional
        Positive starting point for the unnormalized problem.
    check : bool
        Verify the existence condition first.

    Raises
    ------
    ExistenceError
        ``alpha`` is below ``max(alpha_minus, lam)``.
    SolverError
        The sweeps stagnate before reaching ``tol``.
    """
    measure = RiskMeasure.parse(measure)
    if budgets.n != model.n:
        raise ModelError(f"{budgets.n} budgets for {model.n} assets")
    if check and measure.uses_alpha:
        test_model = model if measure is RiskMeasure.MIXTURE_ES else model.without_jumps()
        report = check_existence(test_model, alpha)
        if not report.exists:
            raise ExistenceError(
                f"alpha={alpha} is below max(alpha_minus={report.alpha_minus:.6f}, "
                f"lambda={report.lam:.6f})",
                report.alpha_minus,
                report.lam,
            )
    b = budgets.b
    if model.n == 1:
        x = np.ones(1)
        dec = risk_contributions(model, x, alpha, measure)
        return RbSolution(x, dec, 0, 0.0, x)

    obj = _CoordinateObjective(model, alpha, measure)
    if y0 is None:
        y = b / np.sqrt(np.diag(model.sigma2))
    else:
        y = np.array(y0, dtype=float)
        if np.any(y <= 0.0):
            raise ModelError("starting point must be strictly positive")
    y = np.ascontiguousarray(y, dtype=float)
    s1y = obj.sigma @ y
    s2y = obj.sigma2 @ y
    r = obj.value_grad(y, s1y, s2y)
    if r > 0.0 and y0 is None:
        y /= r
        s1y = obj.sigma @ y
        s2y = obj.sigma2 @ y
        r = obj.value_grad(y, s1y, s2y)
    f_prev = r - b @ np.log(y)
    violation = math.inf
    best = y.copy()
    scratch = (np.empty(model.n), np.empty(model.n))
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for i in range(model.n):
            _line_search(obj, y, s1y, s2y, i, float(b[i]), scratch)
        # refresh the products to shed accumulated rounding
        s1y = obj.sigma @ y
        s2y = obj.sigma2 @ y
        r = obj.value_grad(y, s1y, s2y)
        f = r - b @ np.log(y)
        violation = float(np.abs(y * obj.grad / r - b).max())
        step = abs(f_prev - f) / max(1.0, abs(f))
        best = y.copy()
        if violation <= tol and step <= 1e-10:
            break
        f_prev = f
    else:
        raise SolverError(
            f"risk budgeting stalled after {max_sweeps} sweeps (violation {violation:.3g})",
            best=best / best.sum(),
        )
    x = y / y.sum()
    dec = risk_contributions(model, x, alpha, measure)
    violation = float(np.abs(dec.relative - b).max())
    if violation > tol:
        raise SolverError(f"budget violation {violation:.3g} exceeds {tol}", best=x)
    x.setflags(write=False)
    return RbSolution(x, dec, sweeps, violation, y)


def solve_erc(model: MixtureModel, alpha: Optional[float] = 0.95,
              measure=RiskMeasure.MIXTURE_ES, **kwargs) -> RbSolution:
    """Equal risk contribution portfolio."""
    return solve_rb(model, RiskBudget.equal(model.n), alpha, measure, **kwargs)


# --- reference portfolios -----------------------------------------------------


def _tangent_min_eig(hess, support):
    """Smallest eigenvalue of ``hess`` on ``{z: sum(z) = 0, z_j = 0 off support}``."""
    k = support.size
    if k < 2:
        return math.inf
    h = hess[np.ix_(support, support)]
    # orthonormal basis of the zero-sum subspace of R^k
    basis = np.linalg.svd(np.eye(k) - np.full((k, k), 1.0 / k))[0][:, : k - 1]
    return float(np.linalg.eigvalsh(basis.T @ h @ basis)[0])


def min_variance(cov, long_only: bool = True) -> SimplexSolution:
    """Minimum-variance portfolio of ``cov`` (a matrix or a model's normal regime).

    ``unique`` is False when the variance is flat along some feasible
    direction at the solution.
    """
    if isinstance(cov, MixtureModel):
        cov = cov.sigma
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    hess = 2.0 * cov
    floor = 1e-12 * max(1.0, float(np.trace(hess)))
    if not long_only:
        ones = np.ones(n)
        w = np.linalg.lstsq(cov, ones, rcond=None)[0]
        w = w / w.sum()
        unique = _tangent_min_eig(hess, np.arange(n)) > floor
        return SimplexSolution(w, float(w @ cov @ w), bool(unique), 1)

    def fun_grad(x):
        cx = cov @ x
        return float(x @ cx), 2.0 * cx

    x, f, it = _projected_descent(fun_grad, np.full(n, 1.0 / n), tol=1e-15)
    # polish on the detected support with the exact equality-constrained solution
    support = np.nonzero(x > 1e-9)[0]
    sub = cov[np.ix_(support, support)]
    w_sub = np.linalg.lstsq(sub, np.ones(support.size), rcond=None)[0]
    if w_sub.sum() > 0:
        w_sub = w_sub / w_sub.sum()
        cand = np.zeros(n)
        cand[support] = w_sub
        if np.all(cand >= 0.0):
            fc = float(cand @ cov @ cand)
            grad = 2.0 * cov @ cand
            mult = grad[support].mean()
            if fc <= f + 1e-15 and np.all(grad >= mult - 1e-12 * max(1.0, abs(mult))):
                x, f = cand, fc
    unique = _tangent_min_eig(hess, np.nonzero(x > 1e-12)[0]) > floor
    return SimplexSolution(x, f, bool(unique), it)


def min_es(model: MixtureModel, alpha: float = 0.99, measure=RiskMeasure.MIXTURE_ES,
           check: bool = True) -> SimplexSolution:
    """Long-only portfolio with the smallest expected shortfall."""
    measure = RiskMeasure.parse(measure)
    if check and measure is RiskMeasure.MIXTURE_ES:
        report = check_existence(model, alpha)
        if not report.exists:
            raise ExistenceError(
                f"alpha={alpha} is below max(alpha_minus={report.alpha_minus:.6f}, "
                f"lambda={report.lam:.6f})",
                report.alpha_minus,
                report.lam,
            )
    if model.n == 1:
        x = np.ones(1)
        return SimplexSolution(x, risk_value_grad(model, x, alpha, measure)[0], True, 0)

    def fun_grad(x):
        r, g, _ = risk_value_grad(model, x, alpha, measure)
        return r, g

    x0 = min_variance(model.sigma2).weights
    x, f, it = _projected_descent(fun_grad, x0, tol=1e-13)
    return SimplexSolution(x, f, True, it)

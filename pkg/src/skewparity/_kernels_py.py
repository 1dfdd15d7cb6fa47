"""Pure-Python implementation of the scalar mixture kernels.

This module mirrors ``_kernels.pyx`` function for function. It is used when
the compiled extension is unavailable, and as the reference the compiled
version is tested against.
"""
import math

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: bisection stops once the bracket is narrower than this (absolute, loss
#: units); 0 runs until the bracket cannot shrink in double precision
VAR_TOL = 0.0


def norm_cdf(z):
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_pdf(z):
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _regime_cdf(v, mu, sigma):
    # P(L <= v) for L ~ N(-mu, sigma^2)
    if sigma > 0.0:
        return norm_cdf((v + mu) / sigma)
    return 1.0 if v + mu >= 0.0 else 0.0


def loss_cdf(v, pi1, mu1, s1, pi2, mu2, s2):
    """Distribution function of the mixture loss ``L = -R`` at ``v``."""
    out = 0.0
    if pi1 > 0.0:
        out += pi1 * _regime_cdf(v, mu1, s1)
    if pi2 > 0.0:
        out += pi2 * _regime_cdf(v, mu2, s2)
    return out


def mixture_var(alpha, pi1, mu1, s1, pi2, mu2, s2, tol=VAR_TOL):
    """Value-at-risk of the two-regime loss by bracketed bisection.

    Returns ``nan`` when no bracket can be found within 60 standard
    deviations; callers turn that into an exception.
    """
    smax = max(s1 if pi1 > 0.0 else 0.0, s2 if pi2 > 0.0 else 0.0)
    if pi1 > 0.0 and pi2 > 0.0:
        mhi, mlo = max(mu1, mu2), min(mu1, mu2)
    elif pi1 > 0.0:
        mhi = mlo = mu1
    else:
        mhi = mlo = mu2
    if smax <= 0.0:
        smax = 1e-300
    width = 12.0
    lo = -mhi - width * smax
    hi = -mlo + width * smax
    while loss_cdf(lo, pi1, mu1, s1, pi2, mu2, s2) > alpha or loss_cdf(
        hi, pi1, mu1, s1, pi2, mu2, s2
    ) < alpha:
        width *= 2.0
        if width > 60.0:
            return math.nan
        lo = -mhi - width * smax
        hi = -mlo + width * smax
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if loss_cdf(mid, pi1, mu1, s1, pi2, mu2, s2) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _tail_term(alpha, v, mu, sigma):
    # E[1{L >= v} L] / (1 - alpha) for L ~ N(-mu, sigma^2)
    z = (v + mu) / sigma
    return (sigma * norm_pdf(z) - mu * norm_cdf(-z)) / (1.0 - alpha)


def mixture_es(alpha, var, pi1, mu1, s1, pi2, mu2, s2):
    """Expected shortfall given the value-at-risk ``var``."""
    out = 0.0
    if pi1 > 0.0:
        out += pi1 * _tail_term(alpha, var, mu1, s1)
    if pi2 > 0.0:
        out += pi2 * _tail_term(alpha, var, mu2, s2)
    return out


def _es_state(alpha, lam, m1, m2, q1, q2):
    """Scalars shared by all gradient components, or None when undefined."""
    pi1 = 1.0 - lam
    pi2 = lam
    s1 = math.sqrt(max(q1, 0.0))
    s2 = math.sqrt(max(q2, 0.0))
    if (pi1 > 0.0 and s1 <= 0.0) or (pi2 > 0.0 and s2 <= 0.0):
        return None
    v = mixture_var(alpha, pi1, m1, s1, pi2, m2, s2)
    if v != v:
        return None
    es = mixture_es(alpha, v, pi1, m1, s1, pi2, m2, s2)
    w1 = w2 = k1 = k2 = t1 = t2 = 0.0
    if pi1 > 0.0:
        h1 = (v + m1) / s1
        w1 = pi1 * norm_pdf(h1) / s1
        t1 = pi1 * norm_cdf(-h1)
        k1 = h1 / s1
    if pi2 > 0.0:
        h2 = (v + m2) / s2
        w2 = pi2 * norm_pdf(h2) / s2
        t2 = pi2 * norm_cdf(-h2)
        k2 = h2 / s2
    wsum = w1 + w2
    if wsum <= 0.0:
        return None
    return es, v, 1.0 / (1.0 - alpha), w1, w2, k1, k2, t1, t2, wsum


def _es_grad_i(state, mui, mu2i, s1xi, s2xi):
    _, v, c, w1, w2, k1, k2, t1, t2, wsum = state
    # gradient of VaR
    dv = (w1 * (k1 * s1xi - mui) + w2 * (k2 * s2xi - mu2i)) / wsum
    d1 = (1.0 + k1 * v) * s1xi - v * (dv + mui)
    d2 = (1.0 + k2 * v) * s2xi - v * (dv + mu2i)
    return c * (w1 * d1 + w2 * d2 - (t1 * mui + t2 * mu2i))


def es_value_grad(alpha, lam, x, mu, mu_tilde, s1x, s2x, grad):
    """Expected shortfall and its gradient in ``x``.

    ``s1x`` and ``s2x`` are the products of the regime covariances with
    ``x``. The gradient is written into ``grad`` (any mutable sequence of
    length n). Returns ``(es, var)``, both ``nan`` on failure.
    """
    n = len(x)
    m1 = jm = q1 = q2 = 0.0
    for i in range(n):
        m1 += x[i] * mu[i]
        jm += x[i] * mu_tilde[i]
        q1 += x[i] * s1x[i]
        q2 += x[i] * s2x[i]
    state = _es_state(alpha, lam, m1, m1 + jm, q1, q2)
    if state is None:
        return math.nan, math.nan
    for i in range(n):
        grad[i] = _es_grad_i(state, mu[i], mu[i] + mu_tilde[i], s1x[i], s2x[i])
    return state[0], state[1]


def _partial(vol, alpha, lam, i, y, mu, mu_tilde, s1y, s2y):
    n = len(y)
    q1 = 0.0
    for j in range(n):
        q1 += y[j] * s1y[j]
    if vol:
        return s1y[i] / math.sqrt(q1) if q1 > 0.0 else None
    m1 = jm = q2 = 0.0
    for j in range(n):
        m1 += y[j] * mu[j]
        jm += y[j] * mu_tilde[j]
        q2 += y[j] * s2y[j]
    state = _es_state(alpha, lam, m1, m1 + jm, q1, q2)
    if state is None:
        return None
    return _es_grad_i(state, mu[i], mu[i] + mu_tilde[i], s1y[i], s2y[i])


#: relative bracket width at which the coordinate bisection stops
RB_REL_TOL = 1e-15


def coordinate_root(vol, alpha, lam, i, b_i, y, mu, mu_tilde, col1, col2, s1y, s2y, base1, base2):
    """Move ``y[i]`` to the root of ``dR/dy_i - b_i / y_i`` by bisection.

    ``s1y`` and ``s2y`` (covariance products with ``y``) are updated in
    place; ``base1`` and ``base2`` are scratch buffers. ``vol`` selects the
    volatility measure instead of the expected shortfall. Returns 0 on
    success, 1 when the derivative is undefined, 2 or 3 when no bracket was
    found below or above the current value.
    """
    n = len(y)
    y0 = y[i]
    for j in range(n):
        base1[j] = s1y[j] - y0 * col1[j]
        base2[j] = s2y[j] - y0 * col2[j]

    def g(t):
        y[i] = t
        for j in range(n):
            s1y[j] = base1[j] + t * col1[j]
            s2y[j] = base2[j] + t * col2[j]
        d = _partial(vol, alpha, lam, i, y, mu, mu_tilde, s1y, s2y)
        return None if d is None else d - b_i / t

    lo = hi = y0
    gv = g(y0)
    if gv is None:
        return 1
    if gv > 0.0:
        for _ in range(200):
            lo *= 0.5
            gv = g(lo)
            if gv is None:
                return 1
            if gv < 0.0:
                break
        else:
            return 2
    else:
        for _ in range(200):
            hi *= 2.0
            gv = g(hi)
            if gv is None:
                return 1
            if gv > 0.0:
                break
        else:
            return 3
    while hi - lo > RB_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gv = g(mid)
        if gv is None:
            return 1
        if gv < 0.0:
            lo = mid
        else:
            hi = mid
    return 1 if g(0.5 * (lo + hi)) is None else 0

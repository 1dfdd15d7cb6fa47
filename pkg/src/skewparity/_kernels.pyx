# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar mixture kernels.

Same API and algorithm as ``_kernels_py``; see there for documentation.
"""
from libc.math cimport erfc, exp, sqrt, NAN

cdef double _SQRT2 = sqrt(2.0)
cdef double _INV_SQRT_2PI = 1.0 / sqrt(2.0 * 3.141592653589793)

VAR_TOL = 0.0
cdef double VAR_TOL_C = 0.0
RB_REL_TOL = 1e-15
cdef double RB_REL_TOL_C = 1e-15


cdef inline double _ncdf(double z) noexcept nogil:
    return 0.5 * erfc(-z / _SQRT2)


cdef inline double _npdf(double z) noexcept nogil:
    return _INV_SQRT_2PI * exp(-0.5 * z * z)


cdef inline double _regime_cdf(double v, double mu, double sigma) noexcept nogil:
    if sigma > 0.0:
        return _ncdf((v + mu) / sigma)
    return 1.0 if v + mu >= 0.0 else 0.0


cdef inline double _loss_cdf(double v, double pi1, double mu1, double s1,
                             double pi2, double mu2, double s2) noexcept nogil:
    cdef double out = 0.0
    if pi1 > 0.0:
        out += pi1 * _regime_cdf(v, mu1, s1)
    if pi2 > 0.0:
        out += pi2 * _regime_cdf(v, mu2, s2)
    return out


cdef double _mixture_var(double alpha, double pi1, double mu1, double s1,
                         double pi2, double mu2, double s2,
                         double tol) noexcept nogil:
    cdef double smax = 0.0, mhi, mlo, width = 12.0, lo, hi, mid
    if pi1 > 0.0 and s1 > smax:
        smax = s1
    if pi2 > 0.0 and s2 > smax:
        smax = s2
    if pi1 > 0.0 and pi2 > 0.0:
        mhi = mu1 if mu1 > mu2 else mu2
        mlo = mu2 if mu1 > mu2 else mu1
    elif pi1 > 0.0:
        mhi = mu1
        mlo = mu1
    else:
        mhi = mu2
        mlo = mu2
    if smax <= 0.0:
        smax = 1e-300
    lo = -mhi - width * smax
    hi = -mlo + width * smax
    while (_loss_cdf(lo, pi1, mu1, s1, pi2, mu2, s2) > alpha
           or _loss_cdf(hi, pi1, mu1, s1, pi2, mu2, s2) < alpha):
        width *= 2.0
        if width > 60.0:
            return NAN
        lo = -mhi - width * smax
        hi = -mlo + width * smax
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _loss_cdf(mid, pi1, mu1, s1, pi2, mu2, s2) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef inline double _tail_term(double alpha, double v, double mu,
                              double sigma) noexcept nogil:
    cdef double z = (v + mu) / sigma
    return (sigma * _npdf(z) - mu * _ncdf(-z)) / (1.0 - alpha)


cdef double _mixture_es(double alpha, double v, double pi1, double mu1,
                        double s1, double pi2, double mu2,
                        double s2) noexcept nogil:
    cdef double out = 0.0
    if pi1 > 0.0:
        out += pi1 * _tail_term(alpha, v, mu1, s1)
    if pi2 > 0.0:
        out += pi2 * _tail_term(alpha, v, mu2, s2)
    return out


def norm_cdf(double z):
    return _ncdf(z)


def norm_pdf(double z):
    return _npdf(z)


def loss_cdf(double v, double pi1, double mu1, double s1, double pi2,
             double mu2, double s2):
    return _loss_cdf(v, pi1, mu1, s1, pi2, mu2, s2)


def mixture_var(double alpha, double pi1, double mu1, double s1, double pi2,
                double mu2, double s2, double tol=VAR_TOL):
    return _mixture_var(alpha, pi1, mu1, s1, pi2, mu2, s2, tol)


def mixture_es(double alpha, double var, double pi1, double mu1, double s1,
               double pi2, double mu2, double s2):
    return _mixture_es(alpha, var, pi1, mu1, s1, pi2, mu2, s2)


cdef struct EsState:
    double es
    double v
    double c
    double w1
    double w2
    double k1
    double k2
    double t1
    double t2
    double wsum


cdef int _es_state(double alpha, double lam, double m1, double m2, double q1,
                   double q2, EsState* st) noexcept nogil:
    """Scalars shared by all gradient components; returns 0 on success."""
    cdef double pi1 = 1.0 - lam, pi2 = lam, s1, s2, h1, h2
    if q1 < 0.0:
        q1 = 0.0
    if q2 < 0.0:
        q2 = 0.0
    s1 = sqrt(q1)
    s2 = sqrt(q2)
    if (pi1 > 0.0 and s1 <= 0.0) or (pi2 > 0.0 and s2 <= 0.0):
        return 1
    st.v = _mixture_var(alpha, pi1, m1, s1, pi2, m2, s2, VAR_TOL_C)
    if st.v != st.v:
        return 1
    st.es = _mixture_es(alpha, st.v, pi1, m1, s1, pi2, m2, s2)
    st.c = 1.0 / (1.0 - alpha)
    st.w1 = st.w2 = st.k1 = st.k2 = st.t1 = st.t2 = 0.0
    if pi1 > 0.0:
        h1 = (st.v + m1) / s1
        st.w1 = pi1 * _npdf(h1) / s1
        st.t1 = pi1 * _ncdf(-h1)
        st.k1 = h1 / s1
    if pi2 > 0.0:
        h2 = (st.v + m2) / s2
        st.w2 = pi2 * _npdf(h2) / s2
        st.t2 = pi2 * _ncdf(-h2)
        st.k2 = h2 / s2
    st.wsum = st.w1 + st.w2
    if st.wsum <= 0.0:
        return 1
    return 0


cdef inline double _es_grad_i(EsState* st, double mui, double mu2i, double s1xi,
                              double s2xi) noexcept nogil:
    cdef double dv, d1, d2, v = st.v
    dv = (st.w1 * (st.k1 * s1xi - mui) + st.w2 * (st.k2 * s2xi - mu2i)) / st.wsum
    d1 = (1.0 + st.k1 * v) * s1xi - v * (dv + mui)
    d2 = (1.0 + st.k2 * v) * s2xi - v * (dv + mu2i)
    return st.c * (st.w1 * d1 + st.w2 * d2 - (st.t1 * mui + st.t2 * mu2i))


def es_value_grad(double alpha, double lam, const double[::1] x,
                  const double[::1] mu, const double[::1] mu_tilde,
                  const double[::1] s1x, const double[::1] s2x,
                  double[::1] grad):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double m1 = 0.0, jm = 0.0, q1 = 0.0, q2 = 0.0
    cdef EsState st
    cdef int status
    with nogil:
        for i in range(n):
            m1 += x[i] * mu[i]
            jm += x[i] * mu_tilde[i]
            q1 += x[i] * s1x[i]
            q2 += x[i] * s2x[i]
        status = _es_state(alpha, lam, m1, m1 + jm, q1, q2, &st)
        if status == 0:
            for i in range(n):
                grad[i] = _es_grad_i(&st, mu[i], mu[i] + mu_tilde[i], s1x[i], s2x[i])
    if status:
        return NAN, NAN
    return st.es, st.v


cdef int _partial(int vol, double alpha, double lam, Py_ssize_t i,
                  const double[::1] y, const double[::1] mu,
                  const double[::1] mu_tilde, const double[::1] s1y,
                  const double[::1] s2y, double* out) noexcept nogil:
    cdef Py_ssize_t j, n = y.shape[0]
    cdef double m1 = 0.0, jm = 0.0, q1 = 0.0, q2 = 0.0
    cdef EsState st
    for j in range(n):
        q1 += y[j] * s1y[j]
    if vol:
        if q1 <= 0.0:
            return 1
        out[0] = s1y[i] / sqrt(q1)
        return 0
    for j in range(n):
        m1 += y[j] * mu[j]
        jm += y[j] * mu_tilde[j]
        q2 += y[j] * s2y[j]
    if _es_state(alpha, lam, m1, m1 + jm, q1, q2, &st):
        return 1
    out[0] = _es_grad_i(&st, mu[i], mu[i] + mu_tilde[i], s1y[i], s2y[i])
    return 0


cdef int _g(int vol, double alpha, double lam, Py_ssize_t i, double b_i, double t,
            double[::1] y, const double[::1] mu, const double[::1] mu_tilde,
            const double[::1] col1, const double[::1] col2,
            const double[::1] base1, const double[::1] base2,
            double[::1] s1y, double[::1] s2y, double* out) noexcept nogil:
    cdef Py_ssize_t j, n = y.shape[0]
    cdef double d
    y[i] = t
    for j in range(n):
        s1y[j] = base1[j] + t * col1[j]
        s2y[j] = base2[j] + t * col2[j]
    if _partial(vol, alpha, lam, i, y, mu, mu_tilde, s1y, s2y, &d):
        return 1
    out[0] = d - b_i / t
    return 0


cdef int _coordinate_root(int vol, double alpha, double lam, Py_ssize_t i,
                          double b_i, double[::1] y, const double[::1] mu,
                          const double[::1] mu_tilde, const double[::1] col1,
                          const double[::1] col2, double[::1] s1y,
                          double[::1] s2y, double[::1] base1,
                          double[::1] base2) noexcept nogil:
    cdef Py_ssize_t j, n = y.shape[0]
    cdef double y0 = y[i], lo, hi, mid, g
    cdef int k, found = 0
    for j in range(n):
        base1[j] = s1y[j] - y0 * col1[j]
        base2[j] = s2y[j] - y0 * col2[j]
    lo = y0
    hi = y0
    if _g(vol, alpha, lam, i, b_i, y0, y, mu, mu_tilde, col1, col2, base1, base2, s1y, s2y, &g):
        return 1
    if g > 0.0:
        for k in range(200):
            lo *= 0.5
            if _g(vol, alpha, lam, i, b_i, lo, y, mu, mu_tilde, col1, col2, base1, base2, s1y, s2y, &g):
                return 1
            if g < 0.0:
                found = 1
                break
        if not found:
            return 2
    else:
        for k in range(200):
            hi *= 2.0
            if _g(vol, alpha, lam, i, b_i, hi, y, mu, mu_tilde, col1, col2, base1, base2, s1y, s2y, &g):
                return 1
            if g > 0.0:
                found = 1
                break
        if not found:
            return 3
    while hi - lo > RB_REL_TOL_C * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _g(vol, alpha, lam, i, b_i, mid, y, mu, mu_tilde, col1, col2, base1, base2, s1y, s2y, &g):
            return 1
        if g < 0.0:
            lo = mid
        else:
            hi = mid
    if _g(vol, alpha, lam, i, b_i, 0.5 * (lo + hi), y, mu, mu_tilde, col1, col2, base1, base2, s1y, s2y, &g):
        return 1
    return 0


def coordinate_root(int vol, double alpha, double lam, Py_ssize_t i, double b_i,
                    double[::1] y, const double[::1] mu,
                    const double[::1] mu_tilde, const double[::1] col1,
                    const double[::1] col2, double[::1] s1y, double[::1] s2y,
                    double[::1] base1, double[::1] base2):
    cdef int status
    with nogil:
        status = _coordinate_root(vol, alpha, lam, i, b_i, y, mu, mu_tilde,
                                  col1, col2, s1y, s2y, base1, base2)
    return status

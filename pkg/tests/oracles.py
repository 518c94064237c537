"""Independent reference implementations used by the test suite.

Everything here is written from scratch against textbook formulas, on
purpose: none of these helpers import the package under test, so agreement
between the two is meaningful evidence and not a tautology.
"""

import numpy as np


def kalman_scalar(y, a, q, r, m0, p0):
    """Scalar linear-Gaussian Kalman filter.

    Model: x_k = a x_{k-1} + w_k, w ~ N(0, q); y_k = x_k + e_k, e ~ N(0, r);
    x_0 ~ N(m0, p0).  Returns (means, variances, loglik) where means[k] and
    variances[k] describe the posterior of x_{k+1} given y_{1..k+1} and
    loglik is the exact log marginal likelihood of the whole record.
    """
    y = np.asarray(y, dtype=float)
    means = np.empty(len(y))
    variances = np.empty(len(y))
    m, v = float(m0), float(p0)
    loglik = 0.0
    for k, yk in enumerate(y):
        mp = a * m
        vp = a * a * v + q
        s = vp + r
        loglik += -0.5 * (np.log(2.0 * np.pi * s) + (yk - mp) ** 2 / s)
        gain = vp / s
        m = mp + gain * (yk - mp)
        v = (1.0 - gain) * vp
        means[k] = m
        variances[k] = v
    return means, variances, loglik


def kalman_variance_recursion(a, q, r, p0, n_steps):
    """Posterior variance sequence of the scalar Kalman filter.

    Identical to the variance track of :func:`kalman_scalar`; split out so a
    bound recursion can be compared without generating data (the variance of
    a linear-Gaussian filter does not depend on the observations).
    """
    out = np.empty(n_steps)
    v = float(p0)
    for k in range(n_steps):
        vp = a * a * v + q
        v = vp * r / (vp + r)
        out[k] = v
    return out


def finite_difference_jacobian(fn, x, step=1e-5):
    """Central finite-difference Jacobian of a vector map at x."""
    x = np.asarray(x, dtype=float)
    dim = x.size
    cols = []
    for i in range(dim):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        cols.append((np.asarray(fn(hi)) - np.asarray(fn(lo))) / (2.0 * step))
    return np.stack(cols, axis=-1)

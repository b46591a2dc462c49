"""Scalar special functions used across the package.

Everything here is plain numpy on arrays or floats. The normal CDF is a
rational Chebyshev approximation of erfc (Cody-style, three branches) so the
package does not depend on scipy at runtime; its absolute error is below
1e-15, and its analytic derivative is the exact normal density, which keeps
finite-difference checks of downstream gradients honest.
"""
from __future__ import annotations

import numpy as np

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

# Rational coefficients for erf on |x| <= 0.46875.
_ERF_A = (
    3.16112374387056560e00,
    1.13864154151050156e02,
    3.77485237685302021e02,
    3.20937758913846947e03,
    1.85777706184603153e-1,
)
_ERF_B = (
    2.36012909523441209e01,
    2.44024637934444173e02,
    1.28261652607737228e03,
    2.84423683343917062e03,
)
# erfc on 0.46875 < x <= 4.
_ERF_C = (
    5.64188496988670089e-1,
    8.88314979438837594e00,
    6.61191906371416295e01,
    2.98635138197400131e02,
    8.81952221241769090e02,
    1.71204761263407058e03,
    2.05107837782607147e03,
    1.23033935479799725e03,
    2.15311535474403846e-8,
)
_ERF_D = (
    1.57449261107098347e01,
    1.17693950891312499e02,
    5.37181101862009858e02,
    1.62138957456669019e03,
    3.29079923573345963e03,
    4.36261909014324716e03,
    3.43936767414372164e03,
    1.23033935480374942e03,
)
# erfc on x > 4.
_ERF_P = (
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
)
_ERF_Q = (
    2.56852019228982242e00,
    1.87295284992346047e00,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
)
_SQRPI = 5.6418958354775628695e-1  # 1/sqrt(pi)


def _erf_small(x: np.ndarray) -> np.ndarray:
    # |x| <= 0.46875
    z = x * x
    xnum = _ERF_A[4] * z
    xden = z
    for i in range(3):
        xnum = (xnum + _ERF_A[i]) * z
        xden = (xden + _ERF_B[i]) * z
    return x * (xnum + _ERF_A[3]) / (xden + _ERF_B[3])


def _exp_scaled(y: np.ndarray, core: np.ndarray) -> np.ndarray:
    # multiply core by exp(-y^2) split to preserve accuracy for large y
    ysq = np.floor(y * 16.0) / 16.0
    d = (y - ysq) * (y + ysq)
    return np.exp(-ysq * ysq) * np.exp(-d) * core


def _erfc_mid(y: np.ndarray) -> np.ndarray:
    # 0.46875 < y <= 4
    xnum = _ERF_C[8] * y
    xden = y
    for i in range(7):
        xnum = (xnum + _ERF_C[i]) * y
        xden = (xden + _ERF_D[i]) * y
    core = (xnum + _ERF_C[7]) / (xden + _ERF_D[7])
    return _exp_scaled(y, core)


def _erfc_large(y: np.ndarray) -> np.ndarray:
    # y > 4; underflows to 0 past ~26.5 which is fine in double precision
    y = np.minimum(y, 30.0)
    z = 1.0 / (y * y)
    xnum = _ERF_P[5] * z
    xden = z
    for i in range(4):
        xnum = (xnum + _ERF_P[i]) * z
        xden = (xden + _ERF_Q[i]) * z
    core = z * (xnum + _ERF_P[4]) / (xden + _ERF_Q[4])
    core = (_SQRPI - core) / y
    return _exp_scaled(y, core)


def erfc(x):
    """Complementary error function, vectorized, |abs error| < 1e-15."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    y = np.abs(a)
    small = y <= 0.46875
    mid = (y > 0.46875) & (y <= 4.0)
    large = y > 4.0
    out = np.empty_like(y)
    if small.any():
        out[small] = 1.0 - _erf_small(a[small])
    if mid.any():
        out[mid] = _erfc_mid(y[mid])
    if large.any():
        out[large] = _erfc_large(y[large])
    neg = (a < 0.0) & ~small
    out[neg] = 2.0 - out[neg]
    return float(out[0]) if scalar else out


def norm_cdf(x):
    """Standard normal CDF via the rational erfc above."""
    x = np.asarray(x, dtype=float)
    return 0.5 * erfc(-x / _SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def sigmoid(x):
    """Logistic function, overflow-safe on both tails."""
    x = np.asarray(x, dtype=float)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + t), t / (1.0 + t))


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)

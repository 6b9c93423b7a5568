"""Standard normal CDF, log-CDF, quantile and truncated sampling.

These are scalar routines compiled with numba so they can be called from
the sampler kernels.  Vectorised NumPy code elsewhere in the package uses
``scipy.special.ndtr``/``ndtri``; the test suite cross-checks the two.
"""

import math

import numba as nb
import numpy as np

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


@nb.njit(cache=True)
def ndtr(x):
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / SQRT2)


@nb.njit(cache=True)
def log_ndtr(x):
    """log Phi(x), accurate in both tails."""
    if x > 0.0:
        return math.log1p(-0.5 * math.erfc(x / SQRT2))
    if x > -30.0:
        return math.log(0.5 * math.erfc(-x / SQRT2))
    # asymptotic series for the far lower tail
    x2 = x * x
    s = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2)
    return -0.5 * x2 - LOG_SQRT_2PI - math.log(-x) + math.log(s)


@nb.njit(cache=True)
def log_norm_pdf(x):
    return -0.5 * x * x - LOG_SQRT_2PI


@nb.njit(cache=True)
def _acklam_lower(q):
    # q = sqrt(-2 log p) for p in the lower tail
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


@nb.njit(cache=True)
def ndtri_log(logp):
    """Quantile of the standard normal given log p, for log p <= log 0.5.

    Starts from Acklam's approximation and polishes with Newton steps on
    ``log_ndtr(x) - logp``, which keeps full precision far into the tail.
    """
    if logp == -np.inf:
        return -np.inf
    p = math.exp(logp)
    if p > _P_LOW:
        q = p - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x = num / den
    else:
        x = _acklam_lower(math.sqrt(-2.0 * logp))
    for _ in range(2):
        lc = log_ndtr(x)
        # d/dx log Phi(x) = phi(x) / Phi(x)
        step = (lc - logp) / math.exp(log_norm_pdf(x) - lc)
        x -= step
        if abs(step) < 1e-15 * (1.0 + abs(x)):
            break
    return x


@nb.njit(cache=True)
def ndtri(p):
    """Quantile of the standard normal for p in (0, 1)."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    if _P_LOW < p < 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x = num / den
        # one Halley step brings the 1e-9 approximation to full precision
        e = ndtr(x) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        return x - u / (1.0 + 0.5 * x * u)
    if p <= 0.5:
        return ndtri_log(math.log(p))
    return -ndtri_log(math.log1p(-p))


@nb.njit(cache=True)
def std_trunc_lower(a, u):
    """Standard normal truncated to (a, inf), by inversion of the uniform ``u``."""
    if a <= 0.0:
        pa = ndtr(a)
        x = ndtri(pa + u * (1.0 - pa))
    else:
        # complementary branch: P(X > x) = (1 - u) P(X > a), kept in log space
        x = -ndtri_log(math.log1p(-u) + log_ndtr(-a))
    if x < a:
        x = a
    return x


@nb.njit(cache=True)
def std_trunc_lower_rng(a, rng):
    """Standard normal truncated to (a, inf), drawn from ``rng``.

    For ``a <= 0`` at least half the mass survives, so plain rejection is
    exact and cheaper than inversion; otherwise invert a uniform.
    """
    if a <= 0.0:
        while True:
            z = rng.standard_normal()
            if z > a:
                return z
    return std_trunc_lower(a, rng.random())


@nb.njit(cache=True)
def std_trunc_upper(b, u):
    """Standard normal truncated to (-inf, b)."""
    return -std_trunc_lower(-b, u)


@nb.njit(cache=True)
def trunc_normal_lower(mu, sd, a, u):
    """N(mu, sd^2) truncated to (a, inf)."""
    return mu + sd * std_trunc_lower((a - mu) / sd, u)


@nb.njit(cache=True)
def log_add_exp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@nb.njit(cache=True)
def _vec_ndtri(p):
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = ndtri(p[i])
    return out


@nb.njit(cache=True)
def _vec_log_ndtr(x):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = log_ndtr(x[i])
    return out

"""Reference samplers: point-mass spike-and-slab over inclusion indicators,
the Bayesian Lasso and the horseshoe.

All three return :class:`~neuronized.sampler.PosteriorSamples` so the
diagnostics downstream do not care which sampler produced the draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _kernels as K
from .data import RegressionData
from .sampler import PosteriorSamples, SamplerConfig, SamplerError, drive_chain

LOG_PI = math.log(math.pi)


# ---------------------------------------------------------------------------
# spike-and-slab over gamma

@nb.njit(cache=True)
def _gamma_factor(idx, G, Xty, g):
    """Cholesky factor of ``X_g'X_g + I/g`` and ``b = L^-1 X_g'y``."""
    k = idx.size
    A = np.empty((k, k))
    for a in range(k):
        for c in range(k):
            A[a, c] = G[idx[a], idx[c]]
        A[a, a] += 1.0 / g
    L, ok = K.chol_jitter(A)
    xy = np.empty(k)
    for a in range(k):
        xy[a] = Xty[idx[a]]
    return L, K.forward_sub(L, xy), ok


@nb.njit(cache=True)
def _log_marglik(idx, G, Xty, yty, n, g):
    """log m_gamma(y) under slab N(0, sigma^2 g I) and pi(sigma^2) ~ 1/sigma^2."""
    k = idx.size
    R = yty
    logdet = 0.0
    if k > 0:
        L, b, ok = _gamma_factor(idx, G, Xty, g)
        if not ok:
            return np.nan
        for a in range(k):
            R -= b[a] * b[a]
            logdet += 2.0 * math.log(L[a, a])
        logdet += k * math.log(g)
    R = max(R, 1e-300)
    return math.lgamma(0.5 * n) - 0.5 * n * LOG_PI - 0.5 * logdet - 0.5 * n * math.log(R)


@nb.njit(cache=True)
def _active(gamma):
    k = 0
    for j in range(gamma.size):
        k += gamma[j]
    idx = np.empty(k, dtype=np.int64)
    k = 0
    for j in range(gamma.size):
        if gamma[j]:
            idx[k] = j
            k += 1
    return idx


@nb.njit(cache=True)
def _gamma_iterations(n_iter, it0, burn_in, thin, G, Xty, yty, n, g, log_odds, p_single,
                      gamma, cur, rng, acc, theta_buf, sig_buf, code_buf, pos, theta_sum,
                      incl_sum, draw_theta, status):
    """Metropolis over inclusion vectors with single and double flips.

    ``cur[0]`` caches log m_gamma(y) + |gamma| log(eta / (1 - eta)).
    """
    p = gamma.size
    cap = sig_buf.size
    for k in range(n_iter):
        it = it0 + k
        j1 = rng.integers(0, p)
        j2 = -1
        if p > 1 and rng.random() >= p_single:
            j2 = rng.integers(0, p - 1)
            if j2 >= j1:
                j2 += 1
        gamma[j1] = 1 - gamma[j1]
        if j2 >= 0:
            gamma[j2] = 1 - gamma[j2]
        idx = _active(gamma)
        lm = _log_marglik(idx, G, Xty, yty, n, g)
        if not math.isfinite(lm):
            status[0] = 1
            status[1] = it
            return
        new = lm + idx.size * log_odds
        acc[1] += 1
        if math.log(rng.random()) < new - cur[0]:
            cur[0] = new
            acc[0] += 1
        else:
            gamma[j1] = 1 - gamma[j1]
            if j2 >= 0:
                gamma[j2] = 1 - gamma[j2]
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            pos[1] += 1
            q = pos[0]
            code = 0
            for j in range(p):
                if gamma[j]:
                    incl_sum[j] += 1.0
                    if p <= 62:
                        code += 1 << j
            if draw_theta:
                idx = _active(gamma)
                ka = idx.size
                R = yty
                L = np.zeros((0, 0))
                b = np.zeros(0)
                if ka > 0:
                    L, b, _ = _gamma_factor(idx, G, Xty, g)
                    for a in range(ka):
                        R -= b[a] * b[a]
                sig2 = 0.5 * max(R, 1e-300) / rng.gamma(0.5 * n, 1.0)
                sig = math.sqrt(sig2)
                th = np.zeros(p)
                if ka > 0:
                    z = np.empty(ka)
                    for a in range(ka):
                        z[a] = b[a] + sig * rng.standard_normal()
                    t = K.backward_sub_t(L, z)
                    for a in range(ka):
                        th[idx[a]] = t[a]
                for j in range(p):
                    theta_sum[j] += th[j]
                if q < cap:
                    for j in range(p):
                        theta_buf[q, j] = th[j]
                    sig_buf[q] = sig2
            if q < cap:
                code_buf[q] = code
            pos[0] = q + 1


@dataclass
class GammaState:
    """Inclusion vector with its cached log marginal likelihood and log prior."""

    gamma: np.ndarray
    log_marglik: float
    log_prior: float

    @classmethod
    def compute(cls, gamma, data: RegressionData, slab_variance: float, eta: float):
        gamma = np.asarray(gamma, dtype=np.int64)
        k = int(gamma.sum())
        lm = log_marginal_gamma(gamma, data, slab_variance)
        return cls(gamma.copy(), lm, k * math.log(eta) + (gamma.size - k) * math.log1p(-eta))

    @property
    def log_posterior(self) -> float:
        return self.log_marglik + self.log_prior


def log_marginal_gamma(gamma, data: RegressionData, slab_variance: float = 1.0) -> float:
    """Closed-form log marginal likelihood of the model ``gamma``.

    The slab is ``theta_gamma ~ N(0, sigma^2 slab_variance I)`` and
    ``pi(sigma^2) ~ 1/sigma^2``, so
    ``m = Gamma(n/2) pi^(-n/2) |I + g X'X|^(-1/2) R^(-n/2)`` with
    ``R = y'y - y'X (X'X + I/g)^-1 X'y``.
    """
    idx = np.flatnonzero(np.asarray(gamma))
    X = np.asarray(data.X)
    return float(_log_marglik(idx, X.T @ X, X.T @ data.y, float(data.y @ data.y), data.n,
                              float(slab_variance)))


def enumerate_gamma_posterior(data: RegressionData, slab_variance: float = 1.0,
                              eta: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior over all ``2^p`` models (small ``p`` only).

    Returns ``(codes, probs)`` where bit ``j`` of ``codes[i]`` is ``gamma_j``.
    """
    p = data.p
    if p > 20:
        raise ValueError("enumeration is limited to p <= 20")
    X = np.asarray(data.X)
    G, Xty, yty = X.T @ X, X.T @ data.y, float(data.y @ data.y)
    codes = np.arange(2 ** p, dtype=np.int64)
    logp = np.empty(codes.size)
    log_odds = math.log(eta) - math.log1p(-eta)
    for c in codes:
        idx = np.array([j for j in range(p) if (c >> j) & 1], dtype=np.int64)
        logp[c] = _log_marglik(idx, G, Xty, yty, data.n, slab_variance) + idx.size * log_odds
    logp -= logp.max()
    probs = np.exp(logp)
    return codes, probs / probs.sum()


def spsl_gamma_mcmc(data: RegressionData, slab_variance: float = 1.0, eta: float | None = None,
                    config: SamplerConfig | None = None, p_single: float = 0.7,
                    draw_theta: bool = True, rng=None) -> PosteriorSamples:
    """Metropolis sampler over inclusion indicators for the point-mass prior.

    Proposals flip one coordinate with probability ``p_single`` and two
    distinct coordinates otherwise.  The slab is ``N(0, sigma^2 slab_variance)``
    and ``eta`` (default ``1/p``) is the prior inclusion probability.  With
    ``draw_theta`` the stored iterations also carry a draw of
    ``(theta, sigma^2)`` from its conditional given ``gamma``.  The stored
    model codes (``extra["codes"]``, bit ``j`` = ``gamma_j``) are kept for
    ``p <= 62``.
    """
    config = config or SamplerConfig(iterations=220000, burn_in=200000)
    p, n = data.p, data.n
    eta = 1.0 / p if eta is None else float(eta)
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if not slab_variance > 0:
        raise ValueError("slab_variance must be positive")
    if not 0 <= p_single <= 1:
        raise ValueError("p_single must lie in [0, 1]")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(config.seed)
    X = np.asarray(data.X)
    G = np.ascontiguousarray(X.T @ X)
    Xty = X.T @ data.y
    yty = float(data.y @ data.y)
    g = float(slab_variance)
    log_odds = math.log(eta) - math.log1p(-eta)
    gamma = np.zeros(p, dtype=np.int64)
    cur = np.array([_log_marglik(np.zeros(0, dtype=np.int64), G, Xty, yty, n, g)])

    cap = (config.max_stored if config.time_budget is not None
           else (config.iterations - config.burn_in) // config.thin)
    theta_buf = np.zeros((cap if draw_theta else 1, p))
    sig_buf = np.zeros(cap)
    code_buf = np.zeros(cap, dtype=np.int64)
    acc = np.zeros(2, dtype=np.int64)
    pos = np.zeros(2, dtype=np.int64)
    status = np.zeros(2, dtype=np.int64)
    theta_sum = np.zeros(p)
    incl_sum = np.zeros(p)

    def advance(n_iter, it0, thin):
        _gamma_iterations(n_iter, it0, config.burn_in, thin, G, Xty, yty, n, g, log_odds,
                          p_single, gamma, cur, rng, acc, theta_buf, sig_buf, code_buf, pos,
                          theta_sum, incl_sum, draw_theta, status)
        if status[0]:
            raise SamplerError(f"factorization failure at iteration {status[1]}",
                               int(status[1]), {"gamma": gamma.copy()})

    bufs = [sig_buf, code_buf] + ([theta_buf] if draw_theta else [])
    it, thin, t_burn, t_sample = drive_chain(advance, config, cap, pos, bufs)
    S = int(min(pos[0], cap))
    events = max(int(pos[1]), 1)
    return PosteriorSamples(
        method="spsl-gamma",
        theta=theta_buf[:S].copy() if draw_theta else np.zeros((0, p)),
        sigma_sq=sig_buf[:S].copy(),
        theta_mean=theta_sum / events,
        inclusion=incl_sum / events,
        track=np.arange(p),
        accepted=int(acc[0]),
        proposed=int(acc[1]),
        iterations=it,
        burn_in=config.burn_in,
        thin=thin,
        burn_in_time=t_burn,
        sampling_time=t_sample,
        extra={"codes": code_buf[:S].copy() if p <= 62 else None,
               "final_state": GammaState(gamma.copy(), float(cur[0] - gamma.sum() * log_odds),
                                         float(gamma.sum() * math.log(eta)
                                               + (p - gamma.sum()) * math.log1p(-eta))),
               "slab_variance": g, "eta": eta},
    )


# ---------------------------------------------------------------------------
# Bayesian Lasso and horseshoe: Gaussian scale mixtures
#
# Both write theta_j | scales ~ N(0, sigma^2 d_j^2).  The theta block is the
# neuronized w update with T = d and unit weight variance, so theta = d * w.

@nb.njit(cache=True)
def _theta_block(mode, X, y, XtX, Xty, d, w, theta, sigma2, rng):
    if not K.update_w(mode, X, y, XtX, Xty, d, w, sigma2, 1.0, rng):
        return False
    for j in range(d.size):
        theta[j] = d[j] * w[j]
    return True


@nb.njit(cache=True)
def _sigma2_scale_mixture(X, y, theta, d, a0, b0, rng):
    n, p = X.shape
    rate = b0
    for i in range(n):
        e = y[i]
        for j in range(p):
            e -= X[i, j] * theta[j]
        rate += 0.5 * e * e
    for j in range(p):
        rate += 0.5 * theta[j] * theta[j] / (d[j] * d[j])
    return rate / rng.gamma(0.5 * (n + p) + a0, 1.0)


@nb.njit(cache=True)
def _store(it, burn_in, thin, theta, sig2, theta_buf, sig_buf, pos, theta_sum):
    if it >= burn_in and (it - burn_in + 1) % thin == 0:
        pos[1] += 1
        q = pos[0]
        for j in range(theta.size):
            theta_sum[j] += theta[j]
        if q < sig_buf.size:
            for j in range(theta.size):
                theta_buf[q, j] = theta[j]
            sig_buf[q] = sig2
        pos[0] = q + 1


@nb.njit(cache=True)
def _blasso_iterations(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, lam2, d, w, theta,
                       sig2, a0, b0, fix_sigma, rng, theta_buf, sig_buf, pos, theta_sum, status):
    p = d.size
    for k in range(n_iter):
        it = it0 + k
        if not _theta_block(mode, X, y, XtX, Xty, d, w, theta, sig2[0], rng):
            status[0] = 1
            status[1] = it
            return
        sig = math.sqrt(sig2[0])
        for j in range(p):
            # 1/d_j^2 | theta_j, sigma^2 ~ InvGaussian(sqrt(lam2 sigma^2 / theta_j^2), lam2)
            at = max(abs(theta[j]), 1e-300)
            inv = rng.wald(math.sqrt(lam2) * sig / at, lam2)
            d[j] = 1.0 / math.sqrt(max(inv, 1e-300))
        if not fix_sigma:
            sig2[0] = _sigma2_scale_mixture(X, y, theta, d, a0, b0, rng)
        if not (sig2[0] > 0.0 and math.isfinite(sig2[0])):
            status[0] = 2
            status[1] = it
            return
        _store(it, burn_in, thin, theta, sig2[0], theta_buf, sig_buf, pos, theta_sum)


@nb.njit(cache=True)
def _slice_eta(eta, mu, rng):
    """One slice-sampling update of eta with density ~ exp(-mu eta) / (1 + eta).

    The auxiliary level gives the interval (0, (1 - u)/u) on which eta is
    exponential(mu), drawn by inverting its truncated CDF.
    """
    u = rng.random() / (1.0 + eta)
    if u <= 0.0:
        return eta
    upper = (1.0 - u) / u
    v = rng.random()
    if mu * upper < 1e-12:
        return v * upper
    out = -math.log1p(v * math.expm1(-mu * upper)) / mu
    return min(max(out, 1e-300), upper)


@nb.njit(cache=True)
def _horseshoe_iterations(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, tau, eta, d, w,
                          theta, sig2, a0, b0, fix_sigma, rng, theta_buf, sig_buf, pos,
                          theta_sum, status):
    p = d.size
    for k in range(n_iter):
        it = it0 + k
        if not _theta_block(mode, X, y, XtX, Xty, d, w, theta, sig2[0], rng):
            status[0] = 1
            status[1] = it
            return
        for j in range(p):
            mu = theta[j] * theta[j] / (2.0 * sig2[0] * tau * tau)
            eta[j] = _slice_eta(eta[j], mu, rng)
            d[j] = tau / math.sqrt(eta[j])
        if not fix_sigma:
            sig2[0] = _sigma2_scale_mixture(X, y, theta, d, a0, b0, rng)
        if not (sig2[0] > 0.0 and math.isfinite(sig2[0])):
            status[0] = 2
            status[1] = it
            return
        _store(it, burn_in, thin, theta, sig2[0], theta_buf, sig_buf, pos, theta_sum)


def _w_mode(data, requested):
    if requested in ("auto", "block_relu"):
        return K.W_FAST if data.p > 2 * data.n else K.W_FULL
    return {"full": K.W_FULL, "fast_np": K.W_FAST}[requested]


def _scale_mixture_chain(method, data, config, rng, run, init_d, extra):
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(config.seed)
    p = data.p
    mode = _w_mode(data, config.w_update)
    X, y = data.X, np.ascontiguousarray(data.y)
    XtX = np.ascontiguousarray(X.T @ X) if mode != K.W_FAST else np.zeros((1, 1))
    Xty = X.T @ y
    sig2 = np.array([float(config.sigma_sq_fixed) if config.sigma_sq_fixed is not None
                     else max(float(np.var(y)), 1e-8)])
    d = np.ascontiguousarray(init_d, dtype=float)
    w = np.zeros(p)
    theta = np.zeros(p)
    cap = (config.max_stored if config.time_budget is not None
           else (config.iterations - config.burn_in) // config.thin)
    theta_buf = np.zeros((cap, p))
    sig_buf = np.zeros(cap)
    pos = np.zeros(2, dtype=np.int64)
    status = np.zeros(2, dtype=np.int64)
    theta_sum = np.zeros(p)
    fix = config.sigma_sq_fixed is not None

    def advance(n_iter, it0, thin):
        run(n_iter, it0, config.burn_in, thin, X, y, XtX, Xty, mode, d, w, theta, sig2,
            config.a0, config.b0, fix, rng, theta_buf, sig_buf, pos, theta_sum, status)
        if status[0]:
            what = "factorization failure" if status[0] == 1 else "non-finite state"
            raise SamplerError(f"{what} at iteration {status[1]}", int(status[1]),
                               {"theta": theta.copy(), "sigma_sq": float(sig2[0])})

    it, thin, t_burn, t_sample = drive_chain(advance, config, cap, pos, [theta_buf, sig_buf])
    S = int(min(pos[0], cap))
    events = max(int(pos[1]), 1)
    mean = theta_sum / events
    return PosteriorSamples(
        method=method, theta=theta_buf[:S].copy(), sigma_sq=sig_buf[:S].copy(),
        theta_mean=mean, inclusion=np.full(p, np.nan), track=np.arange(p),
        iterations=it, burn_in=config.burn_in, thin=thin, burn_in_time=t_burn,
        sampling_time=t_sample, extra=extra)


def bayesian_lasso_gibbs(data: RegressionData, tau_w_sq: float,
                         config: SamplerConfig | None = None, rng=None) -> PosteriorSamples:
    """Three-block Gibbs sampler for the Bayesian Lasso.

    The prior is ``theta_j | sigma^2 ~ Laplace(scale = sigma * sqrt(tau_w_sq / 2))``,
    whose variance is ``sigma^2 tau_w_sq``; in the usual parametrisation the
    rate is ``lambda = sqrt(2 / tau_w_sq)`` per unit ``sigma``.
    """
    if not tau_w_sq > 0:
        raise ValueError("tau_w_sq must be positive")
    config = config or SamplerConfig()
    lam2 = 2.0 / tau_w_sq

    def run(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, d, w, theta, sig2, a0, b0, fix,
            rng_, tb, sb, pos, ts, status):
        _blasso_iterations(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, lam2, d, w, theta,
                           sig2, a0, b0, fix, rng_, tb, sb, pos, ts, status)

    return _scale_mixture_chain("blasso", data, config, rng, run,
                                np.full(data.p, math.sqrt(tau_w_sq)),
                                {"tau_w_sq": float(tau_w_sq), "lambda": math.sqrt(lam2)})


def horseshoe_gibbs(data: RegressionData, tau_w_sq: float | None = None,
                    config: SamplerConfig | None = None, rng=None) -> PosteriorSamples:
    """Gibbs sampler for the horseshoe with a fixed global scale.

    ``theta_j ~ N(0, sigma^2 tau^2 lambda_j^2)`` with half-Cauchy
    ``lambda_j``; ``tau^2 = tau_w_sq`` defaults to ``p^-2``.  Each local
    scale is updated through ``eta_j = 1/lambda_j^2`` by slice sampling.
    """
    tau_w_sq = 1.0 / data.p ** 2 if tau_w_sq is None else float(tau_w_sq)
    if not tau_w_sq > 0:
        raise ValueError("tau_w_sq must be positive")
    config = config or SamplerConfig()
    tau = math.sqrt(tau_w_sq)
    eta = np.ones(data.p)

    def run(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, d, w, theta, sig2, a0, b0, fix,
            rng_, tb, sb, pos, ts, status):
        _horseshoe_iterations(n_iter, it0, burn_in, thin, X, y, XtX, Xty, mode, tau, eta, d, w,
                              theta, sig2, a0, b0, fix, rng_, tb, sb, pos, ts, status)

    return _scale_mixture_chain("horseshoe", data, config, rng, run, np.full(data.p, tau),
                                {"tau_w_sq": tau_w_sq})


def hard_threshold_select(theta_mean, sigma_hat: float, c: float = 0.1) -> np.ndarray:
    """0-based indices ``j`` with ``|theta_mean_j| > c * sigma_hat``."""
    theta_mean = np.asarray(theta_mean, dtype=float)
    return np.flatnonzero(np.abs(theta_mean) > c * sigma_hat)

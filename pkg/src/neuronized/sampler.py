"""Gibbs-within-Metropolis sampler for regression under a neuronized prior.

One iteration:

1. draw ``w | alpha, sigma^2`` from its Gaussian conditional,
2. recompute the residual ``r = y - X theta``,
3. for each coordinate, add its contribution back to ``r``, update
   ``alpha_j`` (random-walk moves on the target with ``w_j`` integrated out,
   or exact draws for ReLU), draw ``w_j`` and subtract the contribution,
4. draw ``sigma^2`` from its inverse-gamma conditional.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .data import RegressionData
from .priors import NeuronizedPrior

ALPHA_UPDATES = ("random_walk", "exact_relu")
W_UPDATES = ("auto", "full", "block_relu", "fast_np")
_W_CODE = {"full": K.W_FULL, "block_relu": K.W_BLOCK, "fast_np": K.W_FAST}


@dataclass
class ChainState:
    """Mutable sampler state; ``r`` always holds the full residual ``y - X theta``."""

    alpha: np.ndarray
    w: np.ndarray
    sigma_sq: float
    r: np.ndarray

    @classmethod
    def initial(cls, data: RegressionData, sigma_sq: float | None = None, alpha=None, w=None):
        p = data.p
        alpha = np.zeros(p) if alpha is None else np.array(alpha, dtype=float)
        w = np.zeros(p) if w is None else np.array(w, dtype=float)
        if sigma_sq is None:
            sigma_sq = max(float(np.var(data.y)), 1e-8)
        return cls(alpha, w, float(sigma_sq), np.array(data.y, dtype=float))

    def theta(self, prior: NeuronizedPrior) -> np.ndarray:
        return prior.activation(self.alpha - prior.alpha0) * self.w

    def resync(self, data: RegressionData, prior: NeuronizedPrior) -> None:
        self.r = data.y - data.X @ self.theta(prior)

    def copy(self) -> "ChainState":
        return ChainState(self.alpha.copy(), self.w.copy(), self.sigma_sq, self.r.copy())


@dataclass
class SamplerConfig:
    """Settings for :func:`run_chain`.

    ``time_budget`` (seconds of post-burn-in sampling) turns ``iterations``
    into an upper bound; when more draws arrive than ``max_stored`` the
    stored chain is thinned by two and the thinning interval doubled.
    ``sigma_sq_fixed`` holds the noise variance constant, which is useful
    for prior-only runs.
    """

    iterations: int = 20000
    burn_in: int = 2000
    inner_repeats: int = 10
    rw_proposal_sd: float = 2.0
    alpha_update: str = "random_walk"
    w_update: str = "auto"
    a0: float = 0.0
    b0: float = 0.0
    thin: int = 1
    seed: int | None = 0
    sigma_sq_fixed: float | None = None
    store_latent: bool = False
    track: tuple | None = None
    time_budget: float | None = None
    max_stored: int = 2 ** 16

    def __post_init__(self):
        if self.iterations < self.burn_in or self.burn_in < 0:
            raise ValueError("need iterations >= burn_in >= 0")
        if self.inner_repeats < 1:
            raise ValueError("inner_repeats must be >= 1")
        if not self.rw_proposal_sd > 0:
            raise ValueError("rw_proposal_sd must be positive")
        if self.alpha_update not in ALPHA_UPDATES:
            raise ValueError(f"alpha_update must be one of {ALPHA_UPDATES}")
        if self.w_update not in W_UPDATES:
            raise ValueError(f"w_update must be one of {W_UPDATES}")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.sigma_sq_fixed is not None and not self.sigma_sq_fixed > 0:
            raise ValueError("sigma_sq_fixed must be positive")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if self.max_stored < 2:
            raise ValueError("max_stored must be >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["track"] is not None:
            d["track"] = [int(v) for v in d["track"]]
        return d


@dataclass
class PosteriorSamples:
    """Stored draws and run diagnostics (shared by all samplers)."""

    method: str
    theta: np.ndarray
    sigma_sq: np.ndarray
    theta_mean: np.ndarray
    inclusion: np.ndarray
    track: np.ndarray
    alpha: np.ndarray | None = None
    w: np.ndarray | None = None
    accepted: int = 0
    proposed: int = 0
    iterations: int = 0
    burn_in: int = 0
    thin: int = 1
    burn_in_time: float = 0.0
    sampling_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n_stored(self) -> int:
        return self.theta.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    @property
    def time_per_iteration(self) -> float:
        done = self.iterations - self.burn_in
        return self.sampling_time / done if done > 0 else float("nan")

    def summary(self) -> dict:
        return {
            "method": self.method,
            "posterior_mean": [float(v) for v in self.theta_mean],
            "inclusion_frequency": [float(v) for v in self.inclusion],
            "sigma_sq_mean": float(np.mean(self.sigma_sq)) if self.sigma_sq.size else None,
            "acceptance_rate": None if not self.proposed else self.acceptance_rate,
            "iterations": int(self.iterations),
            "burn_in": int(self.burn_in),
            "thin": int(self.thin),
            "stored_draws": int(self.n_stored),
            "burn_in_seconds": self.burn_in_time,
            "sampling_seconds": self.sampling_time,
            "seconds_per_iteration": self.time_per_iteration,
            **{k: v for k, v in self.extra.items() if np.isscalar(v)},
        }


class SamplerError(RuntimeError):
    """Raised when the chain reaches a non-finite or degenerate state."""

    def __init__(self, message, iteration=None, snapshot=None):
        super().__init__(message)
        self.iteration = iteration
        self.snapshot = snapshot or {}


# ---------------------------------------------------------------------------
# helpers

def _effective_tau2(prior: NeuronizedPrior, sigma_sq: float) -> float:
    # the kernels assume w ~ N(0, sigma^2 tau2)
    return prior.tau_w_sq if prior.sigma_scaled else prior.tau_w_sq / sigma_sq


def _coordinate_suffstats(j, data, state, prior):
    """(r_j . X_j, ||X_j||^2, T_j) with r_j the residual excluding predictor j."""
    T = float(prior.activation(state.alpha[j] - prior.alpha0))
    xj = data.X[:, j]
    r_j = state.r + xj * (T * state.w[j])
    return float(r_j @ xj), float(data.col_sq[j]), T, r_j


def choose_w_update(prior: NeuronizedPrior, data: RegressionData, requested: str = "auto") -> str:
    if requested != "auto":
        if requested == "block_relu" and prior.activation.kind != "relu":
            raise ValueError("block_relu needs a ReLU activation")
        return requested
    if prior.activation.kind == "relu":
        return "block_relu"
    if data.p > 2 * data.n:
        return "fast_np"
    return "full"


# ---------------------------------------------------------------------------
# single-step operations

def log_marginal_alpha_target(alpha_j: float, j: int, data: RegressionData, state: ChainState,
                              prior: NeuronizedPrior) -> float:
    """Log target of ``alpha_j`` with ``w_j`` integrated out.

    Equals ``-log(v_j)/2 - alpha_j^2/2 + v_j m_j^2/(2 sigma^2)`` where
    ``v_j = ||X_j||^2 T^2 + 1/tau_w^2`` and ``m_j = r_j' X_j T / v_j``.  The
    residual in ``state`` is the full one; predictor ``j``'s current
    contribution is removed internally.
    """
    s, c, _, _ = _coordinate_suffstats(j, data, state, prior)
    tau2 = _effective_tau2(prior, state.sigma_sq)
    kind, params, knots, coefs = prior.activation.kernel_args
    return float(K.alpha_target(float(alpha_j), s, c, state.sigma_sq, 1.0 / tau2, prior.alpha0,
                                kind, params, knots, coefs))


def _set_coordinate(j, a, wj, r_j, data, state, prior):
    state.alpha[j] = a
    state.w[j] = wj
    T = float(prior.activation(a - prior.alpha0))
    state.r = r_j - data.X[:, j] * (T * wj)


def rwmh_alpha_step(j: int, state: ChainState, data: RegressionData, prior: NeuronizedPrior,
                    config: SamplerConfig, rng) -> tuple[float, float, int]:
    """``M`` random-walk moves for ``alpha_j`` then a draw of ``w_j``.

    Updates ``state`` in place and returns ``(alpha_j, w_j, n_accepted)``.
    """
    s, c, _, r_j = _coordinate_suffstats(j, data, state, prior)
    tau2 = _effective_tau2(prior, state.sigma_sq)
    acc = np.zeros(2, dtype=np.int64)
    a, wj, _ = K.rw_update(float(state.alpha[j]), s, c, state.sigma_sq, tau2, prior.alpha0,
                           *prior.activation.kernel_args, config.inner_repeats,
                           config.rw_proposal_sd, rng, acc)
    _set_coordinate(j, a, wj, r_j, data, state, prior)
    return a, wj, int(acc[0])


def exact_conditional_params(j: int, data: RegressionData, state: ChainState,
                             prior: NeuronizedPrior) -> tuple[float, float, float]:
    """``(kappa, slab_mean, slab_sd)`` of ``alpha_j | w_j`` under ReLU.

    The conditional is ``kappa * N(0,1) truncated to (-inf, alpha0)`` plus
    ``(1 - kappa) * N(slab_mean, slab_sd^2) truncated to (alpha0, inf)``.
    """
    if prior.activation.kind != "relu":
        raise ValueError("the exact conditional needs a ReLU activation")
    s, c, _, _ = _coordinate_suffstats(j, data, state, prior)
    lk, _, mean, sd = K.exact_params(s, c, float(state.w[j]), state.sigma_sq, prior.alpha0)
    return math.exp(lk), mean, sd


def exact_conditional_cdf(x, kappa: float, mean: float, sd: float, alpha0: float):
    """CDF of the two-component truncated-normal mixture."""
    from scipy.special import log_ndtr, ndtr

    x = np.asarray(x, dtype=float)
    lower = ndtr(np.minimum(x, alpha0)) / ndtr(alpha0)
    # slab part as 1 - S(x)/S(alpha0) with survival functions in log space,
    # which stays accurate when alpha0 lies far in the slab's upper tail
    log_s0 = log_ndtr(-(alpha0 - mean) / sd)
    upper = np.where(x > alpha0,
                     -np.expm1(log_ndtr(-(np.maximum(x, alpha0) - mean) / sd) - log_s0), 0.0)
    return kappa * lower + (1.0 - kappa) * upper


def exact_alpha_step_relu(j: int, state: ChainState, data: RegressionData,
                          prior: NeuronizedPrior, rng) -> float:
    """Draw ``alpha_j`` from its exact conditional given ``w_j`` (ReLU only)."""
    if prior.activation.kind != "relu":
        raise ValueError("the exact conditional needs a ReLU activation")
    s, c, _, r_j = _coordinate_suffstats(j, data, state, prior)
    a = K.exact_draw(s, c, float(state.w[j]), state.sigma_sq, prior.alpha0,
                     rng.random(), rng.random())
    _set_coordinate(j, a, float(state.w[j]), r_j, data, state, prior)
    return a


def gibbs_w(state: ChainState, data: RegressionData, prior: NeuronizedPrior,
            strategy: str = "auto", rng=None) -> np.ndarray:
    """Draw ``w`` from ``N(mu, sigma^2 Sigma)`` and refresh the residual.

    ``Sigma = (D X'X D + I/tau_w^2)^-1`` and ``mu = Sigma D X'y`` with
    ``D = diag(T(alpha - alpha0))``.
    """
    rng = np.random.default_rng(rng)
    strategy = choose_w_update(prior, data, strategy)
    T = np.ascontiguousarray(prior.activation(state.alpha - prior.alpha0), dtype=float)
    tau2 = _effective_tau2(prior, state.sigma_sq)
    XtX = data.X.T @ data.X if strategy != "fast_np" else np.zeros((1, 1))
    Xty = data.X.T @ data.y
    ok = K.update_w(_W_CODE[strategy], data.X, data.y, XtX, Xty, T, state.w, state.sigma_sq,
                    tau2, rng)
    if not ok:
        raise SamplerError("w update: conditional covariance is not positive definite")
    K.recompute_residual(data.X, data.y, T, state.w, state.r)
    return state.w


def gibbs_sigma_sq(state: ChainState, data: RegressionData, prior: NeuronizedPrior,
                   a0: float = 0.0, b0: float = 0.0, rng=None) -> float:
    """Draw ``sigma^2`` from Inv-Gamma((n+p)/2 + a0, ||r||^2/2 + w'w/(2 tau_w^2) + b0)."""
    if not prior.sigma_scaled:
        raise ValueError("the sigma^2 update assumes w ~ N(0, sigma^2 tau_w^2)")
    rng = np.random.default_rng(rng)
    state.sigma_sq = float(K.draw_sigma2(state.r, state.w, prior.tau_w_sq, a0, b0, rng))
    return state.sigma_sq


def drive_chain(advance, config, cap: int, pos: np.ndarray, buffers: list):
    """Run burn-in and sampling through ``advance(n_iter, it0, thin)``.

    Shared by every sampler in the package.  ``pos[0]`` is the next free
    buffer row, maintained by ``advance``.  With ``config.time_budget`` set
    the chain runs in blocks of roughly 20 ms until the budget is spent;
    when the buffers fill, every second stored row is dropped and the
    thinning interval doubles.

    Returns ``(iterations_done, final_thin, burn_in_seconds, sampling_seconds)``.
    """
    thin = config.thin
    advance(0, 0, thin)  # compile before any timing
    t0 = time.perf_counter()
    advance(config.burn_in, 0, thin)
    t1 = time.perf_counter()
    it = config.burn_in
    if config.time_budget is None:
        advance(config.iterations - config.burn_in, it, thin)
        return config.iterations, thin, t1 - t0, time.perf_counter() - t1
    block = 1
    t2 = t1
    while t2 - t1 < config.time_budget and it < config.iterations:
        if pos[0] >= cap:
            m = pos[0] // 2
            for b in buffers:
                b[:m] = b[1::2][:m]
            pos[0] = m
            thin *= 2
        # stay on storage iterations that are multiples of the new interval
        room = (cap - pos[0]) * thin - ((it - config.burn_in) % thin)
        n_iter = int(max(1, min(block, room, config.iterations - it)))
        ts = time.perf_counter()
        advance(n_iter, it, thin)
        it += n_iter
        t2 = time.perf_counter()
        per = (t2 - ts) / n_iter
        block = max(1, int(0.02 / per)) if per > 0 else block * 2
    return it, thin, t1 - t0, t2 - t1


# ---------------------------------------------------------------------------
# full chain

def run_chain(data: RegressionData, prior: NeuronizedPrior, config: SamplerConfig,
              init: ChainState | None = None, rng=None) -> PosteriorSamples:
    """Run one chain and return its stored draws.

    ``rng`` may be a ``numpy.random.Generator``; otherwise one is built
    from ``config.seed``.
    """
    if config.alpha_update == "exact_relu" and prior.activation.kind != "relu":
        raise ValueError("exact_relu needs a ReLU activation")
    if not prior.sigma_scaled and config.sigma_sq_fixed is None:
        raise ValueError("an unscaled weight prior needs sigma_sq_fixed")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(config.seed)
    strategy = choose_w_update(prior, data, config.w_update)
    state = (init.copy() if init is not None
             else ChainState.initial(data, config.sigma_sq_fixed))
    if config.sigma_sq_fixed is not None:
        state.sigma_sq = float(config.sigma_sq_fixed)
    tau2 = _effective_tau2(prior, state.sigma_sq)
    kind, params, knots, coefs = prior.activation.kernel_args
    T = np.ascontiguousarray(prior.activation(state.alpha - prior.alpha0), dtype=float)
    X, y = data.X, np.ascontiguousarray(data.y)
    XtX = np.ascontiguousarray(X.T @ X) if strategy != "fast_np" else np.zeros((1, 1))
    Xty = X.T @ y
    state.r = y - X @ (T * state.w)
    p = data.p
    track = np.arange(p) if config.track is None else np.asarray(config.track, dtype=np.int64)
    exact = config.alpha_update == "exact_relu"
    sig2 = np.array([state.sigma_sq])
    acc = np.zeros(2, dtype=np.int64)
    status = np.zeros(2, dtype=np.int64)
    theta_sum = np.zeros(p)
    incl_sum = np.zeros(p)
    pos = np.zeros(2, dtype=np.int64)

    if config.time_budget is None:
        cap = (config.iterations - config.burn_in) // config.thin
    else:
        cap = config.max_stored
    nt = track.size
    theta_buf = np.zeros((cap, nt))
    lat = config.store_latent
    alpha_buf = np.zeros((cap if lat else 1, nt))
    w_buf = np.zeros((cap if lat else 1, nt))
    sig_buf = np.zeros(cap)
    thin = config.thin

    def advance(n_iter, it0, thin):
        K.run_iterations(n_iter, it0, config.burn_in, thin, X, y, XtX, Xty, data.col_sq,
                         state.alpha, state.w, T, state.r, sig2, tau2, prior.alpha0,
                         kind, params, knots, coefs, config.inner_repeats,
                         config.rw_proposal_sd, exact, _W_CODE[strategy], config.a0, config.b0,
                         config.sigma_sq_fixed is not None, rng, acc, track, theta_buf,
                         alpha_buf, w_buf, sig_buf, lat, pos, theta_sum, incl_sum, status)
        if status[0]:
            what = "factorization failure" if status[0] == 1 else "non-finite state"
            raise SamplerError(
                f"{what} at iteration {status[1]}", int(status[1]),
                {"alpha": state.alpha.copy(), "w": state.w.copy(), "sigma_sq": float(sig2[0])})

    bufs = [theta_buf, sig_buf] + ([alpha_buf, w_buf] if lat else [])
    it, thin, t_burn, t_sample = drive_chain(advance, config, cap, pos, bufs)
    S = int(min(pos[0], cap))
    events = max(int(pos[1]), 1)
    samples = PosteriorSamples(
        method="neuronized-" + ("exact" if exact else "rw"),
        theta=theta_buf[:S].copy(),
        sigma_sq=sig_buf[:S].copy(),
        theta_mean=theta_sum / events,
        inclusion=incl_sum / events,
        track=track,
        alpha=alpha_buf[:S].copy() if lat else None,
        w=w_buf[:S].copy() if lat else None,
        accepted=int(acc[0]),
        proposed=int(acc[1]),
        iterations=it,
        burn_in=config.burn_in,
        thin=thin,
        burn_in_time=t_burn,
        sampling_time=t_sample,
        extra={"w_update": strategy, "final_state": state},
    )
    state.sigma_sq = float(sig2[0])
    return samples


def run_chains(data: RegressionData, prior: NeuronizedPrior, config: SamplerConfig,
               n_chains: int, seed=None, threads: int = 1) -> list[PosteriorSamples]:
    """Independent chains with generators spawned from one ``SeedSequence``."""
    from concurrent.futures import ThreadPoolExecutor

    ss = np.random.SeedSequence(config.seed if seed is None else seed)
    gens = [np.random.default_rng(c) for c in ss.spawn(n_chains)]
    if threads <= 1:
        return [run_chain(data, prior, config, rng=g) for g in gens]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(lambda g: run_chain(data, prior, config, rng=g), gens))

"""Warm-started coordinate ascent for the posterior mode.

Each coordinate update maximises over ``alpha_j`` with ``w_j`` set to its
conditional mean ``m_j``.  The ``alpha_j`` search is split at ``alpha0``
(where a ReLU activation switches on) into two brackets, each scanned on a
grid and refined with Brent's method; the better of the two maxima wins.

By default the ``alpha_j`` objective is the joint log posterior maximised
over ``w_j``::

    -alpha_j^2 / 2 + s^2 T^2 / (2 sigma^2 v),   v = c T^2 + 1 / tau^2,

so every update is an exact coordinate-ascent step on

    -||y - X theta||^2 / (2 sigma^2) - ||alpha||^2 / 2 - ||w||^2 / (2 sigma^2 tau^2).

``objective="marginal"`` instead uses the collapsed target of the sampler
(the same expression with ``-log(v) / 2`` added).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numba as nb
import numpy as np

from . import _kernels as K
from .activations import act_eval
from .data import RegressionData
from .priors import NeuronizedPrior

SCHEDULE_KINDS = ("alpha0_path", "tau_path")
OBJECTIVES = ("profile", "marginal")
BOUND = 8.0
_GOLD = 0.3819660112501051


# ---------------------------------------------------------------------------
# compiled 1-D search

@nb.njit(cache=True)
def _obj(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal):
    if marginal:
        return K.alpha_target(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs)
    return K.profile_target(a, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs)


@nb.njit(cache=True)
def _brent_max(lo, hi, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal,
               xtol):
    """Brent's parabolic/golden-section search for a maximum on [lo, hi]."""
    a, b = lo, hi
    x = w = v = a + _GOLD * (b - a)
    fx = -_obj(x, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
    fw = fv = fx
    d = e = 0.0
    for _ in range(200):
        xm = 0.5 * (a + b)
        tol1 = xtol * abs(x) + 1e-12
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        parabolic = False
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            pp = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                pp = -pp
            q = abs(q)
            if abs(pp) < abs(0.5 * q * e) and pp > q * (a - x) and pp < q * (b - x):
                e = d
                d = pp / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if xm >= x else -tol1
                parabolic = True
        if not parabolic:
            e = (a - x) if x >= xm else (b - x)
            d = _GOLD * e
        u = x + d if abs(d) >= tol1 else x + (tol1 if d > 0 else -tol1)
        fu = -_obj(u, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, fv = w, fw
            w, fw = x, fx
            x, fx = u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv = w, fw
                w, fw = u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, -fx


@nb.njit(cache=True)
def _region_max(lo, hi, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal,
                n_grid):
    """Grid prescan over [lo, hi] followed by a Brent refinement."""
    if hi - lo <= 1e-12:
        return lo, _obj(lo, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
    h = (hi - lo) / (n_grid - 1)
    best_i = 0
    best_f = -np.inf
    n_bad = 0
    for i in range(n_grid):
        f = _obj(lo + i * h, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
        if not math.isfinite(f):
            n_bad += 1
            continue
        if f > best_f:
            best_f = f
            best_i = i
    if n_bad == n_grid:
        return lo, -np.inf
    best_x = lo + best_i * h
    a = max(lo, best_x - h)
    b = min(hi, best_x + h)
    x, f = _brent_max(a, b, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs,
                      marginal, 1e-10)
    if math.isfinite(f) and f > best_f:
        return x, f
    return best_x, best_f


@nb.njit(cache=True)
def _best_alpha(a_cur, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal,
                n_grid):
    lo1, hi1 = -BOUND, min(alpha0, BOUND)
    lo2, hi2 = max(alpha0, -BOUND), BOUND
    if kind == 0 and not marginal:
        # T = 0 below alpha0: the objective there is -a^2/2
        x1 = min(0.0, alpha0)
        f1 = -0.5 * x1 * x1
    elif kind == 0:
        x1 = min(0.0, alpha0)
        f1 = _obj(x1, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
    else:
        x1, f1 = _region_max(lo1, hi1, s, c, sigma2, inv_tau2, alpha0, kind, params, knots,
                             coefs, marginal, n_grid)
    x2, f2 = _region_max(lo2, hi2, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs,
                         marginal, n_grid)
    if f1 > f2:
        x, f = x1, f1
    elif f2 > f1:
        x, f = x2, f2
    else:
        # tie: stay on the side of alpha0 holding the current value
        x, f = (x1, f1) if a_cur <= alpha0 else (x2, f2)
    f_cur = _obj(a_cur, s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs, marginal)
    if not (f > f_cur):
        return a_cur
    return x


@nb.njit(cache=True)
def _coord_value(r2, s, c, T, w, a, sigma2, tau2):
    # joint log posterior restricted to coordinate j, given r_j with ||r_j||^2 = r2
    tw = T * w
    return (-(r2 - 2.0 * tw * s + tw * tw * c) / (2.0 * sigma2) - 0.5 * a * a
            - w * w / (2.0 * sigma2 * tau2))


@nb.njit(cache=True)
def _update_coordinate(j, X, col_sq, r, alpha, w, T, sigma2, tau2, alpha0, kind, params,
                       knots, coefs, marginal, n_grid):
    """Update (alpha_j, w_j) in place; return the change in the joint log posterior."""
    n = X.shape[0]
    s = K.coordinate_stats(X, j, r, T[j] * w[j])
    c = col_sq[j]
    r2 = 0.0
    for i in range(n):
        r2 += r[i] * r[i]
    before = _coord_value(r2, s, c, T[j], w[j], alpha[j], sigma2, tau2)
    inv_tau2 = 1.0 / tau2
    a = _best_alpha(alpha[j], s, c, sigma2, inv_tau2, alpha0, kind, params, knots, coefs,
                    marginal, n_grid)
    t = act_eval(a - alpha0, kind, params, knots, coefs)
    _, _, m, _ = K.vm_parts(t, c, s, inv_tau2)
    after = _coord_value(r2, s, c, t, m, a, sigma2, tau2)
    if not marginal and after < before:
        # round-off guard: never accept a decrease in the joint objective
        t = T[j]
        a = alpha[j]
        m = w[j]
        after = before
    alpha[j] = a
    w[j] = m
    T[j] = t
    tw = t * m
    if tw != 0.0:
        for i in range(n):
            r[i] -= X[i, j] * tw
    return after - before


@nb.njit(cache=True)
def _map_sweep(X, col_sq, r, alpha, w, T, sigma2, tau2, alpha0, kind, params, knots, coefs,
               marginal, n_grid):
    """One pass over all coordinates; returns the smallest per-update change."""
    lowest = np.inf
    for j in range(X.shape[1]):
        d = _update_coordinate(j, X, col_sq, r, alpha, w, T, sigma2, tau2, alpha0, kind,
                               params, knots, coefs, marginal, n_grid)
        if d < lowest:
            lowest = d
    return lowest


# ---------------------------------------------------------------------------
# public API

@dataclass(frozen=True)
class WarmStartSchedule:
    """Ordered hyperparameter values visited by :func:`run_map`.

    ``alpha0_path`` values are biases ``alpha0`` (nondecreasing from 0);
    ``tau_path`` values are weight variances ``tau_w^2`` (nonincreasing).
    """

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"kind must be one of {SCHEDULE_KINDS}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("schedule needs at least one value")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("schedule values must be finite")
        if self.kind == "tau_path" and min(vals) <= 0:
            raise ValueError("tau_w^2 values must be positive")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def prior_at(self, prior: NeuronizedPrior, k: int) -> NeuronizedPrior:
        if self.kind == "alpha0_path":
            return replace(prior, alpha0=self.values[k])
        return replace(prior, tau_w_sq=self.values[k])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": list(self.values)}


def build_schedule(prior: NeuronizedPrior, target: float | None = None, kind: str | None = None,
                   length: int = 20) -> WarmStartSchedule:
    """Warm-start path from weak shrinkage to the target hyperparameter.

    ``alpha0_path`` is ``length`` equally spaced biases from 0 to ``target``.
    ``tau_path`` is ``p^C`` with ``C`` equally spaced from 0 to
    ``log(target) / log(p)``, i.e. a geometric sequence from 1 to ``target``;
    it is computed directly as such so that it does not depend on ``p``.
    By default ``kind`` is ``alpha0_path`` for ReLU and ``tau_path``
    otherwise, and ``target`` is the prior's own value.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if kind is None:
        kind = "alpha0_path" if prior.activation.kind == "relu" else "tau_path"
    if kind == "alpha0_path":
        target = prior.alpha0 if target is None else float(target)
        if target < 0:
            raise ValueError("alpha0_path target must be >= 0")
        vals = np.linspace(0.0, target, length) if length > 1 else np.array([target])
    elif kind == "tau_path":
        target = prior.tau_w_sq if target is None else float(target)
        if not 0 < target <= 1:
            raise ValueError("tau_path target must lie in (0, 1]")
        vals = np.geomspace(1.0, target, length) if length > 1 else np.array([target])
    else:
        raise ValueError(f"kind must be one of {SCHEDULE_KINDS}")
    return WarmStartSchedule(kind, tuple(vals))


def sigma2_plugin(data: RegressionData, max_fraction: float = 0.1) -> float:
    """Noise variance from least squares on the predictors most correlated with y.

    Uses the top ``k = min(p, floor(max_fraction * n), n - 1)`` predictors by
    absolute marginal correlation and returns ``RSS / n``.
    """
    n, p = data.n, data.p
    if n < 2:
        raise ValueError("need n >= 2")
    X, y = np.asarray(data.X), np.asarray(data.y)
    k = int(min(p, math.floor(max_fraction * n), n - 1))
    if k <= 0:
        return float(y @ y) / n
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    score = np.abs(Xc.T @ yc) / np.where(norms > 0, norms, np.inf)
    top = np.argsort(-score, kind="stable")[:k]
    Xs = X[:, top]
    G = Xs.T @ Xs
    b = Xs.T @ y
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(G + 1e-8 * np.eye(k))
    coef = np.linalg.solve(L.T, np.linalg.solve(L, b))
    res = y - Xs @ coef
    return float(res @ res) / n


def log_posterior(data: RegressionData, prior: NeuronizedPrior, alpha, w,
                  sigma_sq: float) -> float:
    """Joint log posterior of (alpha, w) at fixed ``sigma_sq``, up to a constant."""
    alpha = np.asarray(alpha, dtype=float)
    w = np.asarray(w, dtype=float)
    tau2 = _effective_tau2(prior, sigma_sq)
    r = data.y - data.X @ (prior.activation(alpha - prior.alpha0) * w)
    return float(-(r @ r) / (2 * sigma_sq) - 0.5 * (alpha @ alpha)
                 - (w @ w) / (2 * sigma_sq * tau2))


def _effective_tau2(prior, sigma_sq):
    return prior.tau_w_sq if prior.sigma_scaled else prior.tau_w_sq / sigma_sq


@dataclass
class MapConfig:
    """Settings for :func:`run_map`.

    ``init`` is ``"zeros"``, ``"random"`` (standard normal ``alpha`` and
    ``w``, drawn from ``seed``) or a pair ``(alpha, w)``.
    """

    tol: float = 1e-8
    max_sweeps: int = 500
    sigma_sq: float | None = None
    objective: str = "profile"
    init: object = "zeros"
    seed: int | None = 0
    n_grid: int = 41

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not self.tol >= 0:
            raise ValueError("tol must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.n_grid < 3:
            raise ValueError("n_grid must be >= 3")
        if self.sigma_sq is not None and not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.init, str):
            d["init"] = "explicit"
        return d


@dataclass
class MapResult:
    theta_hat: np.ndarray
    alpha: np.ndarray
    w: np.ndarray
    objective: float
    sigma_sq: float
    schedule: WarmStartSchedule
    stage_traces: list = field(default_factory=list)
    stage_theta: np.ndarray | None = None
    sweeps: list = field(default_factory=list)
    min_update_change: float = np.inf

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.theta_hat != 0.0)

    def to_dict(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat],
            "support": [int(j) for j in self.support],
            "objective": self.objective,
            "objective_trace": [[float(v) for v in t] for t in self.stage_traces],
            "sigma_sq": self.sigma_sq,
            "schedule": self.schedule.to_dict(),
            "sweeps": [int(v) for v in self.sweeps],
            "min_update_change": float(self.min_update_change),
        }


def _initial(config: MapConfig, p: int):
    if isinstance(config.init, str):
        if config.init == "zeros":
            return np.zeros(p), np.zeros(p)
        if config.init == "random":
            rng = np.random.default_rng(config.seed)
            return rng.standard_normal(p), rng.standard_normal(p)
        raise ValueError(f"unknown init {config.init!r}")
    a, w = config.init
    a = np.array(a, dtype=float)
    w = np.array(w, dtype=float)
    if a.shape != (p,) or w.shape != (p,):
        raise ValueError(f"initial alpha and w must have length {p}")
    return a, w


def optimize_alpha_j(j: int, alpha, w, data: RegressionData, prior: NeuronizedPrior,
                     sigma_sq: float, objective: str = "profile", n_grid: int = 41):
    """Best ``(alpha_j, w_j)`` for one coordinate with the others held fixed.

    Returns ``(alpha_j, w_j)``; the input arrays are not modified.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    alpha = np.array(alpha, dtype=float)
    w = np.array(w, dtype=float)
    T = np.ascontiguousarray(prior.activation(alpha - prior.alpha0), dtype=float)
    r = data.y - data.X @ (T * w)
    kind, params, knots, coefs = prior.activation.kernel_args
    _update_coordinate(j, data.X, data.col_sq, r, alpha, w, T, sigma_sq,
                       _effective_tau2(prior, sigma_sq), prior.alpha0, kind, params, knots,
                       coefs, objective == "marginal", n_grid)
    return float(alpha[j]), float(w[j])


def run_map(data: RegressionData, prior: NeuronizedPrior,
            schedule: WarmStartSchedule | None = None,
            config: MapConfig | None = None) -> MapResult:
    """Warm-started coordinate ascent through ``schedule``.

    Each stage sweeps all coordinates until the relative improvement of the
    joint log posterior drops below ``config.tol`` or ``config.max_sweeps``
    is reached, and hands its optimum to the next stage.  The noise variance
    stays fixed at ``config.sigma_sq`` (by default :func:`sigma2_plugin`).
    """
    config = config or MapConfig()
    schedule = schedule or build_schedule(prior)
    sigma2 = float(config.sigma_sq) if config.sigma_sq is not None else sigma2_plugin(data)
    if not sigma2 > 0:
        # exact fit: fall back to a tiny variance rather than dividing by zero
        sigma2 = 1e-12 * max(1.0, float(data.y @ data.y) / data.n)
    alpha, w = _initial(config, data.p)
    kind, params, knots, coefs = prior.activation.kernel_args
    X, y = data.X, np.ascontiguousarray(data.y)
    marginal = config.objective == "marginal"
    traces, sweeps = [], []
    stage_theta = np.empty((len(schedule), data.p))
    lowest = np.inf
    obj = -np.inf
    for k in range(len(schedule)):
        pr = schedule.prior_at(prior, k)
        tau2 = _effective_tau2(pr, sigma2)
        T = np.ascontiguousarray(pr.activation(alpha - pr.alpha0), dtype=float)
        r = y - X @ (T * w)
        obj = log_posterior(data, pr, alpha, w, sigma2)
        trace = [obj]
        for _ in range(config.max_sweeps):
            d = _map_sweep(X, data.col_sq, r, alpha, w, T, sigma2, tau2, pr.alpha0, kind,
                           params, knots, coefs, marginal, config.n_grid)
            lowest = min(lowest, d)
            r = y - X @ (T * w)
            new = float(-(r @ r) / (2 * sigma2) - 0.5 * (alpha @ alpha)
                        - (w @ w) / (2 * sigma2 * tau2))
            trace.append(new)
            done = abs(new - obj) < config.tol * max(1.0, abs(obj))
            obj = new
            if done:
                break
        traces.append(np.array(trace))
        sweeps.append(len(trace) - 1)
        stage_theta[k] = T * w
    return MapResult(
        theta_hat=stage_theta[-1].copy(),
        alpha=alpha,
        w=w,
        objective=obj,
        sigma_sq=sigma2,
        schedule=schedule,
        stage_traces=traces,
        stage_theta=stage_theta,
        sweeps=sweeps,
        min_update_change=lowest,
    )

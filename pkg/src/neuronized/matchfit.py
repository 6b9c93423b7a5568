"""Fit a spline activation so the induced prior matches a target prior.

The weight and scale draws ``(alpha_i, w_i)`` and the target draws are
generated once and frozen, so the distance ``D(phi)`` between the induced
sample ``T_phi(alpha_i - alpha0) * w_i`` and the target sample is a
deterministic function of the spline coefficients ``phi``.  Because the
spline is linear in ``phi``, the induced sample is ``(B phi) * w`` for a
fixed design matrix ``B`` and a one-coefficient move is an O(S) update.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

from .activations import CHECK_GRID, ActivationSpec, identity_spline, spline, spline_design_matrix
from .priors import laplace_scale, sample_horseshoe

DISTANCES = ("order_stat_L2", "KS", "Wasserstein1")
OPTIMIZERS = ("anneal", "grid")
_DIST_CODE = {"order_stat_L2": 0, "KS": 1, "Wasserstein1": 2}


class MatchWarning(UserWarning):
    """The optimizer could not improve on its starting point."""


@dataclass(frozen=True)
class MatchConfig:
    """Settings for :func:`fit_activation`.

    The spline has ``basis_count`` coefficients on ``basis_count - 2``
    equally spaced knots spanning ``knot_range`` (in units of
    ``alpha - alpha0``).  ``initial_temperature=None`` starts the annealer
    at 5% of the initial distance.  ``snap_prob`` is the probability that
    an annealing move sets the chosen coefficient and all coefficients to
    its left exactly to zero instead of perturbing it, which is how flat
    zero stretches (exact zeros of the prior) become reachable.  With
    ``polish`` the annealer's best point is refined by the coordinate grid
    search used by ``optimizer="grid"``.
    """

    sample_size: int = 100_000
    basis_count: int = 9
    knot_range: tuple = (-3.0, 3.0)
    distance: str = "order_stat_L2"
    optimizer: str = "anneal"
    initial_temperature: float | None = None
    cooling: float = 0.995
    steps: int = 50_000
    step_scale: float = 0.1
    snap_prob: float = 0.1
    polish: bool = True
    alpha0: float = 0.0
    tau_w_sq: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 10_000:
            raise ValueError("sample_size must be >= 10^4")
        if self.basis_count < 4:
            raise ValueError("basis_count must be >= 4")
        lo, hi = self.knot_range
        if not hi > lo:
            raise ValueError("knot_range must be increasing")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling must lie in (0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if not 0 <= self.snap_prob <= 1:
            raise ValueError("snap_prob must lie in [0, 1]")
        if not self.tau_w_sq > 0:
            raise ValueError("tau_w_sq must be positive")

    @property
    def knots(self) -> np.ndarray:
        return np.linspace(self.knot_range[0], self.knot_range[1], self.basis_count - 2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["knot_range"] = list(self.knot_range)
        return d


@dataclass
class MatchResult:
    activation: ActivationSpec
    distance: float
    initial_distance: float
    improved: bool
    accepted: int = 0

    def __iter__(self):
        # allows ``spec, dist = fit_activation(...)``
        return iter((self.activation, self.distance))


# ---------------------------------------------------------------------------
# distances on frozen samples

@nb.njit(cache=True)
def _ks_sorted(a, b):
    na, nb_ = a.size, b.size
    i = j = 0
    best = 0.0
    while i < na and j < nb_:
        x = min(a[i], b[j])
        while i < na and a[i] <= x:
            i += 1
        while j < nb_ and b[j] <= x:
            j += 1
        d = abs(i / na - j / nb_)
        if d > best:
            best = d
    return best


@nb.njit(cache=True)
def _dist_sorted(a, b, code):
    if code == 1:
        return _ks_sorted(a, b)
    tot = 0.0
    if code == 0:
        for i in range(a.size):
            e = a[i] - b[i]
            tot += e * e
        return tot
    for i in range(a.size):
        tot += abs(a[i] - b[i])
    return tot / a.size


@nb.njit(cache=True)
def _dist(theta, target_sorted, code):
    return _dist_sorted(np.sort(theta), target_sorted, code)


@nb.njit(cache=True)
def _monotone_after(tgrid, gcol, delta):
    prev = tgrid[0] + delta * gcol[0]
    for i in range(1, tgrid.size):
        v = tgrid[i] + delta * gcol[i]
        if v - prev < -1e-12 * max(1.0, abs(v)):
            return False
        prev = v
    return True


@nb.njit(cache=True)
def _anneal(Bw, G, target_sorted, coefs, code, steps, temp0, cooling, step_sd, snap_prob, rng):
    """Simulated annealing over spline coefficients; returns the best visited.

    A move either perturbs one coefficient by ``N(0, step_sd^2)`` or, with
    probability ``snap_prob``, zeroes the chosen coefficient and all those
    to its left, which creates a flat zero stretch of the activation.
    Non-monotone candidates are rejected.
    """
    S, K = Bw.shape
    theta = np.zeros(S)
    for k in range(K):
        for i in range(S):
            theta[i] += Bw[i, k] * coefs[k]
    tgrid = G @ coefs
    cur = _dist(theta, target_sorted, code)
    best = cur
    best_coefs = coefs.copy()
    temp = temp0
    accepted = 0
    new = np.empty(S)
    dgrid = np.empty(tgrid.size)
    delta = np.zeros(K)
    for _ in range(steps):
        k = rng.integers(0, K)
        snap = rng.random() < snap_prob
        delta[:] = 0.0
        if snap:
            for m in range(k + 1):
                delta[m] = -coefs[m]
        else:
            delta[k] = step_sd * rng.standard_normal()
        u = rng.random()
        changed = False
        for m in range(K):
            if delta[m] != 0.0:
                changed = True
        if changed:
            dgrid[:] = tgrid
            for m in range(k + 1 if snap else K):
                if delta[m] != 0.0:
                    for i in range(tgrid.size):
                        dgrid[i] += delta[m] * G[i, m]
            ok = True
            for i in range(1, dgrid.size):
                if dgrid[i] - dgrid[i - 1] < -1e-12 * max(1.0, abs(dgrid[i])):
                    ok = False
                    break
            if ok:
                new[:] = theta
                for m in range(K):
                    if delta[m] != 0.0:
                        for i in range(S):
                            new[i] += delta[m] * Bw[i, m]
                d = _dist(new, target_sorted, code)
                if d <= cur or (temp > 0.0 and u < math.exp(-(d - cur) / temp)):
                    for m in range(K):
                        if snap and m <= k:
                            coefs[m] = 0.0
                        else:
                            coefs[m] += delta[m]
                    theta[:] = new
                    tgrid[:] = dgrid
                    cur = d
                    accepted += 1
                    if d < best:
                        best = d
                        best_coefs[:] = coefs
        temp *= cooling
    return best_coefs, accepted


# ---------------------------------------------------------------------------
# public API

def frozen_draws(config: MatchConfig):
    """The ``(alpha, w)`` pairs shared by every distance evaluation."""
    rng = np.random.default_rng(config.seed)
    alpha = rng.standard_normal(config.sample_size)
    w = math.sqrt(config.tau_w_sq) * rng.standard_normal(config.sample_size)
    return alpha, w


def distance(phi, fixed_draws, target_draws, config: MatchConfig) -> float:
    """Distance between the prior induced by spline coefficients ``phi`` and the target.

    ``order_stat_L2`` is the sum of squared differences of the sorted
    samples, ``KS`` the sup distance of the empirical CDFs and
    ``Wasserstein1`` the mean absolute difference of the sorted samples.
    """
    alpha, w = fixed_draws
    target = np.asarray(target_draws, dtype=float).ravel()
    if target.size != np.size(alpha) or np.size(alpha) != np.size(w):
        raise ValueError("fixed draws and target draws must have the same size")
    phi = np.asarray(phi, dtype=float)
    B = spline_design_matrix(np.asarray(alpha) - config.alpha0, config.knots)
    if phi.size != B.shape[1]:
        raise ValueError(f"phi must have {B.shape[1]} coefficients")
    theta = (B @ phi) * np.asarray(w)
    return float(_dist(theta, np.sort(target), _DIST_CODE[config.distance]))


def named_target(name: str, tau_w_sq: float = 1.0):
    """Draw functions ``f(count, rng)`` for the built-in targets.

    ``bayesian-lasso`` is the Laplace prior with variance ``tau_w_sq``;
    ``horseshoe`` is ``tau * lambda * z`` with ``tau = sqrt(tau_w_sq)``.
    """
    if name == "bayesian-lasso":
        scale = laplace_scale(tau_w_sq)
        return lambda count, rng: rng.laplace(0.0, scale, count)
    if name == "horseshoe":
        tau = math.sqrt(tau_w_sq)
        return lambda count, rng: sample_horseshoe(count, tau, rng)
    raise ValueError(f"unknown target {name!r}; choose 'bayesian-lasso' or 'horseshoe'")


def _target_sample(target, config):
    if callable(target):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        draws = np.asarray(target(config.sample_size, rng), dtype=float).ravel()
    else:
        draws = np.asarray(target, dtype=float).ravel()
    if draws.size != config.sample_size:
        raise ValueError(f"expected {config.sample_size} target draws, got {draws.size}")
    if not np.all(np.isfinite(draws)):
        raise ValueError("target draws must be finite")
    return draws


def _grid_search(Bw, G, target_sorted, coefs, code, step, max_rounds=100, width=5):
    """Cyclic coordinate search over a shrinking grid of coefficient moves.

    For each coefficient the candidates are ``step * (-width..width)`` and a
    zero-prefix move (this coefficient and all to its left set to zero); the
    best monotone candidate is taken.  The step halves whenever a full cycle
    brings no improvement.
    """
    S, K = Bw.shape
    theta = Bw @ coefs
    tgrid = G @ coefs
    cur = float(_dist(theta, target_sorted, code))
    for _ in range(max_rounds):
        improved = False
        for k in range(K):
            best_d, best_c = cur, None
            moves = [coefs + np.eye(K)[k] * step * m for m in range(-width, width + 1) if m]
            moves.append(np.where(np.arange(K) <= k, 0.0, coefs))
            for c in moves:
                delta = c - coefs
                if not np.any(delta):
                    continue
                g = tgrid + G @ delta
                if np.any(np.diff(g) < -1e-12 * np.maximum(1.0, np.abs(g[1:]))):
                    continue
                d = float(_dist(theta + Bw @ delta, target_sorted, code))
                if d < best_d:
                    best_d, best_c = d, c
            if best_c is not None:
                coefs = best_c
                theta = Bw @ coefs
                tgrid = G @ coefs
                cur = best_d
                improved = True
        if not improved:
            step /= 2.0
            if step < 1e-4:
                break
    return coefs


def fit_activation(target, config: MatchConfig | None = None, init=None) -> MatchResult:
    """Search spline coefficients whose induced prior is closest to ``target``.

    ``target`` is a draw function ``f(count, rng)`` or an array of exactly
    ``config.sample_size`` target draws.  The search starts from ``init``
    (coefficients; default the identity spline) and only visits
    nondecreasing splines.  If nothing better than the start is found the
    start is returned and a :class:`MatchWarning` is issued.

    The returned object unpacks as ``(activation, distance)``.
    """
    config = config or MatchConfig()
    knots = config.knots
    target_sorted = np.sort(_target_sample(target, config))
    alpha, w = frozen_draws(config)
    B = spline_design_matrix(alpha - config.alpha0, knots)
    Bw = np.ascontiguousarray(B * w[:, None])
    G = np.ascontiguousarray(spline_design_matrix(CHECK_GRID, knots))
    coefs0 = (np.array(identity_spline(knots).coefs) if init is None
              else np.asarray(init, dtype=float).copy())
    if coefs0.size != B.shape[1]:
        raise ValueError(f"init must have {B.shape[1]} coefficients")
    spline(knots, coefs0)  # validates monotonicity of the start
    code = _DIST_CODE[config.distance]
    d0 = float(_dist((B @ coefs0) * w, target_sorted, code))
    step = config.step_scale * max(1.0, float(np.max(np.abs(coefs0))))
    accepted = 0
    if config.optimizer == "anneal":
        temp0 = 0.05 * d0 if config.initial_temperature is None else config.initial_temperature
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
        coefs, accepted = _anneal(Bw, G, target_sorted, coefs0.copy(), code, config.steps,
                                  temp0, config.cooling, step, config.snap_prob, rng)
        if config.polish:
            coefs = _grid_search(Bw, G, target_sorted, coefs, code, step)
    else:
        coefs = _grid_search(Bw, G, target_sorted, coefs0.copy(), code, step)
    # recompute from scratch so the reported value matches distance() exactly
    d = float(_dist((B @ coefs) * w, target_sorted, code))
    improved = d < d0
    if not improved:
        coefs, d = coefs0, d0
        warnings.warn("activation search did not improve on its starting point", MatchWarning,
                      stacklevel=2)
    return MatchResult(spline(knots, coefs), d, d0, improved, int(accepted))


def match_scale(target_draws, base_draws, distance_name: str = "KS",
                scales=None) -> tuple[float, float]:
    """Scale ``c`` minimising the distance between ``c * base_draws`` and the target.

    Used to match a one-parameter family (for example ``tau_w``) to a
    target prior.  Returns ``(best_scale, best_distance)``.  The search is a
    log-spaced grid followed by a bounded scalar refinement.
    """
    from scipy.optimize import minimize_scalar

    target = np.sort(np.asarray(target_draws, dtype=float).ravel())
    base = np.sort(np.asarray(base_draws, dtype=float).ravel())
    if target.size != base.size and distance_name != "KS":
        raise ValueError("order-statistic distances need equal sample sizes")
    code = _DIST_CODE[distance_name]

    def f(c):
        return float(_dist_sorted(c * base, target, code))

    scales = np.geomspace(0.05, 20.0, 121) if scales is None else np.asarray(scales, float)
    vals = np.array([f(c) for c in scales])
    i = int(np.argmin(vals))
    lo, hi = scales[max(i - 1, 0)], scales[min(i + 1, scales.size - 1)]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    if res.fun <= vals[i]:
        return float(res.x), float(res.fun)
    return float(scales[i]), float(vals[i])

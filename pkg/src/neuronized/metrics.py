"""Estimation and selection accuracy, effective sample size, and solution paths."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import RegressionData
from .priors import NeuronizedPrior


@dataclass(frozen=True)
class SelectionTruth:
    """True coefficient vector; the support is its set of nonzeros."""

    theta0: np.ndarray
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        t = np.asarray(self.theta0, dtype=float).ravel()
        object.__setattr__(self, "theta0", t)
        object.__setattr__(self, "support", np.flatnonzero(t != 0))

    @property
    def p(self) -> int:
        return self.theta0.size


def mse(theta_hat, theta0) -> float:
    """Mean over coordinates of the squared estimation error."""
    a = np.asarray(theta_hat, dtype=float).ravel()
    b = np.asarray(theta0, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean((a - b) ** 2))


def angle(theta_hat, theta0, return_flag: bool = False):
    """Cosine of the angle between estimate and truth.

    A zero vector gives 0; with ``return_flag`` the result is
    ``(value, degenerate)``.
    """
    a = np.asarray(theta_hat, dtype=float).ravel()
    b = np.asarray(theta0, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    na, nb = math.sqrt(a @ a), math.sqrt(b @ b)
    degenerate = na == 0 or nb == 0
    val = 0.0 if degenerate else float(np.clip((a @ b) / (na * nb), -1.0, 1.0))
    return (val, degenerate) if return_flag else val


def _mask(selected, p: int) -> np.ndarray:
    sel = np.asarray(selected)
    if sel.dtype == bool:
        if sel.size != p:
            raise ValueError(f"selection mask has length {sel.size}, expected {p}")
        return sel
    m = np.zeros(p, dtype=bool)
    m[sel.astype(np.int64)] = True
    return m


def selection_counts(selected, truth) -> dict:
    """TP, TN, FP, FN for a selection (index array or boolean mask)."""
    truth = truth if isinstance(truth, SelectionTruth) else SelectionTruth(truth)
    s = _mask(selected, truth.p)
    t = truth.theta0 != 0
    return {"TP": int(np.sum(s & t)), "TN": int(np.sum(~s & ~t)),
            "FP": int(np.sum(s & ~t)), "FN": int(np.sum(~s & t))}


def mcc_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return float((tp * tn - fp * fn) / math.sqrt(den))


def mcc(selected, truth) -> float:
    """Matthews correlation coefficient; 0 when any margin is empty."""
    c = selection_counts(selected, truth)
    return mcc_from_counts(c["TP"], c["TN"], c["FP"], c["FN"])


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at all lags, computed by FFT."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def ess(chain, return_flag: bool = False):
    """Effective sample size ``N / (1 + 2 sum rho(t))``.

    The sum runs over lags ``t = 1, 2, ...`` and stops at the first ``t``
    with ``rho(t) + rho(t + 1) <= 0``.  The result is clipped to ``(0, N]``.
    A constant chain returns ``N``; with ``return_flag`` the result is
    ``(value, degenerate)``.
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("chain must have at least 2 draws")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain contains non-finite values")
    if np.ptp(x) <= 1e-14 * max(1.0, abs(float(x[0]))):
        return (float(n), True) if return_flag else float(n)
    rho = autocorrelation(x)
    total = 0.0
    for t in range(1, n - 1):
        if rho[t] + rho[t + 1] <= 0:
            break
        total += rho[t]
    val = n / (1.0 + 2.0 * total)
    val = float(min(max(val, 1e-12), n))
    return (val, False) if return_flag else val


def ess_per_second(samples, coordinates=None) -> float:
    """Median ESS over coordinates divided by post-burn-in seconds.

    Coordinates whose stored trace is constant are skipped; ``nan`` if all
    are constant or no time was recorded.
    """
    theta = samples.theta
    cols = range(theta.shape[1]) if coordinates is None else coordinates
    vals = []
    for j in cols:
        if theta.shape[0] < 2:
            break
        e, flat = ess(theta[:, j], return_flag=True)
        if not flat:
            vals.append(e)
    if not vals or not samples.sampling_time > 0:
        return float("nan")
    return float(np.median(vals)) / samples.sampling_time


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (sup distance of empirical CDFs)."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def solution_path(method: str, data: RegressionData, hyper_grid, prior: NeuronizedPrior,
                  kind: str | None = None, sigma_sq: float | None = None,
                  sampler_config=None) -> np.ndarray:
    """Coefficient estimates along a hyperparameter grid, warm-started row to row.

    ``method`` is ``"map"`` or ``"posterior_mean"``.  ``kind`` names the
    varied hyperparameter: ``"alpha0_path"`` (bias, nondecreasing) or
    ``"tau_path"`` (``tau_w^2``, nonincreasing); the default follows the
    activation as in :func:`neuronized.map.build_schedule`.
    """
    from .map import MapConfig, WarmStartSchedule, run_map
    from .sampler import SamplerConfig, run_chain

    if kind is None:
        kind = "alpha0_path" if prior.activation.kind == "relu" else "tau_path"
    grid = np.asarray(hyper_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty grid")
    step = np.diff(grid)
    if kind == "alpha0_path" and np.any(step < 0):
        raise ValueError("alpha0 grid must be nondecreasing (weak to strong shrinkage)")
    if kind == "tau_path" and np.any(step > 0):
        raise ValueError("tau grid must be nonincreasing (weak to strong shrinkage)")
    schedule = WarmStartSchedule(kind, tuple(grid))
    if method == "map":
        res = run_map(data, prior, schedule, MapConfig(sigma_sq=sigma_sq))
        return res.stage_theta
    if method != "posterior_mean":
        raise ValueError("method must be 'map' or 'posterior_mean'")
    config = sampler_config or SamplerConfig(iterations=3000, burn_in=500)
    out = np.empty((grid.size, data.p))
    init = None
    for k in range(grid.size):
        s = run_chain(data, schedule.prior_at(prior, k), config, init=init)
        out[k] = s.theta_mean
        init = s.extra["final_state"]
    return out


def write_path_csv(path, grid, rows, names=None):
    """Write a solution path with the grid value in the first column."""
    rows = np.atleast_2d(rows)
    names = list(names) if names else [f"theta_{j + 1}" for j in range(rows.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hyper"] + names)
        for g, r in zip(grid, rows):
            w.writerow([repr(float(g))] + [repr(float(v)) for v in r])

"""Activation functions for neuronized priors.

An activation ``T`` is a nondecreasing scalar map.  The prior on a
coefficient is ``theta = T(alpha - alpha0) * w`` so the choice of ``T``
decides which classical shrinkage prior is being imitated.

Four kinds are supported:

``relu``
    ``max(0, t)``; produces exact zeros (spike-and-slab behaviour).
``identity``
    ``t``; Laplace-like marginal (Bayesian Lasso behaviour).
``signed_exp_quad``
    ``exp(l1 * sgn(t) * t**2 + l2 * t + l0)``; polynomial tails
    (horseshoe-like behaviour) when ``0 < l1 <= 1/2``.
``spline``
    clamped cubic B-spline on a set of breakpoints, extended linearly
    beyond the end points with the boundary slope.

Every spec is immutable and validated for monotonicity on a fixed grid at
construction time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numba as nb
import numpy as np

KINDS = ("relu", "identity", "signed_exp_quad", "spline")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

#: log of the saturation cap used by ``signed_exp_quad``
LOG_CAP = 700.0
#: grid used for the monotonicity check
CHECK_GRID = np.round(np.arange(-1000, 1001) * 0.01, 10)
DEGREE = 3


@nb.njit(cache=True)
def _find_span(x, kn):
    # kn is the augmented knot vector; returns i with kn[i] <= x < kn[i+1]
    lo = DEGREE
    hi = kn.size - DEGREE - 2
    if x >= kn[hi]:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if kn[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@nb.njit(cache=True)
def _basis_funs(i, x, kn, out):
    # Cox-de Boor recursion for the DEGREE+1 nonzero basis functions
    left = np.empty(DEGREE + 1)
    right = np.empty(DEGREE + 1)
    out[0] = 1.0
    for j in range(1, DEGREE + 1):
        left[j] = x - kn[i + 1 - j]
        right[j] = kn[i + j] - x
        saved = 0.0
        for r in range(j):
            tmp = out[r] / (right[r + 1] + left[j - r])
            out[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        out[j] = saved


@nb.njit(cache=True)
def _spline_value(x, kn, coefs):
    k0 = kn[DEGREE]
    k1 = kn[kn.size - DEGREE - 1]
    K = coefs.size
    if x < k0:
        slope = DEGREE * (coefs[1] - coefs[0]) / (kn[DEGREE + 1] - kn[1])
        return coefs[0] + slope * (x - k0)
    if x > k1:
        slope = DEGREE * (coefs[K - 1] - coefs[K - 2]) / (kn[K + DEGREE - 1] - kn[K - 1])
        return coefs[K - 1] + slope * (x - k1)
    i = _find_span(x, kn)
    b = np.empty(DEGREE + 1)
    _basis_funs(i, x, kn, b)
    s = 0.0
    for r in range(DEGREE + 1):
        s += b[r] * coefs[i - DEGREE + r]
    return s


@nb.njit(cache=True)
def act_log_seq(t, params):
    """log T(t) for the signed-exp-quad kind (before the cap)."""
    if t >= 0.0:
        q = params[0] * t * t
    else:
        q = -params[0] * t * t
    return q + params[1] * t + params[2]


@nb.njit(cache=True)
def act_eval(t, kind, params, knots, coefs):
    """Evaluate an activation from its packed kernel representation."""
    if kind == 0:
        return t if t > 0.0 else 0.0
    if kind == 1:
        return t
    if kind == 2:
        lt = act_log_seq(t, params)
        if lt > LOG_CAP:
            lt = LOG_CAP
        return math.exp(lt)
    return _spline_value(t, knots, coefs)


@nb.njit(cache=True)
def _eval_many(ts, kind, params, knots, coefs):
    out = np.empty(ts.size)
    for i in range(ts.size):
        out[i] = act_eval(ts[i], kind, params, knots, coefs)
    return out


@nb.njit(cache=True)
def _design_rows(ts, kn, K):
    # rows of the linear map coefs -> spline values (extrapolation included)
    out = np.zeros((ts.size, K))
    k0 = kn[DEGREE]
    k1 = kn[kn.size - DEGREE - 1]
    b = np.empty(DEGREE + 1)
    for m in range(ts.size):
        x = ts[m]
        if x < k0:
            c = DEGREE * (x - k0) / (kn[DEGREE + 1] - kn[1])
            out[m, 0] = 1.0 - c
            out[m, 1] = c
        elif x > k1:
            c = DEGREE * (x - k1) / (kn[K + DEGREE - 1] - kn[K - 1])
            out[m, K - 1] = 1.0 + c
            out[m, K - 2] = -c
        else:
            i = _find_span(x, kn)
            _basis_funs(i, x, kn, b)
            for r in range(DEGREE + 1):
                out[m, i - DEGREE + r] = b[r]
    return out


def augmented_knots(knots) -> np.ndarray:
    """Clamped knot vector (end points repeated ``DEGREE`` extra times)."""
    knots = np.asarray(knots, dtype=float)
    return np.concatenate([np.repeat(knots[0], DEGREE), knots, np.repeat(knots[-1], DEGREE)])


def spline_design_matrix(t, knots) -> np.ndarray:
    """Matrix ``B`` with ``spline_eval(t) = B @ coefs`` (extrapolation included)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kn = augmented_knots(knots)
    return _design_rows(t, kn, len(knots) + DEGREE - 1)


@dataclass(frozen=True)
class ActivationSpec:
    """Immutable description of an activation function.

    Parameters
    ----------
    kind : str
        One of ``relu``, ``identity``, ``signed_exp_quad``, ``spline``.
    params : tuple of float
        ``(lambda1, lambda2, lambda0)`` for ``signed_exp_quad``; empty otherwise.
    knots : tuple of float
        Strictly increasing breakpoints for ``spline``.  A spline with ``m``
        breakpoints has ``K = m + 2`` coefficients.
    coefs : tuple of float
        Spline coefficients ``phi`` (length ``K >= 4``).
    """

    kind: str
    params: tuple = ()
    knots: tuple = ()
    coefs: tuple = ()
    check_monotone: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        object.__setattr__(self, "knots", tuple(float(v) for v in self.knots))
        object.__setattr__(self, "coefs", tuple(float(v) for v in self.coefs))
        if self.kind == "signed_exp_quad":
            if len(self.params) != 3:
                raise ValueError("signed_exp_quad needs (lambda1, lambda2, lambda0)")
            l1, l2, l0 = self.params
            if not (0.0 < l1 <= 0.5):
                raise ValueError(f"lambda1 must lie in (0, 1/2], got {l1}")
            if not l2 > 0.0:
                raise ValueError(f"lambda2 must be positive, got {l2}")
            if not math.isfinite(l0):
                raise ValueError("lambda0 must be finite")
        elif self.kind == "spline":
            kn = np.asarray(self.knots)
            if kn.size < 2 or not np.all(np.isfinite(kn)) or np.any(np.diff(kn) <= 0):
                raise ValueError("spline knots must be finite and strictly increasing (at least 2)")
            if len(self.coefs) != kn.size + DEGREE - 1:
                raise ValueError(
                    f"spline with {kn.size} knots needs {kn.size + DEGREE - 1} coefficients, "
                    f"got {len(self.coefs)}")
            if not np.all(np.isfinite(self.coefs)):
                raise ValueError("spline coefficients must be finite")
        elif self.params or self.knots or self.coefs:
            raise ValueError(f"{self.kind} takes no parameters")
        if self.check_monotone and not is_monotone(self):
            raise ValueError("activation is not nondecreasing on the check grid")

    @cached_property
    def kernel_args(self):
        """``(kind_code, params, augmented_knots, coefs)`` for compiled kernels."""
        if self.kind == "spline":
            kn = augmented_knots(self.knots)
        else:
            kn = np.zeros(1)
        params = np.array(self.params if self.params else (0.0,), dtype=float)
        coefs = np.array(self.coefs if self.coefs else (0.0,), dtype=float)
        return _KIND_CODE[self.kind], params, kn, coefs

    @property
    def K(self) -> int:
        return len(self.coefs)

    def boundary_slopes(self) -> tuple[float, float]:
        """Extrapolation slopes used below the first and above the last knot."""
        if self.kind != "spline":
            raise ValueError("only splines have boundary slopes")
        c, k = self.coefs, self.knots
        return (DEGREE * (c[1] - c[0]) / (k[1] - k[0]),
                DEGREE * (c[-1] - c[-2]) / (k[-1] - k[-2]))

    def __call__(self, t):
        return evaluate(self, t)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "signed_exp_quad":
            d.update(lambda1=self.params[0], lambda2=self.params[1], lambda0=self.params[2])
        elif self.kind == "spline":
            d.update(knots=list(self.knots), coefs=list(self.coefs))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ActivationSpec":
        kind = d["kind"]
        if kind == "signed_exp_quad":
            return cls(kind, (d["lambda1"], d["lambda2"], d.get("lambda0", 0.0)))
        if kind == "spline":
            return cls(kind, knots=tuple(d["knots"]), coefs=tuple(d["coefs"]))
        return cls(kind)

    @classmethod
    def from_json(cls, s: str) -> "ActivationSpec":
        return cls.from_dict(json.loads(s))


def evaluate(spec: ActivationSpec, t, return_flag: bool = False):
    """Evaluate ``T(t)`` for a scalar or array ``t``.

    ``signed_exp_quad`` is computed in log space and capped at ``exp(700)``.
    With ``return_flag=True`` a boolean saying whether the cap was hit is
    returned as well.
    """
    arr = np.asarray(t, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    out = _eval_many(flat, *spec.kernel_args).reshape(arr.shape)
    if arr.ndim == 0:
        out = float(out)
    if return_flag:
        saturated = False
        if spec.kind == "signed_exp_quad":
            l1, l2, l0 = spec.params
            lt = l1 * np.sign(flat) * flat ** 2 + l2 * flat + l0
            saturated = bool(np.any(lt > LOG_CAP))
        return out, saturated
    return out


def spline_eval(spec: ActivationSpec, t):
    """Evaluate a spline activation (linear beyond the knots)."""
    if spec.kind != "spline":
        raise ValueError("spline_eval needs a spline activation")
    return evaluate(spec, t)


def is_monotone(spec: ActivationSpec, grid: np.ndarray = CHECK_GRID) -> bool:
    """Grid check that ``T`` is nondecreasing."""
    v = _eval_many(np.ascontiguousarray(grid, dtype=float), *spec.kernel_args)
    if not np.all(np.isfinite(v)):
        return False
    tol = 1e-12 * np.maximum(1.0, np.abs(v[1:]))
    return bool(np.all(np.diff(v) >= -tol))


def relu() -> ActivationSpec:
    return ActivationSpec("relu")


def identity() -> ActivationSpec:
    return ActivationSpec("identity")


def signed_exp_quad(lambda1: float, lambda2: float, lambda0: float = 0.0) -> ActivationSpec:
    return ActivationSpec("signed_exp_quad", (lambda1, lambda2, lambda0))


def make_horseshoe_like() -> ActivationSpec:
    """Signed-exp-quad activation whose prior closely tracks the horseshoe."""
    return signed_exp_quad(0.37, 0.89, 0.08)


def spline(knots, coefs, check_monotone: bool = True) -> ActivationSpec:
    return ActivationSpec("spline", knots=tuple(knots), coefs=tuple(coefs),
                          check_monotone=check_monotone)


def fit_spline(func, knots, grid=None, monotone: bool = True) -> ActivationSpec:
    """Least-squares spline approximation of ``func`` on ``grid``.

    With ``monotone=True`` the coefficients are constrained to be
    nondecreasing, which is sufficient for a monotone B-spline.  With
    ``monotone=False`` the plain least-squares fit is returned without the
    monotonicity check; near a kink it can dip slightly, so it is meant for
    approximation studies rather than for use as a prior.  The grid defaults
    to 2001 points spanning the knot range.
    """
    from scipy.optimize import lsq_linear

    knots = np.asarray(knots, dtype=float)
    if grid is None:
        grid = np.linspace(knots[0], knots[-1], 2001)
    B = spline_design_matrix(grid, knots)
    if not monotone:
        coefs, *_ = np.linalg.lstsq(B, func(grid), rcond=None)
        return spline(knots, coefs, check_monotone=False)
    K = B.shape[1]
    # coefs = L @ z with z = (c0, increments >= 0)
    L = np.tril(np.ones((K, K)))
    lower = np.r_[-np.inf, np.zeros(K - 1)]
    res = lsq_linear(B @ L, func(grid), bounds=(lower, np.inf), tol=1e-12)
    return spline(knots, L @ res.x)


def identity_spline(knots) -> ActivationSpec:
    """Spline that reproduces ``T(t) = t`` exactly (Greville abscissae)."""
    kn = augmented_knots(knots)
    K = len(knots) + DEGREE - 1
    coefs = np.array([kn[i + 1:i + DEGREE + 1].mean() for i in range(K)])
    return spline(knots, coefs)

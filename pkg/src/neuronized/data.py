"""Regression data containers, synthetic scenarios and CSV ingestion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Design matrix ``X`` (n x p) and response ``y`` (n,).

    ``x_mean``, ``x_scale`` and ``y_mean`` record the affine transform
    applied by :func:`standardize` so coefficients can be mapped back to the
    original scale.  For raw data they are zeros and ones.
    """

    X: np.ndarray
    y: np.ndarray
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = 0.0
    names: tuple = ()
    col_sq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError("need n >= 1 and p >= 1")
        if y.shape[0] != n:
            raise ValueError(f"y has length {y.shape[0]} but X has {n} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        xm = np.zeros(p) if self.x_mean is None else np.asarray(self.x_mean, dtype=float)
        xs = np.ones(p) if self.x_scale is None else np.asarray(self.x_scale, dtype=float)
        object.__setattr__(self, "X", _frozen(np.asfortranarray(X)))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x_mean", _frozen(xm))
        object.__setattr__(self, "x_scale", _frozen(xs))
        object.__setattr__(self, "y_mean", float(self.y_mean))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "col_sq", _frozen(np.einsum("ij,ij->j", X, X)))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def back_map(self, theta):
        """Coefficients and intercept on the original scale.

        Returns ``(beta, intercept)`` such that ``X_orig @ beta + intercept``
        equals the standardized-scale prediction shifted back by ``y_mean``.
        """
        beta = np.asarray(theta, dtype=float) / self.x_scale
        intercept = self.y_mean - float(self.x_mean @ beta)
        return beta, intercept


def standardize(data: RegressionData) -> RegressionData:
    """Center ``y``, center ``X`` and scale its columns to unit variance.

    The transform is composed with any earlier one, so applying it twice
    is the same as applying it once.
    """
    X = np.asarray(data.X)
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = np.sqrt((Xc ** 2).mean(axis=0))
    bad = np.flatnonzero(~(scale > 1e-12 * np.maximum(1.0, np.abs(mean))))
    if bad.size:
        label = data.names[bad[0]] if data.names else str(bad[0] + 1)
        raise ValueError(f"column {label} is constant and cannot be standardized")
    ym = float(np.mean(data.y))
    return RegressionData(
        Xc / scale, data.y - ym,
        x_mean=data.x_mean + data.x_scale * mean,
        x_scale=data.x_scale * scale,
        y_mean=data.y_mean + ym,
        names=data.names,
    )


def read_matrix_csv(path, header: bool | None = None, delimiter: str = ","):
    """Read a numeric CSV file.

    ``header=None`` autodetects a header by whether the first row parses as
    numbers.  Errors name the offending row and column (1-based, counting
    the header line).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = ()
    start = 0
    if header is None:
        try:
            [float(c) for c in rows[0]]
            header = False
        except ValueError:
            header = True
    if header:
        names = tuple(c.strip() for c in rows[0])
        start = 1
    width = len(rows[start]) if start < len(rows) else len(names)
    out = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i - start - 1, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: row {i}, column {j + 1}: non-numeric value {cell!r}") from None
            if not math.isfinite(out[i - start - 1, j]):
                raise ValueError(f"{path}: row {i}, column {j + 1}: non-finite value {cell!r}")
    return out, names


def load_csv(x_path, y_path=None, response=None, header: bool | None = None,
             delimiter: str = ",") -> RegressionData:
    """Load a regression data set.

    Either give separate ``x_path`` and ``y_path`` files, or a single file
    with ``response`` naming the response column (name or 0-based index).
    """
    M, names = read_matrix_csv(x_path, header, delimiter)
    if y_path is not None:
        Y, _ = read_matrix_csv(y_path, header, delimiter)
        if Y.ndim != 2 or Y.shape[1] != 1:
            raise ValueError(f"{y_path}: response file must have exactly one column")
        if Y.shape[0] != M.shape[0]:
            raise ValueError(f"{y_path}: {Y.shape[0]} rows but {x_path} has {M.shape[0]}")
        return RegressionData(M, Y[:, 0], names=names)
    if response is None:
        response = M.shape[1] - 1
    if isinstance(response, str) and not response.lstrip("-").isdigit():
        if response not in names:
            raise ValueError(f"{x_path}: no column named {response!r}")
        k = names.index(response)
    else:
        k = int(response) % M.shape[1]
    keep = [j for j in range(M.shape[1]) if j != k]
    xnames = tuple(names[j] for j in keep) if names else ()
    return RegressionData(M[:, keep], M[:, k], names=xnames)


def write_matrix_csv(path, M, names=None):
    M = np.atleast_2d(M)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if names is not None:
            w.writerow(names)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class Scenario:
    """Synthetic regression scenario.

    ``signal="low_dim"`` sets ``ceil(0.1 p)`` randomly placed coefficients to
    ``+-s``; ``signal="high_dim"`` sets the first five to
    ``s * (0.4, 0.45, 0.5, 0.55, 0.6)`` with random signs.
    """

    n: int
    p: int
    design: str = "independent"
    rho: float = 0.7
    signal: str = "low_dim"
    s: float = 0.3
    sigma_sq: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.design not in ("independent", "ar1"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.design == "ar1" and not (-1.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (-1, 1)")
        if self.signal not in ("low_dim", "high_dim"):
            raise ValueError(f"unknown signal {self.signal!r}")
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        if self.signal == "high_dim" and self.p < 5:
            raise ValueError("high_dim signal needs p >= 5")
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def generate(self, rng=None):
        """Return ``(RegressionData, theta0)``; the data are not standardized."""
        rng = np.random.default_rng(self.seed if rng is None else rng)
        X = gen_design(self, rng)
        theta0 = gen_coefficients(self, rng)
        y = gen_response(X, theta0, self.sigma_sq, rng)
        return RegressionData(X, y), theta0


#: named scenarios used by the command line tool
SCENARIOS = {
    "table1-weak": dict(n=200, p=50, signal="low_dim", s=0.2),
    "table1-strong": dict(n=200, p=50, signal="low_dim", s=0.3),
    "table1-weak-large": dict(n=400, p=100, signal="low_dim", s=0.2),
    "table1-strong-large": dict(n=400, p=100, signal="low_dim", s=0.3),
    "table2-weak": dict(n=200, p=50, design="ar1", signal="low_dim", s=0.2),
    "table2-strong": dict(n=200, p=50, design="ar1", signal="low_dim", s=0.3),
    "highdim-weak": dict(n=100, p=300, signal="high_dim", s=1.0),
    "highdim-strong": dict(n=100, p=300, signal="high_dim", s=1.5),
    "highdim-weak-large": dict(n=150, p=1000, signal="high_dim", s=1.0),
    "highdim-strong-large": dict(n=150, p=1000, signal="high_dim", s=1.5),
    "highdim-ar1-weak": dict(n=100, p=300, design="ar1", signal="high_dim", s=1.0),
    "highdim-ar1-strong": dict(n=100, p=300, design="ar1", signal="high_dim", s=1.5),
    "bardet-biedl-like": dict(n=120, p=200, signal="high_dim", s=1.5),
}


def named_scenario(name: str, seed: int = 0) -> Scenario:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return Scenario(seed=seed, **SCENARIOS[name])


def gen_design(scenario: Scenario, rng) -> np.ndarray:
    """Rows i.i.d. N(0, I) or N(0, Sigma) with ``Sigma_lk = rho^|l-k|``."""
    n, p = scenario.n, scenario.p
    Z = rng.standard_normal((n, p))
    if scenario.design == "independent":
        return Z
    rho = scenario.rho
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    # stationary AR(1) recursion along each row
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
    return X


def gen_coefficients(scenario: Scenario, rng) -> np.ndarray:
    p, s = scenario.p, scenario.s
    theta = np.zeros(p)
    if scenario.signal == "low_dim":
        k = math.ceil(0.1 * p - 1e-12)
        idx = rng.choice(p, size=k, replace=False)
        signs = rng.choice([-1.0, 1.0], size=k)
        theta[np.sort(idx)] = s * signs
    else:
        signs = rng.choice([-1.0, 1.0], size=5)
        theta[:5] = s * np.array([0.4, 0.45, 0.5, 0.55, 0.6]) * signs
    return theta


def gen_response(X, theta0, sigma_sq: float, rng) -> np.ndarray:
    """``y = X theta0 + eps`` with ``eps ~ N(0, sigma_sq I)``."""
    X = np.asarray(X, dtype=float)
    mu = X @ np.asarray(theta0, dtype=float)
    if sigma_sq == 0:
        return mu
    return mu + math.sqrt(sigma_sq) * rng.standard_normal(X.shape[0])

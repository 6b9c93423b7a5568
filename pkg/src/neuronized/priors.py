"""Neuronized prior objects, prior sampling and hyperparameter rules."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .activations import ActivationSpec, evaluate


@dataclass(frozen=True)
class NeuronizedPrior:
    """Prior ``theta = T(alpha - alpha0) * w`` with ``alpha ~ N(0, 1)``.

    Parameters
    ----------
    activation : ActivationSpec
    alpha0 : float
        Bias controlling sparsity; for ReLU ``P(theta = 0) = Phi(alpha0)``.
    tau_w_sq : float
        Global variance of the weight ``w``.
    sigma_scaled : bool
        If true ``w ~ N(0, sigma^2 tau_w_sq)`` (regression use), otherwise
        ``w ~ N(0, tau_w_sq)``.
    """

    activation: ActivationSpec
    alpha0: float = 0.0
    tau_w_sq: float = 1.0
    sigma_scaled: bool = True

    def __post_init__(self):
        if not (self.tau_w_sq > 0 and math.isfinite(self.tau_w_sq)):
            raise ValueError(f"tau_w_sq must be positive and finite, got {self.tau_w_sq}")
        if not math.isfinite(self.alpha0):
            raise ValueError("alpha0 must be finite")
        object.__setattr__(self, "alpha0", float(self.alpha0))
        object.__setattr__(self, "tau_w_sq", float(self.tau_w_sq))

    def to_dict(self) -> dict:
        return {"activation": self.activation.to_dict(), "alpha0": self.alpha0,
                "tau_w_sq": self.tau_w_sq, "sigma_scaled": self.sigma_scaled}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "NeuronizedPrior":
        return cls(ActivationSpec.from_dict(d["activation"]), d.get("alpha0", 0.0),
                   d.get("tau_w_sq", 1.0), d.get("sigma_scaled", True))


def alpha0_from_sparsity(eta: float) -> float:
    """Bias ``alpha0 = -Phi^{-1}(eta)`` giving prior inclusion probability ``eta``."""
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return float(-special.ndtri(eta))


def alpha0_from_beta_binomial(p: int, a: float) -> float:
    """Bias matching the inclusion rate ``(p + p**a)^-1`` of a Beta(1, p^a) hyperprior."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return alpha0_from_sparsity(1.0 / (p + p ** a))


def zero_mass(prior: NeuronizedPrior) -> float:
    """Prior probability that ``theta`` is exactly zero."""
    if prior.activation.kind == "relu":
        return float(special.ndtr(prior.alpha0))
    return 0.0


def default_tau_sq(p: int) -> float:
    """Default global weight variance ``p^-2``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return 1.0 / float(p) ** 2


def tau_sq_from_lasso_cv(lambda_cv: float, sigma_sq_cv: float) -> float:
    """``tau_w^2 = 2 sigma^2 / lambda^2`` from a cross-validated Lasso fit."""
    if not (lambda_cv > 0 and sigma_sq_cv > 0):
        raise ValueError("lambda_cv and sigma_sq_cv must be positive")
    return 2.0 * sigma_sq_cv / lambda_cv ** 2


def sample_prior(prior: NeuronizedPrior, count: int, seed=None, sigma_sq: float = 1.0,
                 return_latent: bool = False):
    """Draw ``count`` i.i.d. values of ``theta`` from the prior.

    ``sigma_sq`` only matters when ``prior.sigma_scaled`` is true.  Draws
    are built as ``tau * (T(alpha - alpha0) * z)`` from common normals, so
    rescaling ``tau`` rescales every draw exactly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    alpha = rng.standard_normal(count)
    z = rng.standard_normal(count)
    var = prior.tau_w_sq * (sigma_sq if prior.sigma_scaled else 1.0)
    theta = math.sqrt(var) * (evaluate(prior.activation, alpha - prior.alpha0) * z)
    if return_latent:
        return theta, alpha, math.sqrt(var) * z
    return theta


# Reference priors used as matching targets and test oracles.

def laplace_scale(tau_w_sq: float) -> float:
    """Laplace scale whose variance equals ``tau_w_sq``.

    This is the Bayesian-Lasso correspondence ``tau_w^2 = 2 sigma^2/lambda^2``
    (per unit noise variance).
    """
    return math.sqrt(tau_w_sq / 2.0)


def sample_laplace(count: int, scale: float, rng) -> np.ndarray:
    return rng.laplace(0.0, scale, count)


def laplace_cdf(x, scale: float):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / scale), 1.0 - 0.5 * np.exp(-x / scale))


def sample_horseshoe(count: int, tau: float, rng) -> np.ndarray:
    """Horseshoe draws ``tau * lambda * z`` with half-Cauchy ``lambda``."""
    lam = np.abs(rng.standard_cauchy(count))
    return tau * lam * rng.standard_normal(count)


def identity_prior_density(theta, tau: float = 1.0):
    """Exact density of ``alpha * w`` with ``alpha ~ N(0,1)``, ``w ~ N(0, tau^2)``.

    The product of two independent normals has density ``K0(|x|)/pi``.
    """
    x = np.abs(np.asarray(theta, dtype=float)) / tau
    return special.k0(x) / (math.pi * tau)

"""Command line front end: ``neuronized <subcommand> [options]``.

Every option may also come from a JSON file given with ``--config`` (keys
are the long option names with dashes replaced by underscores); flags given
on the command line win.  Each run writes ``resolved_config.json`` next to
its outputs, and re-running with ``--config resolved_config.json`` repeats
it.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .activations import identity, make_horseshoe_like, relu
from .baselines import bayesian_lasso_gibbs, hard_threshold_select, horseshoe_gibbs, spsl_gamma_mcmc
from .data import (SCENARIOS, RegressionData, Scenario, load_csv, named_scenario,
                   read_matrix_csv, standardize, write_matrix_csv)
from .priors import NeuronizedPrior, alpha0_from_sparsity, default_tau_sq, tau_sq_from_lasso_cv
from .sampler import SamplerConfig, SamplerError, run_chain

log = logging.getLogger("neuronized")

METHODS = ("nspsl", "nspsl-exact", "spsl-gamma", "blasso", "horseshoe", "n-blasso",
           "n-horseshoe")
ACTIVATIONS = {"relu": relu, "identity": identity, "horseshoe-like": make_horseshoe_like}


class UsageError(Exception):
    """Bad flags, missing inputs or an inconsistent configuration (exit 2)."""


# ---------------------------------------------------------------------------
# option handling

GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": ".", "verbose": 0}

DEFAULTS = {
    "sample": {"x": None, "y": None, "response": None, "header": None, "standardize": True,
               "method": "nspsl", "alpha0": "auto", "tau_w_sq": "auto", "eta": None,
               "iterations": None, "burn_in": None, "thin": 1, "chains": 1,
               "time_budget": None, "format": "csv", "inner_repeats": 10,
               "proposal_sd": 2.0, "threshold": 0.1},
    "map": {"x": None, "y": None, "response": None, "header": None, "standardize": True,
            "activation": "relu", "alpha0": "auto", "tau_w_sq": None, "schedule": None,
            "target": None, "stages": 20, "sigma_sq": None, "objective": "profile",
            "tol": 1e-8, "max_sweeps": 500},
    "match": {"target": "horseshoe", "target_file": None, "tau_w_sq": 1.0,
              "sample_size": 100_000, "basis_count": 9, "knot_range": [-3.0, 3.0],
              "distance": "order_stat_L2", "optimizer": "anneal", "steps": 50_000,
              "alpha0": 0.0},
    "simulate": {"scenario": None, "n": None, "p": None, "design": "independent",
                 "rho": 0.7, "signal": "low_dim", "s": 0.3, "sigma_sq": 1.0,
                 "replicates": 1},
    "diagnose": {"samples": None, "truth": None, "select": "auto", "threshold": 0.1},
    "path": {"x": None, "y": None, "response": None, "header": None, "standardize": True,
             "activation": "relu", "method": "map", "grid": None, "alpha0": "auto",
             "tau_w_sq": None, "stages": 20, "sigma_sq": None, "iterations": 3000,
             "burn_in": 500},
    "bench": {"x": None, "y": None, "response": None, "header": None, "standardize": True,
              "scenario": "bardet-biedl-like", "methods": "nspsl-exact,spsl-gamma",
              "budget": "5,10,20", "chains": 50, "alpha0": "auto", "tau_w_sq": "auto",
              "burn_in": None, "max_stored": 2 ** 19},
}


def _data_args(p):
    p.add_argument("--x", help="CSV of predictors (or of predictors and response)")
    p.add_argument("--y", help="CSV with a single response column")
    p.add_argument("--response", help="response column name or index when --y is absent")
    hdr = p.add_mutually_exclusive_group()
    hdr.add_argument("--header", dest="header", action="store_const", const=True,
                     help="first row holds column names (default: autodetect)")
    hdr.add_argument("--no-header", dest="header", action="store_const", const=False)
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   help="use the data as given")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values (flags win)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads for chains/replicates")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="count")

    parser = argparse.ArgumentParser(prog="neuronized",
                                     description="Neuronized shrinkage priors for regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="posterior sampling")
    _data_args(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha0", help="bias for ReLU methods, a number or 'auto' (-Phi^-1(1/p))")
    p.add_argument("--tau-w-sq", help="weight variance, a number or 'auto'")
    p.add_argument("--eta", type=float, help="prior inclusion probability for spsl-gamma")
    p.add_argument("--iterations", type=int, help="total iterations including burn-in")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--time-budget", type=float, help="seconds of post-burn-in sampling")
    p.add_argument("--format", choices=("csv", "jsonl"))
    p.add_argument("--inner-repeats", type=int)
    p.add_argument("--proposal-sd", type=float)
    p.add_argument("--threshold", type=float, help="hard-threshold constant for selection")

    p = sub.add_parser("map", parents=[common], help="warm-started MAP estimation")
    _data_args(p)
    p.add_argument("--activation", choices=sorted(ACTIVATIONS))
    p.add_argument("--alpha0", help="final bias, a number or 'auto'")
    p.add_argument("--tau-w-sq", type=float, help="weight variance (fixed along alpha0 paths)")
    p.add_argument("--schedule", choices=("alpha0", "tau"))
    p.add_argument("--target", help="final schedule value, a number or 'auto'")
    p.add_argument("--stages", type=int)
    p.add_argument("--sigma-sq", type=float, help="noise variance (default: plug-in)")
    p.add_argument("--objective", choices=("profile", "marginal"))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-sweeps", type=int)

    p = sub.add_parser("match", parents=[common], help="fit a spline activation to a prior")
    p.add_argument("--target", choices=("bayesian-lasso", "horseshoe"))
    p.add_argument("--target-file", help="target draws, one number per line")
    p.add_argument("--tau-w-sq", type=float)
    p.add_argument("--sample-size", type=int)
    p.add_argument("--basis-count", type=int)
    p.add_argument("--knot-range", type=float, nargs=2)
    p.add_argument("--distance", choices=("order_stat_L2", "KS", "Wasserstein1"))
    p.add_argument("--optimizer", choices=("anneal", "grid"))
    p.add_argument("--steps", type=int)
    p.add_argument("--alpha0", type=float)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic data sets")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--design", choices=("independent", "ar1"))
    p.add_argument("--rho", type=float)
    p.add_argument("--signal", choices=("low_dim", "high_dim"))
    p.add_argument("--s", type=float)
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--replicates", type=int)

    p = sub.add_parser("diagnose", parents=[common], help="accuracy and mixing metrics")
    p.add_argument("--samples", nargs="+", help="sample CSV files written by 'sample'")
    p.add_argument("--truth", help="CSV with the true coefficients")
    p.add_argument("--select", choices=("auto", "median-prob", "threshold"))
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("path", parents=[common], help="solution path over a hyperparameter")
    _data_args(p)
    p.add_argument("--activation", choices=sorted(ACTIVATIONS))
    p.add_argument("--method", choices=("map", "posterior_mean"))
    p.add_argument("--grid", help="'start:stop:count' or comma-separated values")
    p.add_argument("--alpha0", help="final bias for the default grid, number or 'auto'")
    p.add_argument("--tau-w-sq", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("bench", parents=[common], help="ESS at fixed sampling time")
    _data_args(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS),
                   help="synthetic data when --x is not given")
    p.add_argument("--methods", help="comma-separated methods")
    p.add_argument("--budget", help="comma-separated sampling budgets in seconds")
    p.add_argument("--chains", type=int)
    p.add_argument("--alpha0")
    p.add_argument("--tau-w-sq")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--max-stored", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the JSON config file and explicit flags."""
    cfg = {**GLOBAL_DEFAULTS, **DEFAULTS[args.command]}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        for key in ("command", "version", "resolved"):
            loaded.pop(key, None)
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"{path}: unknown option(s) {sorted(unknown)}")
        cfg.update(loaded)
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _write_config(out: Path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg = {**cfg, "version": __version__}
    (out / "resolved_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _number_or_auto(value, name: str):
    if value is None or value == "auto":
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"--{name.replace('_', '-')} must be a number or 'auto'") from None


def _existing(path, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    return path


def _load(cfg: dict) -> RegressionData:
    x = _existing(cfg.get("x"), "--x")
    y = _existing(cfg["y"], "--y") if cfg.get("y") else None
    try:
        data = load_csv(x, y, response=cfg.get("response"), header=cfg.get("header"))
        return standardize(data) if cfg.get("standardize", True) else data
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _names(data: RegressionData) -> list[str]:
    return list(data.names) if data.names else [f"theta_{j + 1}" for j in range(data.p)]


def _generators(seed: int, count: int) -> list[np.random.Generator]:
    # one independent stream per chain, replicate or worker
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# method dispatch shared by sample and bench

def _lasso_cv_tau(data: RegressionData, seed: int) -> float:
    """``tau_w^2 = 2 sigma^2 / lambda^2`` from a 10-fold cross-validated Lasso."""
    from sklearn.linear_model import LassoCV

    fit = LassoCV(cv=min(10, data.n), fit_intercept=False, random_state=seed).fit(data.X, data.y)
    resid = data.y - data.X @ fit.coef_
    sigma_sq = max(float(resid @ resid) / data.n, 1e-12)
    # sklearn scales the squared loss by 1/(2n); the Lasso penalty on the
    # 1/2 ||r||^2 scale is n * alpha
    return tau_sq_from_lasso_cv(data.n * float(fit.alpha_), sigma_sq)


def method_hyper(method: str, data: RegressionData, cfg: dict) -> dict:
    """Resolve ``alpha0``, ``tau_w_sq`` and ``eta`` for a method."""
    p = data.p
    alpha0 = _number_or_auto(cfg.get("alpha0"), "alpha0")
    tau = _number_or_auto(cfg.get("tau_w_sq"), "tau_w_sq")
    out = {}
    if method in ("nspsl", "nspsl-exact"):
        out["alpha0"] = alpha0_from_sparsity(1.0 / p) if alpha0 in (None, "auto") else alpha0
        out["tau_w_sq"] = 1.0 if tau in (None, "auto") else tau
    elif method == "spsl-gamma":
        eta = cfg.get("eta")
        out["eta"] = 1.0 / p if eta is None else float(eta)
        out["slab_variance"] = 1.0 if tau in (None, "auto") else tau
    elif method in ("blasso", "n-blasso"):
        out["tau_w_sq"] = _lasso_cv_tau(data, cfg["seed"]) if tau in (None, "auto") else tau
    elif method in ("horseshoe", "n-horseshoe"):
        out["tau_w_sq"] = default_tau_sq(p) if tau in (None, "auto") else tau
    else:
        raise UsageError(f"unknown method {method!r}; choose from {METHODS}")
    for key in ("tau_w_sq", "slab_variance"):
        if key in out and not out[key] > 0:
            raise UsageError(f"{key} must be positive")
    return out


def run_method(method: str, data: RegressionData, hyper: dict, config: SamplerConfig, rng):
    """Run one chain of ``method``; every method returns :class:`PosteriorSamples`."""
    if method == "spsl-gamma":
        return spsl_gamma_mcmc(data, hyper["slab_variance"], hyper["eta"], config, rng=rng)
    if method == "blasso":
        return bayesian_lasso_gibbs(data, hyper["tau_w_sq"], config, rng=rng)
    if method == "horseshoe":
        return horseshoe_gibbs(data, hyper["tau_w_sq"], config, rng=rng)
    if method in ("nspsl", "nspsl-exact"):
        prior = NeuronizedPrior(relu(), hyper["alpha0"], hyper["tau_w_sq"])
    elif method == "n-blasso":
        prior = NeuronizedPrior(identity(), 0.0, hyper["tau_w_sq"])
    else:
        prior = NeuronizedPrior(make_horseshoe_like(), 0.0, hyper["tau_w_sq"])
    s = run_chain(data, prior, config, rng=rng)
    s.method = method
    return s


def _sampler_config(method: str, cfg: dict, burn_in=None, iterations=None,
                    time_budget=None) -> SamplerConfig:
    default_burn = 200_000 if method == "spsl-gamma" else 2000
    burn = burn_in if burn_in is not None else default_burn
    iters = iterations if iterations is not None else burn + 20_000
    if time_budget is not None:
        iters = max(iters, 2 ** 62)
    return SamplerConfig(
        iterations=iters, burn_in=burn, thin=cfg.get("thin", 1) or 1,
        inner_repeats=cfg.get("inner_repeats", 10), rw_proposal_sd=cfg.get("proposal_sd", 2.0),
        alpha_update="exact_relu" if method == "nspsl-exact" else "random_walk",
        time_budget=time_budget, max_stored=cfg.get("max_stored", 2 ** 16), seed=None)


def _selection(samples, threshold: float) -> np.ndarray:
    if samples.method in ("nspsl", "nspsl-exact", "spsl-gamma"):
        return np.flatnonzero(samples.inclusion >= 0.5)
    sigma_hat = math.sqrt(float(np.mean(samples.sigma_sq))) if samples.sigma_sq.size else 1.0
    return hard_threshold_select(samples.theta_mean, sigma_hat, threshold)


# ---------------------------------------------------------------------------
# subcommands

def cmd_sample(cfg: dict) -> int:
    data = _load(cfg)
    method = cfg["method"]
    hyper = method_hyper(method, data, cfg)
    cfg["resolved"] = {"hyperparameters": hyper}
    try:
        config = _sampler_config(method, cfg, cfg.get("burn_in"), cfg.get("iterations"),
                                 cfg.get("time_budget"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    chains = int(cfg["chains"])
    if chains < 1:
        raise UsageError("--chains must be >= 1")
    gens = _generators(cfg["seed"], chains)
    results = _pool_map(lambda g: run_method(method, data, hyper, config, g), gens,
                        cfg["threads"])

    out = Path(cfg["out"])
    _write_config(out, cfg)
    names = _names(data)
    rows = []
    for c, s in enumerate(results):
        beta = s.theta / data.x_scale
        for k in range(s.n_stored):
            rows.append((c, beta[k], float(s.sigma_sq[k])))
    if cfg["format"] == "csv":
        with (out / "samples.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain"] + names + ["sigma_sq"])
            for c, b, sg in rows:
                w.writerow([c] + [repr(float(v)) for v in b] + [repr(sg)])
    else:
        with (out / "samples.jsonl").open("w") as fh:
            for c, b, sg in rows:
                fh.write(json.dumps({"chain": c, "theta": [float(v) for v in b],
                                     "sigma_sq": sg}) + "\n")

    mean = np.mean([s.theta_mean for s in results], axis=0)
    beta, intercept = data.back_map(mean)
    chain_summaries = []
    for s in results:
        d = s.summary()
        d["selected"] = [int(j) for j in _selection(s, cfg["threshold"])]
        chain_summaries.append(d)
    summary = {
        "method": method,
        "hyperparameters": hyper,
        "names": names,
        "posterior_mean": [float(v) for v in beta],
        "intercept": intercept,
        "inclusion_frequency": [float(v) for v in np.mean([s.inclusion for s in results], 0)],
        "selected": chain_summaries[0]["selected"] if chains == 1 else
        [int(j) for j in np.flatnonzero(
            np.bincount(np.concatenate([np.asarray(c["selected"], dtype=int)
                                        for c in chain_summaries]), minlength=data.p)
            * 2 > chains)],
        "sampling_seconds": float(sum(s.sampling_time for s in results)),
        "chains": chain_summaries,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    log.info("wrote %d draws to %s", len(rows), out)
    return 0


def _map_prior(cfg: dict, data: RegressionData):
    from .map import build_schedule

    act = ACTIVATIONS[cfg["activation"]]()
    p = data.p
    schedule_kind = cfg.get("schedule") or ("alpha0" if act.kind == "relu" else "tau")
    alpha0 = _number_or_auto(cfg.get("alpha0"), "alpha0")
    target = _number_or_auto(cfg.get("target"), "target")
    if schedule_kind == "alpha0":
        if target in (None, "auto"):
            target = alpha0_from_sparsity(1.0 / p) if alpha0 in (None, "auto") else alpha0
        tau = cfg.get("tau_w_sq") or 1.0
        prior = NeuronizedPrior(act, target, tau)
        kind = "alpha0_path"
    else:
        if target in (None, "auto"):
            target = default_tau_sq(p)
        a0 = 0.0 if act.kind != "relu" else (
            alpha0_from_sparsity(1.0 / p) if alpha0 in (None, "auto") else alpha0)
        prior = NeuronizedPrior(act, a0, target)
        kind = "tau_path"
    try:
        schedule = build_schedule(prior, target, kind, int(cfg["stages"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return prior, schedule


def cmd_map(cfg: dict) -> int:
    from .map import MapConfig, run_map

    data = _load(cfg)
    prior, schedule = _map_prior(cfg, data)
    try:
        mc = MapConfig(tol=cfg["tol"], max_sweeps=cfg["max_sweeps"], sigma_sq=cfg["sigma_sq"],
                       objective=cfg["objective"], seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = run_map(data, prior, schedule, mc)
    out = Path(cfg["out"])
    cfg["resolved"] = {"schedule": schedule.to_dict()}
    _write_config(out, cfg)
    d = res.to_dict()
    beta, intercept = data.back_map(res.theta_hat)
    d["theta_hat_standardized"] = d.pop("theta_hat")
    d["theta_hat"] = [float(v) for v in beta]
    if prior.activation.kind != "relu":
        # continuous activations give no exact zeros; select by hard threshold
        d["support"] = [int(j) for j in hard_threshold_select(res.theta_hat,
                                                              math.sqrt(res.sigma_sq))]
        d["support_rule"] = "threshold"
    else:
        d["support_rule"] = "nonzero"
    d["intercept"] = intercept
    d["names"] = _names(data)
    d["prior"] = prior.to_dict()
    (out / "map.json").write_text(json.dumps(d, indent=2) + "\n")
    return 0


def cmd_match(cfg: dict) -> int:
    from .matchfit import MatchConfig, fit_activation, named_target

    try:
        mc = MatchConfig(sample_size=cfg["sample_size"], basis_count=cfg["basis_count"],
                         knot_range=tuple(cfg["knot_range"]), distance=cfg["distance"],
                         optimizer=cfg["optimizer"], steps=cfg["steps"],
                         alpha0=cfg["alpha0"], tau_w_sq=cfg["tau_w_sq"], seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg.get("target_file"):
        path = _existing(cfg["target_file"], "--target-file")
        try:
            M, _ = read_matrix_csv(path, header=False)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        draws = M.ravel()
        if draws.size < mc.sample_size:
            raise UsageError(f"{path}: {draws.size} draws, need at least {mc.sample_size}")
        target = draws[:mc.sample_size]
        label = str(path)
    else:
        target = named_target(cfg["target"], cfg["tau_w_sq"])
        label = cfg["target"]
    res = fit_activation(target, mc)
    out = Path(cfg["out"])
    _write_config(out, cfg)
    doc = {"target": label, "activation": res.activation.to_dict(), "distance": res.distance,
           "distance_name": mc.distance, "initial_distance": res.initial_distance,
           "improved": res.improved}
    (out / "activation.json").write_text(json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_simulate(cfg: dict) -> int:
    if cfg.get("scenario"):
        base = named_scenario(cfg["scenario"]).to_dict()
    else:
        if cfg.get("n") is None or cfg.get("p") is None:
            raise UsageError("give --scenario or both --n and --p")
        base = {k: cfg[k] for k in ("n", "p", "design", "rho", "signal", "s", "sigma_sq")}
    reps = int(cfg["replicates"])
    if reps < 1:
        raise UsageError("--replicates must be >= 1")
    try:
        scenario = Scenario(**{**base, "seed": cfg["seed"]})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg["out"])
    _write_config(out, cfg)
    gens = _generators(cfg["seed"], reps)

    def one(r):
        data, theta0 = scenario.generate(gens[r])
        d = out / f"rep_{r + 1:03d}"
        d.mkdir(parents=True, exist_ok=True)
        names = [f"x{j + 1}" for j in range(data.p)]
        write_matrix_csv(d / "X.csv", data.X, names)
        write_matrix_csv(d / "y.csv", data.y[:, None], ["y"])
        write_matrix_csv(d / "theta0.csv", theta0[:, None], ["theta0"])
        (d / "scenario.json").write_text(json.dumps(
            {**scenario.to_dict(), "replicate": r + 1}, indent=2) + "\n")

    _pool_map(one, list(range(reps)), cfg["threads"])
    return 0


def _read_samples(path: Path):
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "chain" or header[-1] != "sigma_sq":
            raise UsageError(f"{path}: not a samples file written by 'sample'")
        rows = [r for r in reader if r]
    try:
        M = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError:
        raise UsageError(f"{path}: malformed samples file") from None
    return M[:, 0].astype(int), M[:, 1:-1], M[:, -1]


def cmd_diagnose(cfg: dict) -> int:
    from .metrics import angle, ess, mcc_from_counts, mse, selection_counts

    files = cfg.get("samples") or []
    if isinstance(files, str):
        files = [files]
    if not files:
        raise UsageError("--samples is required")
    paths = [_existing(f, "--samples") for f in files]
    truth = None
    if cfg.get("truth"):
        try:
            T, _ = read_matrix_csv(_existing(cfg["truth"], "--truth"))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        truth = T.ravel()
    per_file = []
    for path in paths:
        chain, theta, sig2 = _read_samples(path)
        if truth is not None and truth.size != theta.shape[1]:
            raise UsageError(f"{path}: {theta.shape[1]} coefficients but truth has {truth.size}")
        summary_path = path.with_name("summary.json")
        meta = json.loads(summary_path.read_text()) if summary_path.exists() else {}
        method = meta.get("method", path.stem)
        mean = theta.mean(axis=0)
        rule = cfg["select"]
        nonzero = (theta != 0).mean(axis=0)
        if rule == "auto":
            rule = "median-prob" if np.any(theta == 0) else "threshold"
        if rule == "median-prob":
            selected = np.flatnonzero(nonzero >= 0.5)
        else:
            selected = hard_threshold_select(mean, math.sqrt(float(np.mean(sig2))),
                                             cfg["threshold"])
        ess_vals = []
        for c in np.unique(chain):
            block = theta[chain == c]
            if block.shape[0] < 2:
                continue
            for j in range(block.shape[1]):
                e, flat = ess(block[:, j], return_flag=True)
                if not flat:
                    ess_vals.append(e)
        seconds = meta.get("sampling_seconds")
        ess_med = float(np.median(ess_vals)) if ess_vals else None
        rec = {"file": str(path), "method": method, "draws": int(theta.shape[0]),
               "selection_rule": rule, "selected": [int(j) for j in selected],
               "ess_median": ess_med,
               "ess_per_second": (ess_med * len(np.unique(chain)) / seconds
                                  if ess_med is not None and seconds else None)}
        if truth is not None:
            counts = selection_counts(selected, truth)
            rec.update(mse=mse(mean, truth), angle=angle(mean, truth), **counts,
                       mcc=mcc_from_counts(counts["TP"], counts["TN"], counts["FP"],
                                           counts["FN"]))
        per_file.append(rec)
    out = Path(cfg["out"])
    _write_config(out, cfg)
    (out / "metrics.json").write_text(json.dumps(per_file, indent=2) + "\n")
    cols = ["method", "files", "mse", "angle", "mcc", "TP", "FP", "FN", "ess_median",
            "ess_per_second"]
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for method in dict.fromkeys(r["method"] for r in per_file):
            group = [r for r in per_file if r["method"] == method]
            row = [method, len(group)]
            for k in cols[2:]:
                vals = [r[k] for r in group if r.get(k) is not None]
                row.append(repr(float(np.mean(vals))) if vals else "")
            w.writerow(row)
    return 0


def _parse_grid(text: str) -> np.ndarray:
    try:
        if ":" in text:
            a, b, k = text.split(":")
            return np.linspace(float(a), float(b), int(k))
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad --grid {text!r}; use 'start:stop:count' or a comma list") from None


def cmd_path(cfg: dict) -> int:
    from .metrics import solution_path, write_path_csv

    data = _load(cfg)
    act = ACTIVATIONS[cfg["activation"]]()
    kind = "alpha0_path" if act.kind == "relu" else "tau_path"
    if cfg.get("grid"):
        grid = _parse_grid(str(cfg["grid"]))
    else:
        _, schedule = _map_prior({**cfg, "schedule": None, "target": None}, data)
        grid = np.array(schedule.values)
    prior = NeuronizedPrior(act, 0.0 if kind == "tau_path" else float(grid[-1]),
                            cfg.get("tau_w_sq") or 1.0)
    sampler_config = None
    if cfg["method"] == "posterior_mean":
        try:
            sampler_config = SamplerConfig(iterations=cfg["iterations"], burn_in=cfg["burn_in"],
                                           seed=cfg["seed"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        rows = solution_path(cfg["method"], data, grid, prior, kind, cfg.get("sigma_sq"),
                             sampler_config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg["out"])
    cfg["resolved"] = {"grid": [float(v) for v in grid]}
    _write_config(out, cfg)
    write_path_csv(out / "path.csv", grid, rows / data.x_scale, _names(data))
    return 0


def cmd_bench(cfg: dict) -> int:
    from .metrics import ess

    if cfg.get("x"):
        data = _load(cfg)
    else:
        sc = named_scenario(cfg["scenario"], seed=cfg["seed"])
        data = standardize(sc.generate()[0])
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {METHODS}")
    try:
        budgets = [float(b) for b in str(cfg["budget"]).split(",")]
    except ValueError:
        raise UsageError("--budget must be comma-separated numbers") from None
    if not budgets or min(budgets) <= 0:
        raise UsageError("budgets must be positive")
    chains = int(cfg["chains"])
    if chains < 1:
        raise UsageError("--chains must be >= 1")
    hypers = {m: method_hyper(m, data, cfg) for m in methods}
    cfg["resolved"] = {"hyperparameters": hypers}
    out = Path(cfg["out"])
    _write_config(out, cfg)
    tasks = [(m, b, c) for m in methods for b in budgets for c in range(chains)]
    gens = _generators(cfg["seed"], len(tasks))

    def one(i):
        m, b, c = tasks[i]
        config = _sampler_config(m, cfg, cfg.get("burn_in"), time_budget=b)
        s = run_method(m, data, hypers[m], config, gens[i])
        vals = [ess(s.theta[:, j], return_flag=True) for j in range(s.theta.shape[1])]
        good = [e for e, flat in vals if not flat]
        med = float(np.median(good)) if good else float("nan")
        return [m, b, c, med, med / s.sampling_time if s.sampling_time > 0 else float("nan"),
                s.iterations - s.burn_in, s.n_stored, s.sampling_time]

    rows = _pool_map(one, list(range(len(tasks))), cfg["threads"])
    with (out / "bench.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "budget", "chain", "ess_median", "ess_per_second",
                    "iterations", "stored", "sampling_seconds"])
        w.writerows(rows)
    return 0


COMMANDS = {"sample": cmd_sample, "map": cmd_map, "match": cmd_match,
            "simulate": cmd_simulate, "diagnose": cmd_diagnose, "path": cmd_path,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        logging.basicConfig(level=logging.WARNING - 10 * min(int(cfg["verbose"]), 2),
                            format="%(levelname)s: %(message)s")
        if int(cfg["threads"]) < 1:
            raise UsageError("--threads must be >= 1")
        t0 = time.perf_counter()
        code = COMMANDS[args.command](cfg)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
        return code
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"neuronized: error: {exc}", file=sys.stderr)
        return 2
    except (SamplerError, ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"neuronized: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

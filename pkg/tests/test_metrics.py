"""Accuracy metrics, effective sample size, KS distance and solution paths."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from conftest import make_data
from neuronized.activations import identity, relu
from neuronized.metrics import (SelectionTruth, angle, autocorrelation, ess, ess_per_second,
                                ks_distance, mcc, mcc_from_counts, mse, selection_counts,
                                solution_path, write_path_csv)
from neuronized.priors import NeuronizedPrior
from neuronized.sampler import PosteriorSamples, SamplerConfig


class TestAccuracy:
    def test_mse_example(self):
        assert mse([1.0, 2.0, 0.0], [1.0, 0.0, 1.0]) == pytest.approx(5 / 3)

    def test_angle_examples(self):
        assert angle([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
        assert angle([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)
        assert angle([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(-1.0)
        assert angle(np.zeros(3), [1, 2, 3], return_flag=True) == (0.0, True)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mse([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            angle([1.0], [1.0, 2.0])


class TestSelection:
    def test_counts_from_indices_and_mask(self):
        truth = SelectionTruth(np.array([1.0, 0, 2.0, 0, 0]))
        np.testing.assert_array_equal(truth.support, [0, 2])
        c = selection_counts([0, 3], truth)
        assert c == {"TP": 1, "TN": 2, "FP": 1, "FN": 1}
        mask = np.array([True, False, False, True, False])
        assert selection_counts(mask, truth) == c

    def test_mcc_example(self):
        val = mcc_from_counts(8, 40, 1, 2)
        expect = (8 * 40 - 1 * 2) / math.sqrt(9 * 10 * 41 * 42)
        assert val == pytest.approx(expect, rel=1e-12)
        assert val == pytest.approx(0.807773, abs=1e-6)  # frozen

    def test_mcc_perfect_and_empty(self):
        theta0 = np.array([1.0, 0, 0, 1.0])
        assert mcc([0, 3], theta0) == pytest.approx(1.0)
        assert mcc([1, 2], theta0) == pytest.approx(-1.0)
        assert mcc([], theta0) == 0.0

    def test_bad_mask_length(self):
        with pytest.raises(ValueError):
            selection_counts(np.ones(3, bool), np.ones(4))


def ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - rho ** 2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


class TestESS:
    def test_autocorrelation_matches_direct(self):
        x = ar1(0.5, 300, 1)
        xc = x - x.mean()
        direct = [xc[: 300 - k] @ xc[k:] / (xc @ xc) for k in range(10)]
        np.testing.assert_allclose(autocorrelation(x)[:10], direct, atol=1e-12)

    def test_iid_chain(self):
        x = np.random.default_rng(0).standard_normal(20000)
        assert ess(x) == pytest.approx(20000, rel=0.1)

    def test_ar1_chain(self):
        n = 100000
        vals = [ess(ar1(0.9, n, s)) for s in range(3)]
        # integrated autocorrelation time (1 + rho) / (1 - rho) = 19
        np.testing.assert_allclose(vals, n / 19, rtol=0.2)

    def test_short_and_constant_chains(self):
        x = np.random.default_rng(1).standard_normal(10)
        assert 0 < ess(x) <= 10
        assert ess(np.full(50, 2.5), return_flag=True) == (50.0, True)
        with pytest.raises(ValueError):
            ess([1.0])
        with pytest.raises(ValueError):
            ess([1.0, np.nan, 2.0])

    @given(arrays(float, 40, elements=st.floats(-10, 10)), st.floats(0.1, 100),
           st.floats(-50, 50))
    def test_affine_invariance(self, x, a, b):
        if np.ptp(x) < 1e-6:
            return
        assert ess(a * x + b) == pytest.approx(ess(x), rel=1e-6)

    def test_ess_per_second_skips_constant_columns(self):
        rng = np.random.default_rng(2)
        theta = np.column_stack([rng.standard_normal(1000), np.zeros(1000)])
        s = PosteriorSamples("x", theta, np.ones(1000), theta.mean(0), np.full(2, np.nan),
                             np.arange(2), sampling_time=2.0)
        assert ess_per_second(s) == pytest.approx(ess(theta[:, 0]) / 2.0)
        s.theta = np.zeros((1000, 2))
        assert math.isnan(ess_per_second(s))


class TestKS:
    def test_examples(self):
        assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
        assert ks_distance([0, 1], [5, 6]) == 1.0
        assert ks_distance([0.0, 1.0], [0.5, 1.5]) == pytest.approx(0.5)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal(500), rng.standard_normal(700) + 0.2
        assert ks_distance(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)

    @given(*[arrays(float, st.integers(1, 30), elements=st.floats(-5, 5)) for _ in range(3)])
    def test_metric_properties(self, a, b, c):
        ab = ks_distance(a, b)
        assert ab == ks_distance(b, a)
        assert 0 <= ab <= 1
        assert ab <= ks_distance(a, c) + ks_distance(c, b) + 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_distance([], [1.0])


class TestSolutionPath:
    def test_map_path_endpoints(self):
        data = make_data(60, 6, seed=4)
        prior = NeuronizedPrior(relu(), 0.0, 1.0)
        path = solution_path("map", data, np.linspace(-1, 4, 11), prior, sigma_sq=1.0)
        assert path.shape == (11, 6)
        assert np.count_nonzero(path[0]) >= np.count_nonzero(path[-1])
        # strongest shrinkage empties the model or keeps only the signals
        assert set(np.flatnonzero(path[-1])) <= {0, 1}

    def test_tau_path_continuity(self):
        data = make_data(60, 6, seed=5)
        prior = NeuronizedPrior(identity(), 0.0, 1.0)
        grid = np.geomspace(1.0, 1e-2, 30)
        path = solution_path("map", data, grid, prior, sigma_sq=1.0)
        assert np.max(np.abs(np.diff(path, axis=0))) < 0.3
        assert np.linalg.norm(path[-1]) < np.linalg.norm(path[0])

    def test_posterior_mean_path(self):
        data = make_data(40, 4, seed=6)
        prior = NeuronizedPrior(relu(), 0.0, 1.0)
        path = solution_path("posterior_mean", data, [0.0, 1.0], prior,
                             sampler_config=SamplerConfig(iterations=600, burn_in=100))
        assert path.shape == (2, 4) and np.all(np.isfinite(path))

    def test_grid_direction_checked(self):
        data = make_data(20, 3)
        with pytest.raises(ValueError):
            solution_path("map", data, [1.0, 0.0], NeuronizedPrior(relu(), 0.0, 1.0))
        with pytest.raises(ValueError):
            solution_path("map", data, [0.1, 1.0], NeuronizedPrior(identity(), 0.0, 1.0))
        with pytest.raises(ValueError):
            solution_path("bogus", data, [0.0], NeuronizedPrior(relu(), 0.0, 1.0))

    def test_write_csv(self, tmp_path):
        f = tmp_path / "path.csv"
        write_path_csv(f, [0.5, 1.0], np.array([[1.0, 2.0], [3.0, 4.0]]), ["a", "b"])
        lines = f.read_text().splitlines()
        assert lines[0] == "hyper,a,b"
        assert np.loadtxt(f, delimiter=",", skiprows=1).tolist() == [[0.5, 1, 2], [1, 3, 4]]

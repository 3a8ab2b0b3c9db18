import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enn.data import Dataset, standardize
from enn.enrml import StoppingRule, train
from enn.ensemble import ensemble_mean, sample_prior_ensemble
from enn.network import DimensionMismatch, NetworkArchitecture, forward_ensemble
from enn.numerics import RngStream
from enn.uq import PredictionBand, WeightTrace, coverage_check, predict_band, weight_trace_step
from enn.worked_example import ARCH, OBS_STD, T_TRAIN, X_TRAIN

ARCH2 = NetworkArchitecture(2, (3, 2), "tanh")


class TestPredictBand:
    def test_identical_realizations(self):
        w = np.random.default_rng(0).standard_normal(ARCH2.n_weights)
        band = predict_band(ARCH2, np.column_stack([w] * 4), np.ones((3, 2)))
        np.testing.assert_array_equal(band.std, 0.0)
        np.testing.assert_array_equal(band.band_low, band.mean)
        np.testing.assert_array_equal(band.band_high, band.mean)

    def test_zero_k(self):
        ens = sample_prior_ensemble(RngStream(0), ARCH2.n_weights, 5)
        band = predict_band(ARCH2, ens, np.ones((3, 2)), k_sigma=0.0)
        np.testing.assert_array_equal(band.band_low, band.band_high)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            predict_band(ARCH2, np.zeros((ARCH2.n_weights, 2)), np.ones((1, 2)), k_sigma=-1)

    def test_mean_consistent_with_forward(self):
        ens = sample_prior_ensemble(RngStream(1), ARCH2.n_weights, 7)
        x = np.random.default_rng(1).standard_normal((5, 2))
        band = predict_band(ARCH2, ens, x)
        np.testing.assert_allclose(band.mean.ravel(), ensemble_mean(forward_ensemble(ARCH2, ens.current, x)), atol=1e-12)
        assert band.mean.shape == (5, 2)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_band(ARCH2, np.zeros((ARCH2.n_weights, 2)), np.ones((3, 3)))

    def test_prior_only_toy_band(self):
        arch = NetworkArchitecture(1, (100, 1), "relu")
        ens = sample_prior_ensemble(RngStream(0), arch.n_weights, 100)
        band = predict_band(arch, ens, np.linspace(-6, 6, 121))
        assert np.all(np.abs(band.mean) < band.width)
        assert np.all(band.std > 0)

    def test_standardization_inverted(self):
        rng = np.random.default_rng(2)
        raw = Dataset(rng.normal(50, 10, 20), rng.normal(-3, 4, 20))
        sds = standardize(raw)
        arch = NetworkArchitecture(1, (3, 1), "tanh")
        ens = sample_prior_ensemble(RngStream(2), arch.n_weights, 6)
        band = predict_band(arch, ens, raw.inputs, standardization=sds.standardization)
        z = forward_ensemble(arch, ens.current, sds.inputs, flat=False)
        s = sds.standardization
        np.testing.assert_allclose(band.mean, s.targets_from(z.mean(axis=0)), atol=1e-12)
        np.testing.assert_allclose(band.std, z.std(axis=0, ddof=1) * s.target_std, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), k1=st.floats(0, 5), dk=st.floats(0, 5))
    def test_band_monotone_in_k(self, seed, k1, dk):
        ens = sample_prior_ensemble(RngStream(seed), ARCH2.n_weights, 4)
        x = np.random.default_rng(seed).standard_normal((4, 2))
        a, b = predict_band(ARCH2, ens, x, k1), predict_band(ARCH2, ens, x, k1 + dk)
        assert np.all(b.band_low <= a.band_low) and np.all(a.band_high <= b.band_high)
        assert np.all(a.band_low <= a.mean) and np.all(a.mean <= a.band_high)

    def test_std_permutation_invariant(self):
        ens = sample_prior_ensemble(RngStream(3), ARCH2.n_weights, 9)
        x = np.ones((2, 2))
        p = np.random.default_rng(3).permutation(9)
        np.testing.assert_allclose(predict_band(ARCH2, ens.current[:, p], x).std, predict_band(ARCH2, ens, x).std, atol=1e-14)

    def test_csv(self, tmp_path):
        band = PredictionBand(np.array([[0.0], [1.0]]), np.array([[1.0], [2.0]]), np.array([[0.5], [0.0]]))
        band.to_csv(tmp_path / "b.csv")
        rows = list(csv.reader(open(tmp_path / "b.csv")))
        assert rows[0] == ["x0", "mean0", "std0", "low0", "high0"]
        assert [float(v) for v in rows[1]] == [0.0, 1.0, 0.5, -0.5, 2.5]


class TestWeightTrace:
    def test_identical_columns(self):
        w = np.arange(4.0)
        t = weight_trace_step(WeightTrace(), np.column_stack([w, w, w]))
        np.testing.assert_array_equal(t.stds[0], 0.0)
        np.testing.assert_array_equal(t.means[0], w)

    def test_pair_divisor(self):
        v = np.array([1.0, -2.0, 0.5])
        t = weight_trace_step(WeightTrace(), np.column_stack([v, -v]))
        np.testing.assert_allclose(t.means[0], 0.0)
        np.testing.assert_allclose(t.stds[0], np.abs(v) * np.sqrt(2))

    def test_appends_and_checks_size(self):
        t = weight_trace_step(WeightTrace(), np.ones((3, 2)))
        t = weight_trace_step(t, np.zeros((3, 2)))
        assert len(t) == 2
        with pytest.raises(DimensionMismatch):
            weight_trace_step(t, np.ones((4, 2)))

    def test_spread_collapses_on_converged_runs(self):
        """Over seeds 0-9, each run that reaches 31 accepted steps has
        at least halved the per-weight spread for at least 90% of weights."""
        reached = 0
        for seed in range(10):
            trace = [WeightTrace()]

            def cb(rec, ens):
                if rec.accepted:
                    trace[0] = weight_trace_step(trace[0], ens)

            train(ARCH, Dataset(X_TRAIN, T_TRAIN), OBS_STD, n_ensemble=10, rng=seed,
                  stopping=StoppingRule(max_iterations=300, max_accepted=31), callback=cb)
            t = trace[0]
            if len(t) < 32:
                continue
            reached += 1
            assert np.mean(t.stds[31] < 0.5 * t.stds[0]) >= 0.9
        assert reached >= 1

    def test_csv(self, tmp_path):
        t = weight_trace_step(WeightTrace(), np.array([[1.0, 3.0], [0.0, 0.0]]))
        t.to_csv(tmp_path / "w.csv")
        rows = list(csv.reader(open(tmp_path / "w.csv")))
        assert rows[0] == ["iteration", "mean0", "mean1", "std0", "std1"]
        assert len(rows) == 2


class TestCoverage:
    band = PredictionBand(np.zeros((3, 1)), np.array([[0.0], [1.0], [2.0]]), np.array([[1.0], [1.0], [0.0]]))

    def test_truth_is_mean(self):
        assert coverage_check(self.band, self.band.mean) == 1.0

    def test_truth_above(self):
        assert coverage_check(self.band, self.band.band_high + 1) == 0.0

    def test_partial(self):
        assert coverage_check(self.band, [0.0, 10.0, 2.0]) == pytest.approx(2 / 3)

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            coverage_check(self.band, np.zeros(4))

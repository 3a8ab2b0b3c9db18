from dataclasses import astuple

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enn.data import Dataset
from enn.enrml import (
    Decision,
    LambdaController,
    MaxIterations,
    NoiseModel,
    PriorModel,
    RepeatedRejection,
    StoppingRule,
    data_mismatch,
    enrml_step,
    lambda_init,
    lambda_update,
    mismatch_stats,
    objective,
    perturb_observations,
    run_enrml,
    train,
)
from enn.ensemble import WeightEnsemble, covariances, sample_prior_ensemble
from enn.network import DimensionMismatch, NetworkArchitecture, forward, forward_ensemble
from enn.numerics import RngStream
from enn.worked_example import ARCH, LAMBDA_1, OBS_STD, PRINTED, T_TRAIN, X_TRAIN, load_fixture

from oracles import gradient_form_update, random_spd, sample_cov


class TestModels:
    def test_noise_positive(self):
        with pytest.raises(ValueError):
            NoiseModel([0.1, 0.0])
        n = NoiseModel.uniform(0.002, 6)
        assert len(n) == 6
        np.testing.assert_allclose(n.cov_diag, 4e-6)

    def test_prior_positive(self):
        with pytest.raises(ValueError):
            PriorModel(np.zeros(2), [1.0, -1.0])
        p = PriorModel.standard(3, mean=1.0, std=2.0)
        np.testing.assert_array_equal(p.cov_diag, 4.0)

    def test_controller_floor(self):
        assert LambdaController(1e-9).lam == 0.005
        with pytest.raises(ValueError):
            LambdaController(1.0, gamma=1.0)


class TestDataMismatch:
    noise = NoiseModel.uniform(0.002, 6)

    def test_perfect_fit(self):
        assert data_mismatch(T_TRAIN, T_TRAIN, self.noise) == 0.0

    def test_unit_residuals(self):
        assert data_mismatch(T_TRAIN + 0.002, T_TRAIN, self.noise) == pytest.approx(6.0, rel=1e-12)

    def test_matrix_gives_per_column(self):
        P = np.column_stack([T_TRAIN, T_TRAIN + 0.002])
        np.testing.assert_allclose(data_mismatch(P, T_TRAIN, self.noise), [0.0, 6.0])

    def test_worked_example_mean(self):
        sd_mean, sd_std = mismatch_stats(load_fixture("g1_train"), T_TRAIN, self.noise)
        assert abs(sd_mean - PRINTED["sd_mean_1"]) / PRINTED["sd_mean_1"] <= 5e-3
        assert abs(sd_std - PRINTED["sd_std_1"]) / PRINTED["sd_std_1"] <= 5e-3

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            data_mismatch(np.zeros(5), T_TRAIN, self.noise)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 20))
    def test_nonnegative(self, seed, n):
        rng = np.random.default_rng(seed)
        noise = NoiseModel(rng.uniform(0.1, 2.0, n))
        assert data_mismatch(rng.standard_normal(n), rng.standard_normal(n), noise) >= 0


class TestObjective:
    def test_global_minimum(self):
        prior = PriorModel.standard(3)
        noise = NoiseModel.uniform(0.1, 2)
        assert objective(np.ones(3), np.ones(3), [1.0, 2.0], [1.0, 2.0], prior, noise) == 0.0

    def test_single_deviation(self):
        prior = PriorModel.standard(3)
        noise = NoiseModel.uniform(0.1, 2)
        assert objective([1.0, 0, 0], np.zeros(3), [1.0, 2.0], [1.0, 2.0], prior, noise) == 0.5

    def test_equals_half_mismatch_at_prior(self):
        prior = PriorModel.standard(2)
        noise = NoiseModel.uniform(0.5, 3)
        pred, d = np.array([1.0, 2.0, 3.0]), np.zeros(3)
        assert objective(np.ones(2), np.ones(2), pred, d, prior, noise) == 0.5 * data_mismatch(pred, d, noise)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), n_m=st.integers(1, 15), n_d=st.integers(1, 15))
    def test_matches_quadratic_form(self, seed, n_m, n_d):
        rng = np.random.default_rng(seed)
        m, m_pr = rng.standard_normal(n_m), rng.standard_normal(n_m)
        pred, d = rng.standard_normal(n_d), rng.standard_normal(n_d)
        cm, sd = rng.uniform(0.5, 2, n_m), rng.uniform(0.5, 2, n_d)
        dm, dd = m - m_pr, pred - d
        expected = 0.5 * dm @ np.linalg.inv(np.diag(cm)) @ dm + 0.5 * dd @ np.linalg.inv(np.diag(sd**2)) @ dd
        got = objective(m, m_pr, pred, d, PriorModel(np.zeros(n_m), cm), NoiseModel(sd))
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestPerturb:
    def test_shape_and_band(self):
        D = perturb_observations(T_TRAIN, NoiseModel.uniform(0.002, 6), RngStream(0), 10)
        assert D.shape == (6, 10)
        assert np.abs(D - T_TRAIN[:, None]).max() <= 0.01

    def test_tiny_noise_limit(self):
        D = perturb_observations(T_TRAIN, NoiseModel.uniform(1e-300, 6), RngStream(0), 4)
        np.testing.assert_array_equal(D, np.repeat(T_TRAIN[:, None], 4, axis=1))

    def test_moments(self):
        D = perturb_observations(T_TRAIN, NoiseModel.uniform(0.002, 6), RngStream(1), 10_000)
        np.testing.assert_allclose(D.std(axis=1, ddof=1), 0.002, rtol=0.03)

    def test_printed_perturbations_are_plausible(self):
        d1 = load_fixture("d1_obs")
        assert np.abs(d1 - T_TRAIN[:, None]).max() <= 0.067

    def test_needs_two(self):
        with pytest.raises(ValueError):
            perturb_observations(T_TRAIN, NoiseModel.uniform(0.002, 6), RngStream(0), 1)


def linear_instance(seed, n_m, n_d, n_e):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_d, n_m))
    c = rng.standard_normal(n_d)
    M_pr = rng.standard_normal((n_m, n_e))
    M = M_pr + 0.3 * rng.standard_normal((n_m, n_e))
    d = rng.standard_normal(n_d)
    noise = NoiseModel(rng.uniform(0.5, 1.5, n_d))
    prior = PriorModel(np.zeros(n_m), rng.uniform(0.5, 2.0, n_m))
    D = d[:, None] + noise.obs_std[:, None] * rng.standard_normal((n_d, n_e))
    return G, c, M, M_pr, D, noise, prior


class TestEnrmlStep:
    def test_fixed_point(self):
        arch = NetworkArchitecture(2, (3, 1), "tanh")
        ens = sample_prior_ensemble(RngStream(0), arch.n_weights, 8)
        preds = forward_ensemble(arch, ens.current, np.random.default_rng(0).standard_normal((4, 2)))
        cov = covariances(ens.current, preds)
        out = enrml_step(ens, preds, preds, cov, PriorModel.standard(arch.n_weights), NoiseModel.uniform(0.1, 4), 1.0)
        np.testing.assert_allclose(out, ens.current, atol=1e-10)

    def test_damping_limit_monotone(self):
        G, c, M, M_pr, D, noise, prior = linear_instance(1, 5, 4, 12)
        ens = WeightEnsemble(M, M_pr)
        preds = G @ M + c[:, None]
        cov = covariances(M, preds)
        steps = [np.abs(enrml_step(ens, preds, D, cov, prior, noise, lam) - M).max() for lam in (1e3, 1e6, 1e9, 1e12)]
        assert all(a > b for a, b in zip(steps, steps[1:]))
        assert steps[-1] < 1e-6

    def test_input_unmodified(self):
        G, c, M, M_pr, D, noise, prior = linear_instance(2, 4, 3, 6)
        ens = WeightEnsemble(M.copy(), M_pr)
        preds = G @ M + c[:, None]
        enrml_step(ens, preds, D, covariances(M, preds), prior, noise, 0.5)
        np.testing.assert_array_equal(ens.current, M)

    def test_rejects_nonpositive_lambda(self):
        G, c, M, M_pr, D, noise, prior = linear_instance(3, 3, 3, 5)
        preds = G @ M
        with pytest.raises(ValueError):
            enrml_step(WeightEnsemble(M, M_pr), preds, D, covariances(M, preds), prior, noise, 0.0)

    def test_shape_checks(self):
        G, c, M, M_pr, D, noise, prior = linear_instance(3, 3, 3, 5)
        preds = G @ M
        with pytest.raises(DimensionMismatch):
            enrml_step(WeightEnsemble(M, M_pr), preds, D[:, :4], covariances(M, preds), prior, noise, 1.0)

    def test_worked_example_m2_entries(self):
        m1 = load_fixture("m1")
        g1 = forward_ensemble(ARCH, m1, X_TRAIN)
        out = enrml_step(
            WeightEnsemble(m1, m1), g1, load_fixture("d1_obs"), covariances(m1, g1),
            PriorModel.standard(16), NoiseModel.uniform(OBS_STD, 6), LAMBDA_1,
        )
        assert abs(out[0, 0] - 0.442) <= 5e-3
        assert abs(out[1, 0] - 1.380) <= 5e-3
        assert abs(out[15, 9] - 0.820) <= 5e-3
        assert np.abs(out - load_fixture("m2")).max() <= 5e-3

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n_m=st.integers(1, 8), n_d=st.integers(1, 8), lam=st.floats(1e-3, 1e3))
    def test_matches_gradient_form_on_linear_maps(self, seed, n_m, n_d, lam):
        n_e = n_m + n_d + 5
        G, c, M, M_pr, D, noise, prior = linear_instance(seed, n_m, n_d, n_e)
        preds = G @ M + c[:, None]
        got = enrml_step(WeightEnsemble(M, M_pr), preds, D, covariances(M, preds), prior, noise, lam)
        want = gradient_form_update(
            M, M_pr, G, preds, D, sample_cov(M), np.diag(prior.cov_diag), np.diag(noise.cov_diag), lam
        )
        np.testing.assert_allclose(got, want, atol=1e-8, rtol=0)

    def test_anomaly_path_matches_dense(self):
        G, c, M, M_pr, D, noise, prior = linear_instance(4, 40, 6, 9)
        ens = WeightEnsemble(M, M_pr)
        preds = np.tanh(G @ M + c[:, None])
        dense = enrml_step(ens, preds, D, covariances(M, preds), prior, noise, 2.0)
        lazy_cov = covariances(M, preds, threshold=10)
        assert lazy_cov.c_m is None
        np.testing.assert_allclose(enrml_step(ens, preds, D, lazy_cov, prior, noise, 2.0), dense, atol=1e-10)


class TestLambda:
    def test_init_worked_example(self):
        assert abs(lambda_init(PRINTED["sd_mean_1"], 6) - LAMBDA_1) <= 1

    def test_init_floor_and_arithmetic(self):
        assert lambda_init(0.0, 6) == 0.005
        assert lambda_init(12.0, 6) == 1.0

    def test_init_rejects_invalid(self):
        with pytest.raises(ValueError):
            lambda_init(-1.0, 6)
        with pytest.raises(ValueError):
            lambda_init(1.0, 0)

    def test_hold(self):
        ctrl = LambdaController(LAMBDA_1)
        decision, lam = lambda_update(
            ctrl, PRINTED["sd_mean_1"], PRINTED["sd_std_1"], PRINTED["sd_mean_2"], PRINTED["sd_std_2"]
        )
        assert decision is Decision.ACCEPT_HOLD and lam == LAMBDA_1

    def test_shrink(self):
        ctrl = LambdaController(LAMBDA_1)
        decision, lam = lambda_update(
            ctrl, PRINTED["sd_mean_2"], PRINTED["sd_std_2"], PRINTED["sd_mean_3"], PRINTED["sd_std_3"]
        )
        assert decision is Decision.ACCEPT_SHRINK and lam == pytest.approx(LAMBDA_1 / 10)

    def test_reject(self):
        decision, lam = lambda_update(LambdaController(2.0), 10.0, 1.0, 11.0, 0.5)
        assert decision is Decision.REJECT_GROW and lam == 20.0
        assert not decision.accepted

    def test_equal_mean_is_rejected(self):
        assert lambda_update(LambdaController(2.0), 10.0, 1.0, 10.0, 0.5)[0] is Decision.REJECT_GROW

    @settings(max_examples=100, deadline=None)
    @given(
        lam=st.floats(1e-6, 1e9),
        stats=st.tuples(*[st.floats(0, 1e9)] * 4),
    )
    def test_floor_always_holds(self, lam, stats):
        _, new = lambda_update(LambdaController(lam), *stats)
        assert new >= 0.005


class CountingMap:
    """Black-box forward map exposing only evaluation and a call counter."""

    __slots__ = ("arch", "x", "calls")

    def __init__(self, arch, x):
        self.arch, self.x, self.calls = arch, x, 0

    def __call__(self, w):
        self.calls += 1
        return forward_ensemble(self.arch, w, self.x)


class TestRunEnrml:
    def setup_method(self):
        self.fmap = CountingMap(ARCH, X_TRAIN)
        self.ens = sample_prior_ensemble(RngStream(3), ARCH.n_weights, 10)
        self.noise = NoiseModel.uniform(OBS_STD, 6)
        self.prior = PriorModel.standard(ARCH.n_weights)

    def run(self, **stop):
        return run_enrml(
            self.fmap, self.ens, T_TRAIN, self.noise, self.prior, RngStream(4), StoppingRule(**stop)
        )

    def test_gradient_free_contract(self):
        _, state = self.run(max_iterations=15)
        assert self.fmap.calls == state.forward_calls == state.iteration + 1

    def test_history_and_invariants(self):
        _, state = self.run(max_iterations=40)
        h = state.loss_history
        assert [r.iteration for r in h] == list(range(len(h)))
        accepted = [r.sd_mean for r in h if r.accepted]
        assert all(a >= b for a, b in zip(accepted, accepted[1:]))
        assert all(r.lam >= 0.005 and r.sd_mean >= 0 and r.sd_std >= 0 for r in h)
        assert state.n_accepted + state.n_rejected == state.iteration
        assert h[0].train_loss == pytest.approx(np.mean(np.abs(forward_ensemble(ARCH, self.ens.current, X_TRAIN).mean(1) - T_TRAIN)))

    def test_prior_never_changes(self):
        before = self.ens.prior.copy()
        final, _ = self.run(max_iterations=10)
        np.testing.assert_array_equal(final.prior, before)
        np.testing.assert_array_equal(self.ens.current, before)

    def test_max_accepted(self):
        _, state = self.run(max_iterations=500, max_accepted=5)
        assert state.stop_reason == "max_accepted" and state.n_accepted == 5

    def test_strict_max_iterations(self):
        with pytest.raises(MaxIterations):
            self.run(max_iterations=3, strict=True)

    def test_repeated_rejection(self):
        fmap = CountingMap(ARCH, X_TRAIN)

        def worse(w):
            return fmap(w) + 1e3 * fmap.calls  # every proposal looks worse than the last
        ens, state = run_enrml(worse, self.ens, T_TRAIN, self.noise, self.prior, RngStream(0), StoppingRule(max_rejections=3))
        assert state.stop_reason == "repeated_rejection" and state.n_accepted == 0 and state.iteration == 3
        np.testing.assert_array_equal(ens.current, self.ens.current)
        with pytest.raises(RepeatedRejection):
            run_enrml(worse, self.ens, T_TRAIN, self.noise, self.prior, RngStream(0),
                      StoppingRule(max_rejections=3, strict=True))

    def test_rejection_grows_lambda(self):
        fmap = CountingMap(ARCH, X_TRAIN)

        def worse(w):
            return fmap(w) + 1e3 * fmap.calls
        _, state = run_enrml(worse, self.ens, T_TRAIN, self.noise, self.prior, RngStream(0),
                             StoppingRule(max_rejections=3), controller=LambdaController(1.0))
        assert [r.lam for r in state.loss_history[1:]] == [1.0, 10.0, 100.0]
        assert state.lam == 1000.0

    def test_converged(self):
        arch = NetworkArchitecture(2, (1,), "linear")
        x = np.random.default_rng(0).standard_normal((10, 2))
        ds = Dataset(x, forward(arch, [1.0, 2.0, 0.5], x))
        _, state = train(arch, ds, 0.5, n_ensemble=30, rng=0, stopping=StoppingRule(max_iterations=500, rel_tol=1e-2))
        assert state.stop_reason == "converged"

    def test_fixed_perturbation_reproducible(self):
        kw = dict(n_ensemble=10, rng=1, stopping=StoppingRule(max_iterations=10))
        ds = Dataset(X_TRAIN, T_TRAIN)
        a, _ = train(ARCH, ds, OBS_STD, perturbation="fixed", **kw)
        b, _ = train(ARCH, ds, OBS_STD, perturbation="fixed", **kw)
        c, _ = train(ARCH, ds, OBS_STD, **kw)
        np.testing.assert_array_equal(a.current, b.current)
        assert not np.array_equal(a.current, c.current)

    def test_bad_perturbation_mode(self):
        with pytest.raises(ValueError):
            run_enrml(self.fmap, self.ens, T_TRAIN, self.noise, self.prior, RngStream(0), perturbation="once")

    def test_callback_sees_every_record(self):
        seen = []
        run_enrml(self.fmap, self.ens, T_TRAIN, self.noise, self.prior, RngStream(0), StoppingRule(max_iterations=5),
                  callback=lambda rec, ens: seen.append(rec.iteration))
        assert seen == list(range(6))


class TestTrain:
    def test_linear_network_recovers_targets(self):
        arch = NetworkArchitecture(2, (1,), "linear")
        rng = RngStream(0)
        x = rng.standard_normal((30, 2))
        ds = Dataset(x, forward(arch, [1.5, -0.7, 0.3], x))
        ens, state = train(arch, ds, 1e-4, n_ensemble=200, rng=1, stopping=StoppingRule(max_iterations=200))
        assert state.loss_history[-1].train_loss < 1e-3
        np.testing.assert_allclose(np.linalg.lstsq(np.column_stack([x, np.ones(30)]), ds.targets[:, 0], rcond=None)[0],
                                   ens.current.mean(axis=1), atol=1e-3)

    def test_deterministic(self):
        ds = Dataset(X_TRAIN, T_TRAIN)
        kw = dict(n_ensemble=10, rng=5, stopping=StoppingRule(max_iterations=20))
        a, sa = train(ARCH, ds, OBS_STD, **kw)
        b, sb = train(ARCH, ds, OBS_STD, **kw)
        np.testing.assert_array_equal(a.current, b.current)
        np.testing.assert_array_equal([astuple(r) for r in sa.loss_history], [astuple(r) for r in sb.loss_history])

    def test_test_loss_recorded(self):
        ds = Dataset(X_TRAIN, T_TRAIN)
        test = Dataset([3.0, 5.0, 7.0], [7.0, 11.0, 15.0])
        _, state = train(ARCH, ds, OBS_STD, n_ensemble=10, rng=0, test_dataset=test, stopping=StoppingRule(max_iterations=3))
        assert all(np.isfinite(r.test_loss) for r in state.loss_history)

    def test_rejects_small_ensemble(self):
        with pytest.raises(ValueError):
            train(ARCH, Dataset(X_TRAIN, T_TRAIN), OBS_STD, n_ensemble=1)

    def test_minimum_ensemble_runs(self):
        _, state = train(ARCH, Dataset(X_TRAIN, T_TRAIN), OBS_STD, n_ensemble=2, rng=0, stopping=StoppingRule(max_iterations=20))
        assert state.iteration >= 1


def test_spd_oracle_helper_is_spd():
    A = random_spd(np.random.default_rng(0), 5)
    assert np.linalg.eigvalsh(A).min() > 0

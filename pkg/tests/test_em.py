import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdbounds.em import EmOptions, Posterior, em_fit, em_map_predict, log_likelihood, posterior_ds
from crowdbounds.model import DawidSkeneParams, LabelMatrix, OneCoinParams, SamplingDesign, error_rate, to_dawid_skene
from crowdbounds.montecarlo import BetaAccuracy, CrowdGenerator, aggregate, generate
from crowdbounds.rules import oracle_map_rule, predict


def fig_a_crowd(wbar, seed, model="one_coin"):
    gen = CrowdGenerator(11, 300, BetaAccuracy.from_mean(wbar), model=model,
                         sampling=SamplingDesign.constant(0.8), seed=seed, balanced=True)
    return generate(gen)


class TestPosterior:
    def test_single_worker(self):
        rho = posterior_ds(LabelMatrix(np.array([[1]])), OneCoinParams([0.8])).rho
        assert rho[0] == pytest.approx(0.8, abs=1e-12)

    def test_two_agreeing_workers(self):
        rho = posterior_ds(LabelMatrix(np.array([[1], [1]])), OneCoinParams([0.8, 0.8])).rho
        assert rho[0] == pytest.approx(0.64 / 0.68, abs=1e-12)
        assert rho[0] == pytest.approx(0.9412, abs=5e-5)

    def test_empty_item_gets_prior(self):
        rho = posterior_ds(LabelMatrix(np.array([[1, 0], [-1, 0]])), OneCoinParams([0.7, 0.9], prior=0.3)).rho
        assert rho[1] == pytest.approx(0.3)

    def test_extreme_params_finite(self):
        lm = LabelMatrix(np.ones((60, 1), dtype=int))
        rho = posterior_ds(lm, OneCoinParams(np.full(60, 1.0))).rho
        assert rho[0] == 1.0 or rho[0] == pytest.approx(1.0)
        assert np.isfinite(log_likelihood(lm, OneCoinParams(np.full(60, 1.0))))

    def test_range_check(self):
        with pytest.raises(ValueError):
            Posterior([0.2, 1.5])

    def test_map_threshold(self):
        assert Posterior([0.9, 0.1, 0.5]).map_labels().tolist() == [1, -1, 1]


class TestLogLikelihood:
    def test_no_observations(self):
        assert log_likelihood(LabelMatrix(np.zeros((3, 5), dtype=int)), OneCoinParams([0.7] * 3, 0.2)) == 0.0

    def test_single_entry(self):
        ll = log_likelihood(LabelMatrix(np.array([[1]])), OneCoinParams([0.8]))
        assert ll == pytest.approx(math.log(0.5), abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        z = rng.choice([-1, 0, 1], size=(4, 6))
        p = DawidSkeneParams(rng.uniform(0.2, 0.9, 4), rng.uniform(0.2, 0.9, 4), 0.35)
        total = 0.0
        for j in range(6):
            a, b = p.prior, 1 - p.prior
            for i in range(4):
                if z[i, j] == 1:
                    a *= p.sensitivity[i]
                    b *= 1 - p.specificity[i]
                elif z[i, j] == -1:
                    a *= 1 - p.sensitivity[i]
                    b *= p.specificity[i]
            total += math.log(a + b)
        assert log_likelihood(LabelMatrix(z), p) == pytest.approx(total, rel=1e-12)


class TestEmFit:
    def test_unanimous_crowd(self):
        lm = LabelMatrix(np.ones((5, 40), dtype=int))
        fit = em_fit(lm)
        assert fit.converged and fit.iterations <= 5
        assert np.all(fit.params.accuracy > 0.95)
        assert np.all(fit.posterior.rho > 0.999)
        pred, _, _ = em_map_predict(lm)
        assert np.all(pred.labels == 1)

    @pytest.mark.parametrize("s", [0.0, 0.5, 2.0])
    def test_single_worker_closed_form(self, s):
        z = np.array([[1, -1, 1, 1, -1, 1, 1]])
        n = z.size
        fit = em_fit(LabelMatrix(z), opts=EmOptions(max_iter=1, smoothing=s))
        assert fit.params.accuracy[0] == pytest.approx((s + n) / (2 * s + n))
        np.testing.assert_array_equal(fit.posterior.map_labels(), z[0])

    @pytest.mark.parametrize("model", ["one_coin", "dawid_skene"])
    @pytest.mark.parametrize("wbar", [0.3, 0.6, 0.75, 0.9])
    def test_objective_monotone(self, model, wbar):
        for seed in range(3):
            fit = em_fit(fig_a_crowd(wbar, seed).labels, model)
            assert np.all(np.diff(fit.objective_trace) >= -1e-9)

    @pytest.mark.parametrize("model", ["one_coin", "dawid_skene"])
    def test_loglik_monotone_unsmoothed(self, model):
        for wbar, seed in [(0.3, 0), (0.6, 1), (0.8, 2)]:
            fit = em_fit(fig_a_crowd(wbar, seed).labels, model, EmOptions(smoothing=0.0))
            assert np.all(np.diff(fit.loglik_trace) >= -1e-9)
            assert np.allclose(fit.loglik_trace, fit.objective_trace)

    def test_posteriors_in_range_every_iteration(self):
        lm = fig_a_crowd(0.65, 3).labels
        for k in range(1, 8):
            rho = em_fit(lm, "dawid_skene", EmOptions(max_iter=k)).posterior.rho
            assert np.all((rho >= 0) & (rho <= 1))

    def test_fixed_prior(self):
        fit = em_fit(fig_a_crowd(0.7, 0).labels, opts=EmOptions(estimate_prior=False), prior=0.3)
        assert fit.params.prior == 0.3

    def test_soft_init(self):
        crowd = fig_a_crowd(0.8, 4)
        hard = em_map_predict(crowd.labels)[0]
        soft = em_map_predict(crowd.labels, opts=EmOptions(init="soft"))[0]
        assert abs(error_rate(hard, crowd.gold) - error_rate(soft, crowd.gold)) <= 0.01

    def test_nonconvergence_flag(self):
        fit = em_fit(fig_a_crowd(0.6, 0).labels, opts=EmOptions(max_iter=1))
        assert fit.iterations == 1 and not fit.converged

    def test_bad_model(self):
        with pytest.raises(ValueError):
            em_fit(LabelMatrix(np.ones((1, 1), dtype=int)), "three_coin")

    @pytest.mark.parametrize("kwargs", [dict(max_iter=0), dict(tol=0.0), dict(smoothing=-1), dict(init="x")])
    def test_bad_options(self, kwargs):
        with pytest.raises(ValueError):
            EmOptions(**kwargs)

    def test_one_coin_consistency(self):
        fit = em_fit(fig_a_crowd(0.75, 5).labels, "one_coin")
        ds = to_dawid_skene(fit.params)
        np.testing.assert_array_equal(ds.sensitivity, fit.params.accuracy)
        np.testing.assert_array_equal(ds.specificity, fit.params.accuracy)
        assert ds.to_one_coin().accuracy.tolist() == fit.params.accuracy.tolist()

    def test_close_to_oracle_when_accurate(self):
        crowd = fig_a_crowd(0.8, 11)
        em_err = error_rate(em_map_predict(crowd.labels)[0], crowd.gold)
        oracle_err = error_rate(aggregate("oracle-map", crowd.labels, crowd.params), crowd.gold)
        assert abs(em_err - oracle_err) <= 0.02

    @pytest.mark.parametrize("wbar", [0.2, 0.3])
    def test_label_switching(self, wbar):
        # a crowd that is mostly wrong drives EM to the flipped mode
        crowd = fig_a_crowd(wbar, 0)
        em_err = error_rate(em_map_predict(crowd.labels)[0], crowd.gold)
        oracle_err = error_rate(aggregate("oracle-map", crowd.labels, crowd.params), crowd.gold)
        assert em_err > 0.8 and oracle_err < 0.2
        assert em_err + oracle_err == pytest.approx(1.0, abs=0.05)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.floats(0.2, 1.0))
def test_map_matches_hyperplane(seed, m, q):
    rng = np.random.default_rng(seed)
    p = OneCoinParams(rng.uniform(0.05, 0.95, m), rng.uniform(0.1, 0.9))
    lm = LabelMatrix(np.where(rng.random((m, 30)) < q, rng.choice([-1, 1], (m, 30)), 0))
    rule = oracle_map_rule(p)
    score = rule.weights @ lm.z + rule.shift
    off_tie = np.abs(score) > 1e-9
    map_labels = posterior_ds(lm, p).map_labels()
    hyper = predict(rule, lm, prior=p.prior).labels
    np.testing.assert_array_equal(map_labels[off_tie], hyper[off_tie])

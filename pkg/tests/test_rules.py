import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdbounds.model import LabelMatrix, OneCoinParams, Prediction, SamplingDesign
from crowdbounds.montecarlo import BetaAccuracy, CrowdGenerator, generate
from crowdbounds.rules import (
    HyperplaneRule,
    bound_optimal_rule,
    estimate_accuracies,
    iterative_wmv,
    majority_rule,
    majority_vote,
    one_step_wmv,
    oracle_map_rule,
    predict,
)


def column(*labels):
    return LabelMatrix(np.array(labels, dtype=int).reshape(-1, 1))


class TestPredict:
    def test_majority(self):
        assert predict(HyperplaneRule([1, 1, 1]), column(1, 1, -1)).labels.tolist() == [1]

    def test_tie_goes_positive(self):
        assert predict(HyperplaneRule([1, 1]), column(1, -1)).labels.tolist() == [1]

    def test_shifted_weighted(self):
        rule = HyperplaneRule([3, 1], -2.5)
        # 3 + 1 - 2.5 = 1.5 and -3 + 1 - 2.5 = -4.5
        assert predict(rule, column(1, 1)).labels.tolist() == [1]
        assert predict(rule, column(-1, 1)).labels.tolist() == [-1]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(HyperplaneRule([1, 1]), column(1, 1, 1))

    def test_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            HyperplaneRule([0.0, 0.0])

    def test_empty_items_reported(self):
        lm = LabelMatrix(np.array([[1, 0, -1], [1, 0, -1]]))
        pred = predict(majority_rule(2), lm)
        assert pred.undetermined == {1}
        assert pred.labels[1] == 1
        assert predict(majority_rule(2), lm, prior=0.3).labels[1] == -1
        assert predict(majority_rule(2), lm, prior=0.5).labels[1] == 1

    def test_float_weights_exact_tie(self):
        # 0.1 * (1 + 1 + 1 - 1 - 1 - 1) does not sum to exactly 0 in floating point
        lm = column(1, 1, 1, -1, -1, -1)
        assert predict(HyperplaneRule([0.1] * 6), lm).labels.tolist() == [1]
        assert predict(HyperplaneRule([0.1] * 6), lm.flipped()).labels.tolist() == [1]


class TestRuleConstructors:
    @pytest.mark.parametrize("m", [1, 5])
    def test_majority_rule(self, m):
        rule = majority_rule(m)
        np.testing.assert_array_equal(rule.weights, np.ones(m))
        assert rule.shift == 0.0

    def test_majority_matches_label_sum(self):
        z = np.random.default_rng(0).choice([-1, 0, 1], size=(7, 50))
        lm = LabelMatrix(z)
        expected = np.where(z.sum(axis=0) >= 0, 1, -1)
        np.testing.assert_array_equal(predict(majority_rule(7), lm).labels, expected)

    def test_oracle_map_rule(self):
        rule = oracle_map_rule(OneCoinParams([0.8]))
        assert rule.weights[0] == pytest.approx(math.log(4.0), abs=1e-12)
        assert rule.shift == 0.0
        rule = oracle_map_rule(OneCoinParams([0.5, 0.9], prior=0.25))
        assert rule.weights[0] == 0.0
        assert rule.shift == pytest.approx(math.log(1 / 3))

    def test_oracle_map_rule_clamps(self):
        rule = oracle_map_rule(OneCoinParams([1.0, 0.0]))
        assert np.all(np.isfinite(rule.weights))
        assert rule.weights[0] == pytest.approx(-rule.weights[1])

    def test_bound_optimal(self):
        rule = bound_optimal_rule([0.9, 0.6, 0.5, 0.3])
        np.testing.assert_allclose(rule.weights, [0.8, 0.2, 0.0, -0.4], atol=1e-15)
        assert rule.shift == 0.0

    def test_taylor_relation(self):
        # bound-optimal weights are the first-order expansion of log-odds at 1/2
        w = np.linspace(0.3, 0.7, 81)
        map_w = np.log(w / (1 - w))
        lin = 2 * bound_optimal_rule(w).weights
        assert np.all(np.abs(map_w - lin) <= 1.5 * (w - 0.5) ** 2 + 1e-15)


class TestInvariances:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.integers(1, 9))
    def test_scale_invariance(self, seed, c, m):
        rng = np.random.default_rng(seed)
        lm = LabelMatrix(rng.choice([-1, 0, 1], size=(m, 40)))
        rule = HyperplaneRule(rng.normal(size=m) + 1e-3, rng.normal())
        np.testing.assert_array_equal(predict(rule, lm).labels, predict(rule.scaled(c), lm).labels)
        mv = majority_rule(m)
        np.testing.assert_array_equal(predict(mv, lm).labels, predict(mv.scaled(c), lm).labels)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 9))
    def test_flip_symmetry(self, seed, m):
        rng = np.random.default_rng(seed)
        lm = LabelMatrix(rng.choice([-1, 1], size=(m, 40)))
        rule = HyperplaneRule(rng.normal(size=m) + 1e-3)
        assert np.all(np.abs(rule.weights @ lm.z) > 1e-9)  # tie-free instance
        np.testing.assert_array_equal(predict(rule, lm.flipped()).labels, -predict(rule, lm).labels)


class TestAccuracyEstimate:
    def test_counts(self):
        ref = np.array([1] * 10)
        z = np.array([[1] * 8 + [-1] * 2, [0] * 10, [1] * 10])
        acc = estimate_accuracies(LabelMatrix(z), Prediction(ref))
        np.testing.assert_allclose(acc, [0.8, 0.5, 1.0])

    def test_self_agreement(self):
        z = np.random.default_rng(1).choice([-1, 1], size=(1, 30))
        assert estimate_accuracies(LabelMatrix(z), z[0])[0] == 1.0


class TestWeightedMajority:
    def test_unanimous_identical_workers(self):
        z = np.tile(np.random.default_rng(2).choice([-1, 1], size=20), (4, 1))
        lm = LabelMatrix(z)
        np.testing.assert_array_equal(one_step_wmv(lm)[0].labels, majority_vote(lm).labels)

    def test_single_worker(self):
        z = np.random.default_rng(3).choice([-1, 1], size=(1, 25))
        pred, rule = one_step_wmv(LabelMatrix(z))
        np.testing.assert_array_equal(pred.labels, z[0])
        assert rule.weights.tolist() == [1.0]

    def test_anticorrelated_worker_flipped(self):
        # workers 0 and 1 follow the truth except worker 1 errs on items 8, 9;
        # worker 2 always contradicts worker 0, so MV gets items 8, 9 wrong
        y = np.array([1, -1, 1, 1, -1, 1, -1, -1, 1, -1])
        w0 = y.copy()
        w1 = y.copy()
        w1[8:] *= -1
        w2 = -y
        lm = LabelMatrix(np.stack([w0, w1, w2]))
        mv = majority_vote(lm)
        assert np.sum(mv.labels != y) == 2
        pred, rule = one_step_wmv(lm)
        # accuracies against MV: 0.8, 1.0, 0.2
        np.testing.assert_allclose(rule.weights, [0.6, 1.0, -0.6])
        np.testing.assert_array_equal(pred.labels, y)

    def test_iterative_fixed_point_single_pass(self):
        z = np.tile(np.random.default_rng(4).choice([-1, 1], size=15), (3, 1))
        res = iterative_wmv(LabelMatrix(z))
        assert res.iterations == 1 and res.converged

    def test_iterative_one_pass_equals_one_step(self):
        gen = CrowdGenerator(9, 120, BetaAccuracy.from_mean(0.65), sampling=SamplingDesign.constant(0.7), seed=5)
        lm = generate(gen).labels
        res = iterative_wmv(lm, max_iter=1)
        pred, rule = one_step_wmv(lm)
        np.testing.assert_array_equal(res.prediction.labels, pred.labels)
        np.testing.assert_array_equal(res.rule.weights, rule.weights)

    def test_iterative_converges_fast(self):
        gen = CrowdGenerator(11, 300, BetaAccuracy.from_mean(0.75), sampling=SamplingDesign.constant(0.8),
                             seed=2024, balanced=True)
        for k in range(5):
            res = iterative_wmv(generate(gen.with_seed(2024 + k)).labels, max_iter=50)
            assert res.converged and res.iterations <= 10

    def test_iterative_bad_args(self):
        lm = column(1)
        with pytest.raises(ValueError):
            iterative_wmv(lm, max_iter=0)
        with pytest.raises(ValueError):
            iterative_wmv(lm, tol=-1)

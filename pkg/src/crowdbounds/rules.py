"""Hyperplane labeling rules ``y_j = sign(sum_i v_i z_ij + a)`` and the
weighted-majority-voting procedures built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    LabelMatrix,
    OneCoinParams,
    Prediction,
    clamp_probability,
    prior_fallback_label,
)

# Scores within this fraction of the score's magnitude budget count as exact ties.
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class HyperplaneRule:
    weights: np.ndarray
    shift: float = 0.0

    def __post_init__(self):
        v = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("weights must be a non-empty finite vector")
        if not np.any(v != 0):
            raise ValueError("weights must not all be zero")
        if not np.isfinite(self.shift):
            raise ValueError("shift must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "weights", v)
        object.__setattr__(self, "shift", float(self.shift))

    @property
    def num_workers(self) -> int:
        return self.weights.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def scaled(self, c: float) -> "HyperplaneRule":
        if c <= 0:
            raise ValueError("scale must be positive")
        return HyperplaneRule(c * self.weights, c * self.shift)


def sign_with_tie(scores: np.ndarray, magnitude: np.ndarray) -> np.ndarray:
    """Sign of ``scores`` with 0 mapped to +1.

    ``magnitude`` is the sum of absolute values of the terms making up each
    score; anything below ``TIE_RTOL * magnitude`` is treated as a tie so that
    round-off cannot break exact ties (e.g. MV with equal split votes).
    """
    tie = np.abs(scores) <= TIE_RTOL * magnitude
    return np.where(tie | (scores > 0), 1, -1).astype(np.int8)


def predict(rule: HyperplaneRule, labels: LabelMatrix, prior: float | None = None) -> Prediction:
    """Apply the rule to every item.

    Items without observations score ``a``; when ``prior`` is given they are
    instead labelled +1 iff ``prior >= 0.5``. Either way they are reported in
    ``Prediction.undetermined``.
    """
    if rule.num_workers != labels.num_workers:
        raise ValueError(f"rule has {rule.num_workers} weights but the matrix has "
                         f"{labels.num_workers} workers")
    z = labels.z.astype(float)
    scores = rule.weights @ z + rule.shift
    magnitude = np.abs(rule.weights) @ np.abs(z) + abs(rule.shift)
    out = sign_with_tie(scores, magnitude)
    empty = np.flatnonzero(labels.labels_per_item() == 0)
    if prior is not None and empty.size:
        out[empty] = prior_fallback_label(prior)
    return Prediction(out, frozenset(empty.tolist()))


def majority_rule(num_workers: int) -> HyperplaneRule:
    if num_workers < 1:
        raise ValueError("need at least one worker")
    return HyperplaneRule(np.ones(num_workers), 0.0)


def majority_vote(labels: LabelMatrix, prior: float | None = None) -> Prediction:
    return predict(majority_rule(labels.num_workers), labels, prior)


def oracle_map_rule(p: OneCoinParams) -> HyperplaneRule:
    """Bayes rule for known one-coin parameters: log-odds weights and prior shift."""
    w = clamp_probability(p.accuracy)
    pi = float(clamp_probability(p.prior))
    weights = np.log(w) - np.log1p(-w)
    if not np.any(weights != 0):
        raise ValueError("every worker has accuracy 1/2; the rule has no signal")
    return HyperplaneRule(weights, float(np.log(pi) - np.log1p(-pi)))


def bound_optimal_rule(accuracies) -> HyperplaneRule:
    """Weights ``2 w_i - 1`` with zero shift."""
    w = np.asarray(accuracies, dtype=float)
    return HyperplaneRule(2.0 * w - 1.0, 0.0)


def estimate_accuracies(labels: LabelMatrix, reference) -> np.ndarray:
    """Per-worker agreement rate with ``reference`` labels.

    ``reference`` is a Prediction, a length-N label vector, or a dense vector
    with 0 for items to skip. Workers with nothing to compare get 0.5.
    """
    ref = reference.labels if isinstance(reference, Prediction) else np.asarray(reference)
    if ref.shape != (labels.num_items,):
        raise ValueError(f"reference must have {labels.num_items} entries")
    usable = labels.observed & (ref != 0)[None, :]
    agree = (labels.z == ref[None, :]) & usable
    n = usable.sum(axis=1)
    acc = np.full(labels.num_workers, 0.5)
    has = n > 0
    acc[has] = agree.sum(axis=1)[has] / n[has]
    return acc


def _reweighted(labels: LabelMatrix, reference: np.ndarray) -> tuple[Prediction, HyperplaneRule]:
    acc = estimate_accuracies(labels, reference)
    v = 2.0 * acc - 1.0
    # all workers look like spammers: no usable weighting, keep plain MV
    rule = HyperplaneRule(v) if np.any(v != 0) else majority_rule(labels.num_workers)
    return predict(rule, labels), rule


def one_step_wmv(labels: LabelMatrix) -> tuple[Prediction, HyperplaneRule]:
    """MV, then one weighted vote with weights ``2 w_hat - 1`` estimated against MV."""
    mv = majority_vote(labels)
    return _reweighted(labels, mv.labels)


@dataclass(frozen=True)
class IterativeWmvResult:
    prediction: Prediction
    rule: HyperplaneRule
    iterations: int
    converged: bool


def iterative_wmv(labels: LabelMatrix, max_iter: int = 100, tol: float = 0.0) -> IterativeWmvResult:
    """Repeat the reweighting step until the predicted labels stop changing.

    Converged means the fraction of items whose label changed in the last
    pass is at most ``tol`` (0 demands an exact fixed point). Cycling inputs
    run to ``max_iter`` and report ``converged=False``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    reference = majority_vote(labels).labels
    for it in range(1, max_iter + 1):
        pred, rule = _reweighted(labels, reference)
        changed = float(np.mean(pred.labels != reference))
        if changed <= tol:
            return IterativeWmvResult(pred, rule, it, True)
        reference = pred.labels
    return IterativeWmvResult(pred, rule, max_iter, False)

"""Error-rate bound calculators for hyperplane rules under the Dawid-Skene model.

All statistics are invariant to positive rescaling of ``(v, a)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    DawidSkeneParams,
    GoldLabels,
    LabelMatrix,
    OneCoinParams,
    Prediction,
    SamplingDesign,
    to_dawid_skene,
)
from .rules import HyperplaneRule, estimate_accuracies, oracle_map_rule


def phi(x):
    """``exp(-x^2 / 2)``."""
    return np.exp(-np.square(x) / 2.0)


def kl_bernoulli(x: float, y: float) -> float:
    """KL divergence between Bernoulli(x) and Bernoulli(y)."""
    if not (0 < x < 1 and 0 < y < 1):
        raise ValueError(f"kl_bernoulli needs x, y in (0, 1), got x={x}, y={y}")
    return x * math.log(x / y) + (1 - x) * math.log((1 - x) / (1 - y))


def _kl_to_phi(eps: float, t: float) -> float:
    """``D(eps || phi(t))`` evaluated in log space so large ``t`` never underflows."""
    log_y = -t * t / 2.0
    return (eps * (math.log(eps) - log_y)
            + (1 - eps) * (math.log1p(-eps) - math.log1p(-math.exp(log_y))))


def _check_rule(rule: HyperplaneRule, m: int) -> None:
    if rule.num_workers != m:
        raise ValueError(f"rule has {rule.num_workers} weights, params have {m} workers")


def _sampling_columns(p) -> np.ndarray:
    return p.sampling.columns(p.num_workers)


def t_stats(rule: HyperplaneRule, p: DawidSkeneParams | OneCoinParams) -> tuple[float, float]:
    """Normalised worst-case (``t1``) and best-case (``t2``) expected scores."""
    p = to_dawid_skene(p)
    _check_rule(rule, p.num_workers)
    q = _sampling_columns(p)
    v = rule.weights[:, None]
    eps_plus = np.sum(q * v * (2 * p.sensitivity[:, None] - 1), axis=0) + rule.shift
    eps_minus = np.sum(q * v * (2 * p.specificity[:, None] - 1), axis=0) - rule.shift
    nv = rule.norm
    return (float(np.min(np.minimum(eps_plus, eps_minus)) / nv),
            float(np.max(np.maximum(eps_plus, eps_minus)) / nv))


def t_stats_onecoin(rule: HyperplaneRule, p: OneCoinParams) -> tuple[float, float]:
    """One-coin variant with the shift entering as ``-|a|`` / ``+|a|``."""
    _check_rule(rule, p.num_workers)
    q = _sampling_columns(p)
    base = np.sum(q * rule.weights[:, None] * (2 * p.accuracy[:, None] - 1), axis=0)
    nv = rule.norm
    return (float(np.min(base - abs(rule.shift)) / nv),
            float(np.max(base + abs(rule.shift)) / nv))


def dispersion_stats(rule: HyperplaneRule, p: DawidSkeneParams | OneCoinParams,
                     simplified: bool = False) -> tuple[float, float]:
    """``(c_H, sigma^2)``.

    ``simplified=True`` gives the one-coin upper estimate
    ``max_j sum_i v_i^2 q_ij / ||v||^2`` in place of the exact variance term.
    """
    p = to_dawid_skene(p)
    _check_rule(rule, p.num_workers)
    v2 = np.square(rule.weights)[:, None]
    nv2 = float(np.sum(v2))
    c_h = float(np.max(np.abs(rule.weights)) / math.sqrt(nv2))
    q = _sampling_columns(p)
    if simplified:
        return c_h, float(np.max(np.sum(v2 * q, axis=0)) / nv2)
    var_pos = np.sum(v2 * q * (1 - q * np.square(2 * p.sensitivity[:, None] - 1)), axis=0)
    var_neg = np.sum(v2 * q * (1 - q * np.square(2 * p.specificity[:, None] - 1)), axis=0)
    return c_h, float(np.max(np.maximum(var_pos, var_neg)) / nv2)


@dataclass(frozen=True)
class BoundReport:
    t1: float
    t2: float
    c_H: float
    sigma2: float
    hoeffding_upper: float | None = None
    bernstein_upper: float | None = None
    combined_upper: float | None = None
    hoeffding_lower: float | None = None
    bernstein_lower: float | None = None
    combined_lower: float | None = None
    t1_nonneg: bool = False
    t2_nonpos: bool = False
    estimated: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def upper_or_vacuous(self) -> float:
        return 1.0 if self.combined_upper is None else self.combined_upper

    def lower_or_vacuous(self) -> float:
        return 0.0 if self.combined_lower is None else self.combined_lower


def _bernstein_tail(t: float, sigma2: float, c_h: float) -> float:
    denom = 2.0 * (sigma2 + c_h * abs(t) / 3.0)
    if t == 0 or denom <= 0:
        return 1.0
    return math.exp(-t * t / denom)


def bounds_from_stats(t1: float, t2: float, c_h: float, sigma2: float,
                      estimated: bool = False) -> BoundReport:
    fields = dict(t1=t1, t2=t2, c_H=c_h, sigma2=sigma2, estimated=estimated,
                  t1_nonneg=t1 >= 0, t2_nonpos=t2 <= 0)
    if t1 >= 0:
        h = math.exp(-t1 * t1 / 2.0)
        b = _bernstein_tail(t1, sigma2, c_h)
        fields.update(hoeffding_upper=h, bernstein_upper=b, combined_upper=min(h, b))
    if t2 <= 0:
        h = math.exp(-t2 * t2 / 2.0)
        fields["hoeffding_lower"] = 1.0 - h
        tail = h
        if t2 < 0:
            b = _bernstein_tail(t2, sigma2, c_h)
            fields["bernstein_lower"] = 1.0 - b
            tail = min(h, b)
        fields["combined_lower"] = 1.0 - tail
    return BoundReport(**fields)


def mean_error_bounds(rule: HyperplaneRule, p: DawidSkeneParams | OneCoinParams,
                      simplified: bool = False, estimated: bool = False) -> BoundReport:
    """Hoeffding and Bernstein bounds on the mean error rate.

    Upper bounds exist when ``t1 >= 0`` and lower bounds when ``t2 <= 0``.
    With one-coin parameters and ``simplified=True`` this is the coarser
    one-coin form, whose variance term ignores worker accuracy.
    """
    t1, t2 = t_stats(rule, p)
    c_h, sigma2 = dispersion_stats(rule, p, simplified=simplified)
    return bounds_from_stats(t1, t2, c_h, sigma2, estimated=estimated)


def mean_error_bounds_onecoin(rule: HyperplaneRule, p: OneCoinParams,
                              estimated: bool = False) -> BoundReport:
    t1, t2 = t_stats_onecoin(rule, p)
    c_h, sigma2 = dispersion_stats(rule, p, simplified=True)
    return bounds_from_stats(t1, t2, c_h, sigma2, estimated=estimated)


@dataclass(frozen=True)
class MvBound:
    value: float
    branch: str  # "upper", "lower" or "vacuous"


def mv_mean_bound(num_workers: int, q: float, wbar: float) -> MvBound:
    """Closed-form MV bound under one-coin, constant-q sampling."""
    gap = wbar - 0.5
    tail = math.exp(-2.0 * num_workers * q * q * gap * gap)
    if gap > 0:
        return MvBound(tail, "upper")
    if gap < 0:
        return MvBound(1.0 - tail, "lower")
    return MvBound(1.0, "vacuous")


def high_prob_bound(eps: float, t1: float, num_items: int) -> float:
    """Lower bound on ``P(ErrRate <= eps)``: ``1 - exp(-N D(eps || phi(t1)))``.

    Only valid for ``t1 >= 0`` and ``eps > phi(t1)``; anything else raises.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if t1 < 0:
        raise ValueError("bound not applicable: t1 < 0")
    if not eps > math.exp(-t1 * t1 / 2.0):
        raise ValueError(f"bound not applicable: eps={eps} <= phi(t1)={math.exp(-t1 * t1 / 2):.6g}")
    return -math.expm1(-num_items * _kl_to_phi(eps, t1))


def min_t1_for(eps: float, delta: float, num_items: int, atol: float = 1e-9) -> float:
    """Smallest ``t1`` whose high-probability bound reaches ``1 - delta``.

    ``D(eps || phi(t))`` is zero at ``t0 = sqrt(-2 ln eps)`` and increases
    without bound beyond it, so bisection on ``[t0, hi]`` suffices. The
    returned point is the feasible end of the final bracket.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if num_items < 1:
        raise ValueError("num_items must be positive")
    target = math.log(1.0 / delta) / num_items
    lo = math.sqrt(-2.0 * math.log(eps))
    hi = lo + 1.0
    while _kl_to_phi(eps, hi) < target:
        hi = lo + 2.0 * (hi - lo)
        if hi > 1e150:
            raise ValueError("no feasible t1 found")
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _kl_to_phi(eps, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def oswmv_threshold(num_workers: int) -> float:
    """Minimum mean accuracy for the one-step WMV guarantee (q = 1)."""
    if num_workers < 2:
        raise ValueError("need at least two workers")
    m = num_workers
    return 0.5 + 1.0 / m + math.sqrt((m - 1) * math.log(2) / (2.0 * m * m))


def oswmv_condition(num_workers: int, wbar: float) -> bool:
    return wbar >= oswmv_threshold(num_workers)


def rho_bar(accuracies) -> float:
    """Root-mean-square distance of accuracies from 1/2."""
    w = np.asarray(accuracies, dtype=float)
    return float(np.sqrt(np.mean(np.square(w - 0.5))))


def oracle_map_rule_ds(p: DawidSkeneParams) -> HyperplaneRule:
    """Hyperplane form of the Dawid-Skene posterior log-odds.

    A label ``z`` from worker ``i`` adds ``alpha_i`` (z=+1) or ``beta_i``
    (z=-1) to the log-odds, i.e. ``(alpha+beta)/2 + z (alpha-beta)/2``. The
    constant part depends on which workers observed the item, so it is folded
    into the shift using each worker's mean sampling probability. This is the
    exact MAP rule when every worker labels every item and an approximation
    otherwise.
    """
    c = p.clamped()
    alpha = np.log(c.sensitivity) - np.log1p(-c.specificity)
    beta = np.log1p(-c.sensitivity) - np.log(c.specificity)
    q_mean = p.sampling.columns(p.num_workers).mean(axis=1)
    shift = math.log(c.prior) - math.log1p(-c.prior) + float(np.sum(q_mean * (alpha + beta) / 2))
    return HyperplaneRule((alpha - beta) / 2.0, shift)


def estimate_params(labels: LabelMatrix, reference: Prediction | GoldLabels,
                    model: str = "one_coin") -> tuple[OneCoinParams | DawidSkeneParams, np.ndarray]:
    """Parameter estimates against a reference labelling.

    Returns the estimates restricted to workers with at least one label and
    the boolean mask selecting those workers.
    """
    ref = reference.dense() if isinstance(reference, GoldLabels) else reference.labels
    if ref.shape != (labels.num_items,):
        raise ValueError("reference does not match the label matrix")
    active = labels.labels_per_worker() > 0
    if not active.any():
        raise ValueError("label matrix has no observations")
    sub = LabelMatrix(labels.z[active])
    q_hat = sub.labels_per_worker() / labels.num_items
    known = ref != 0
    pi_hat = float(np.mean(ref[known] == 1)) if known.any() else 0.5
    sampling = SamplingDesign.per_worker(q_hat)
    if model == "one_coin":
        return OneCoinParams(estimate_accuracies(sub, ref), pi_hat, sampling), active
    if model != "dawid_skene":
        raise ValueError(f"unknown model {model!r}")
    sens = _class_agreement(sub, ref, 1)
    spec = _class_agreement(sub, ref, -1)
    return DawidSkeneParams(sens, spec, pi_hat, sampling), active


def _class_agreement(labels: LabelMatrix, ref: np.ndarray, cls: int) -> np.ndarray:
    usable = labels.observed & (ref == cls)[None, :]
    n = usable.sum(axis=1)
    hit = ((labels.z == cls) & usable).sum(axis=1)
    return np.where(n > 0, hit / np.maximum(n, 1), 0.5)


def map_rule_for(params: OneCoinParams | DawidSkeneParams) -> HyperplaneRule:
    if isinstance(params, OneCoinParams):
        return oracle_map_rule(params)
    return oracle_map_rule_ds(params)


def plugin_bound(params: OneCoinParams | DawidSkeneParams, estimated: bool = True) -> BoundReport:
    """Oracle-MAP bound evaluated at the given (typically estimated) parameters."""
    rule = map_rule_for(params)
    if isinstance(params, OneCoinParams):
        return mean_error_bounds_onecoin(rule, params, estimated=estimated)
    return mean_error_bounds(rule, params, estimated=estimated)


def plugin_report(labels: LabelMatrix, reference: Prediction | GoldLabels,
                  model: str = "one_coin") -> BoundReport:
    """MAP plugin bound: estimate parameters against ``reference`` and plug
    them into the oracle-MAP bound. The result is an estimate, not a bound."""
    params, _ = estimate_params(labels, reference, model)
    return plugin_bound(params, estimated=True)

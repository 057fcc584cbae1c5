"""Synthetic crowds, Monte-Carlo error estimation, the exact enumeration
oracle, and the simulation sweeps (accuracy sweep, label subsampling,
one-step WMV versus MV).

Every replication draws from its own seed derived from ``(master_seed, keys)``
through ``numpy.random.SeedSequence``, so results do not depend on the order
or the number of processes that run them.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .bounds import (
    estimate_params,
    mean_error_bounds,
    mean_error_bounds_onecoin,
    mv_mean_bound,
    oswmv_threshold,
    plugin_bound,
)
from .em import EmOptions, em_map_predict, posterior_ds
from .model import (
    DawidSkeneParams,
    GoldLabels,
    LabelMatrix,
    OneCoinParams,
    Prediction,
    SamplingDesign,
    error_rate,
    to_dawid_skene,
)
from .rules import (
    HyperplaneRule,
    bound_optimal_rule,
    iterative_wmv,
    majority_rule,
    majority_vote,
    one_step_wmv,
    oracle_map_rule,
    predict,
    sign_with_tie,
)

MAX_ENUM_WORKERS = 12


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed hashed from a master seed and integer keys."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class BetaAccuracy:
    """Worker accuracies drawn i.i.d. from Beta(a, b)."""

    a: float
    b: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("beta parameters must be positive")

    @classmethod
    def from_mean(cls, mean: float, b: float = 2.0) -> "BetaAccuracy":
        """Solve ``mean = a / (a + b)`` for ``a``."""
        if not 0 < mean < 1:
            raise ValueError("mean accuracy must lie in (0, 1)")
        return cls(b * mean / (1.0 - mean), b)

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.a, self.b, size)


@dataclass(frozen=True, eq=False)
class CrowdGenerator:
    """Recipe for a synthetic crowd.

    ``accuracy`` is a BetaAccuracy or an explicit length-M vector. Under the
    Dawid-Skene model it gives the sensitivities; ``specificity`` defaults to
    an independent draw from the same source. ``balanced`` makes exactly
    ``ceil(N/2)`` items positive (shuffled) instead of i.i.d. Bernoulli(prior).
    """

    num_workers: int
    num_items: int
    accuracy: BetaAccuracy | Sequence[float]
    model: str = "one_coin"
    prior: float = 0.5
    specificity: BetaAccuracy | Sequence[float] | None = None
    sampling: SamplingDesign = field(default_factory=lambda: SamplingDesign.constant(1.0))
    seed: int = 0
    balanced: bool = False

    def __post_init__(self):
        if self.num_workers < 1 or self.num_items < 1:
            raise ValueError("num_workers and num_items must be positive")
        if self.model not in ("one_coin", "dawid_skene"):
            raise ValueError(f"unknown model {self.model!r}")
        for src in (self.accuracy, self.specificity):
            if src is not None and not isinstance(src, BetaAccuracy) and len(src) != self.num_workers:
                raise ValueError(f"explicit accuracy vectors need {self.num_workers} entries")

    def with_seed(self, seed: int) -> "CrowdGenerator":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class SimulatedCrowd:
    labels: LabelMatrix
    gold: GoldLabels
    params: OneCoinParams | DawidSkeneParams


def _draw(src, rng, m):
    if isinstance(src, BetaAccuracy):
        return src.draw(rng, m)
    return np.asarray(src, dtype=float)


def generate(gen: CrowdGenerator) -> SimulatedCrowd:
    rng = np.random.default_rng(gen.seed)
    m, n = gen.num_workers, gen.num_items
    sens = _draw(gen.accuracy, rng, m)
    if gen.model == "one_coin":
        spec = sens
    else:
        spec = _draw(gen.specificity if gen.specificity is not None else gen.accuracy, rng, m)
    if gen.balanced:
        y = np.where(np.arange(n) < (n + 1) // 2, 1, -1)
        y = rng.permutation(y)
    else:
        y = np.where(rng.random(n) < gen.prior, 1, -1)
    mask = rng.random((m, n)) < gen.sampling.matrix(m, n)
    p_correct = np.where(y[None, :] == 1, sens[:, None], spec[:, None])
    correct = rng.random((m, n)) < p_correct
    z = np.where(correct, y[None, :], -y[None, :]) * mask
    if gen.model == "one_coin":
        params = OneCoinParams(sens, gen.prior, gen.sampling)
    else:
        params = DawidSkeneParams(sens, spec, gen.prior, gen.sampling)
    return SimulatedCrowd(LabelMatrix(z), GoldLabels.full(y), params)


METHODS = ("mv", "wmv", "oswmv", "iwmv", "em-map", "em-map-ds", "oracle-map", "bound-optimal")


def aggregate(method: str, labels: LabelMatrix, params: OneCoinParams | DawidSkeneParams | None = None,
              *, weights=None, em_options: EmOptions | None = None) -> Prediction:
    """Run one named aggregation procedure.

    ``oracle-map`` and ``bound-optimal`` need the true ``params``; ``wmv``
    needs explicit ``weights``.
    """
    if method == "mv":
        return majority_vote(labels)
    if method == "wmv":
        if weights is None:
            raise ValueError("wmv needs explicit weights")
        return predict(HyperplaneRule(weights), labels)
    if method == "oswmv":
        return one_step_wmv(labels)[0]
    if method == "iwmv":
        return iterative_wmv(labels).prediction
    if method in ("em-map", "em-map-ds"):
        model = "one_coin" if method == "em-map" else "dawid_skene"
        return em_map_predict(labels, model, em_options)[0]
    if method in ("oracle-map", "bound-optimal"):
        if params is None:
            raise ValueError(f"{method} needs the true parameters")
        if method == "bound-optimal":
            return predict(bound_optimal_rule(to_dawid_skene(params).sensitivity), labels)
        if isinstance(params, OneCoinParams):
            return predict(oracle_map_rule(params), labels, prior=params.prior)
        post = posterior_ds(labels, params)
        empty = np.flatnonzero(labels.labels_per_item() == 0)
        return Prediction(post.map_labels(), frozenset(empty.tolist()))
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True, eq=False)
class McEstimate:
    mean: float
    stderr: float
    reps: int
    values: np.ndarray | None = None

    @classmethod
    def from_values(cls, values) -> "McEstimate":
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError("need at least two replications")
        return cls(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)),
                   int(values.size), values)


def _map_ordered(fn: Callable, tasks: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * n_jobs))))


def _mc_replication(task) -> float:
    method, gen, config = task
    crowd = generate(gen)
    pred = aggregate(method, crowd.labels, crowd.params, **config)
    return error_rate(pred, crowd.gold)


def mc_error_rate(method: str, gen: CrowdGenerator, reps: int, master_seed: int, *,
                  n_jobs: int = 1, weights=None, em_options: EmOptions | None = None) -> McEstimate:
    """Average error rate of ``method`` over ``reps`` fresh crowds."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    config = {"weights": weights, "em_options": em_options}
    tasks = [(method, gen.with_seed(derive_seed(master_seed, r)), config) for r in range(reps)]
    return McEstimate.from_values(_map_ordered(_mc_replication, tasks, n_jobs))


def _outcome_table(num_workers: int, with_missing: bool) -> tuple[np.ndarray, np.ndarray]:
    values = (1, -1, 0) if with_missing else (1, -1)
    return np.array(list(itertools.product(range(len(values)), repeat=num_workers)),
                    dtype=np.int8).reshape(-1, num_workers), np.array(values, dtype=float)


def exact_mean_error(rule: HyperplaneRule, p: OneCoinParams | DawidSkeneParams,
                     column: int | None = None) -> float:
    """Exact ``E[ErrRate]`` by enumerating every worker outcome.

    Each worker is missing, agrees with the truth, or disagrees. ``column``
    selects one item of a full sampling design; ``None`` averages over all
    columns (identical columns for constant and per-worker designs). Zero
    scores resolve to +1, as in ``predict``.
    """
    p = to_dawid_skene(p)
    m = p.num_workers
    if m > MAX_ENUM_WORKERS:
        raise ValueError(f"enumeration limited to {MAX_ENUM_WORKERS} workers, got {m}")
    if rule.num_workers != m:
        raise ValueError("rule and params disagree on the number of workers")
    cols = p.sampling.columns(m)
    if column is not None:
        cols = cols[:, [column]] if cols.shape[1] > 1 else cols
    with_missing = bool(np.any(cols < 1))
    idx, values = _outcome_table(m, with_missing)
    z = values[idx]
    scores = z @ rule.weights + rule.shift
    pred = sign_with_tie(scores, np.abs(z) @ np.abs(rule.weights) + abs(rule.shift))
    rows = np.arange(m)
    errors = []
    for q in cols.T:
        # per-worker probability of outcome (+1, -1, missing) given the true class
        given_pos = np.stack([q * p.sensitivity, q * (1 - p.sensitivity), 1 - q], axis=1)
        given_neg = np.stack([q * (1 - p.specificity), q * p.specificity, 1 - q], axis=1)
        prob_pos = given_pos[rows, idx].prod(axis=1)
        prob_neg = given_neg[rows, idx].prod(axis=1)
        err_pos = prob_pos[pred == -1].sum()
        err_neg = prob_neg[pred == 1].sum()
        errors.append(p.prior * err_pos + (1 - p.prior) * err_neg)
    return float(np.mean(errors))


def write_csv(rows: Iterable[dict], columns: Sequence[str], sink=None) -> str:
    """Render rows as CSV (floats in shortest round-trip form).

    ``sink`` may be a path, a text file object, or None; the CSV text is
    returned in every case.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
                         for c in columns])
    text = buf.getvalue()
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    elif sink is not None:
        sink.write(text)
    return text


def _summaries(per_rep: list[dict], keys: Sequence[str]) -> dict:
    out = {}
    for k in keys:
        est = McEstimate.from_values([r[k] for r in per_rep])
        out[k] = est.mean
        out[f"stderr_{k.removeprefix('err_')}"] = est.stderr
    return out


# ---- accuracy sweep: MV, EM-MAP and oracle MAP against mean accuracy -----

FIG_A_COLUMNS = ("wbar", "err_mv", "err_em_map", "err_oracle_map", "plugin_bound",
                 "stderr_mv", "stderr_em_map", "stderr_oracle_map", "stderr_plugin_bound")


@dataclass(frozen=True)
class FigAConfig:
    num_workers: int = 11
    num_items: int = 300
    q: float = 0.8
    beta_b: float = 2.0
    wbar_grid: tuple[float, ...] = tuple(round(0.02 * k, 2) for k in range(1, 50))
    reps: int = 100
    seed: int = 0
    balanced: bool = True
    em_options: EmOptions = field(default_factory=EmOptions)
    n_jobs: int = 1

    def generator(self, wbar: float) -> CrowdGenerator:
        return CrowdGenerator(self.num_workers, self.num_items, BetaAccuracy.from_mean(wbar, self.beta_b),
                              sampling=SamplingDesign.constant(self.q), balanced=self.balanced)


def _fig_a_replication(task) -> dict:
    config, wbar, seed = task
    crowd = generate(config.generator(wbar).with_seed(seed))
    gold = crowd.gold
    em_pred, fitted, _ = em_map_predict(crowd.labels, "one_coin", config.em_options)
    report = plugin_bound(fitted)
    bound = report.upper_or_vacuous() if wbar >= 0.5 else report.lower_or_vacuous()
    return {
        "err_mv": error_rate(majority_vote(crowd.labels), gold),
        "err_em_map": error_rate(em_pred, gold),
        "err_oracle_map": error_rate(aggregate("oracle-map", crowd.labels, crowd.params), gold),
        "plugin_bound": bound,
    }


def experiment_fig_a(config: FigAConfig = FigAConfig(), sink=None) -> list[dict]:
    """Sweep the mean Beta accuracy; per point average MV, EM-MAP and oracle
    MAP error plus the MAP plugin bound (upper above 1/2, lower below)."""
    tasks = [(config, wbar, derive_seed(config.seed, k, r))
             for k, wbar in enumerate(config.wbar_grid) for r in range(config.reps)]
    results = _map_ordered(_fig_a_replication, tasks, config.n_jobs)
    rows = []
    for k, wbar in enumerate(config.wbar_grid):
        chunk = results[k * config.reps:(k + 1) * config.reps]
        row = {"wbar": float(wbar)}
        row.update(_summaries(chunk, ("err_mv", "err_em_map", "err_oracle_map", "plugin_bound")))
        rows.append(row)
    if sink is not None:
        write_csv(rows, FIG_A_COLUMNS, sink)
    return rows


# ---- one-step WMV versus MV ----------------------------------------------

FIG_C_COLUMNS = ("wbar", "err_mv", "err_oswmv", "mv_bound", "oswmv_proxy_bound",
                 "stderr_mv", "stderr_oswmv", "stderr_oswmv_proxy_bound")


def default_fig_c_grid(num_workers: int = 15, stop: float = 0.98, step: float = 0.02) -> tuple[float, ...]:
    start = oswmv_threshold(num_workers)
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + step * k for k in range(n))


@dataclass(frozen=True)
class FigCConfig:
    num_workers: int = 15
    num_items: int = 3000
    q: float = 0.8
    beta_b: float = 2.0
    wbar_grid: tuple[float, ...] | None = None
    reps: int = 20
    seed: int = 0
    balanced: bool = True
    n_jobs: int = 1

    def grid(self) -> tuple[float, ...]:
        return self.wbar_grid if self.wbar_grid is not None else default_fig_c_grid(self.num_workers)

    def generator(self, wbar: float) -> CrowdGenerator:
        return CrowdGenerator(self.num_workers, self.num_items, BetaAccuracy.from_mean(wbar, self.beta_b),
                              sampling=SamplingDesign.constant(self.q), balanced=self.balanced)


def _fig_c_replication(task) -> dict:
    config, wbar, seed = task
    crowd = generate(config.generator(wbar).with_seed(seed))
    pred, rule = one_step_wmv(crowd.labels)
    # bound of the realised osWMV hyperplane under the true parameters,
    # treating its data-dependent weights as fixed
    proxy = mean_error_bounds(rule, crowd.params).upper_or_vacuous()
    return {
        "err_mv": error_rate(majority_vote(crowd.labels), crowd.gold),
        "err_oswmv": error_rate(pred, crowd.gold),
        "oswmv_proxy_bound": proxy,
    }


def experiment_fig_c(config: FigCConfig = FigCConfig(), sink=None) -> list[dict]:
    """Sweep mean accuracy upward from the one-step WMV threshold; compare
    MV and one-step WMV errors with the MV bound and an osWMV proxy bound."""
    grid = config.grid()
    tasks = [(config, wbar, derive_seed(config.seed, k, r))
             for k, wbar in enumerate(grid) for r in range(config.reps)]
    results = _map_ordered(_fig_c_replication, tasks, config.n_jobs)
    rows = []
    for k, wbar in enumerate(grid):
        chunk = results[k * config.reps:(k + 1) * config.reps]
        row = {"wbar": float(wbar), "mv_bound": mv_mean_bound(config.num_workers, config.q, wbar).value}
        row.update(_summaries(chunk, ("err_mv", "err_oswmv", "oswmv_proxy_bound")))
        rows.append(row)
    if sink is not None:
        write_csv(rows, FIG_C_COLUMNS, sink)
    return rows


# ---- subsampling of a fixed labelled dataset -------------------------------

SUBSAMPLE_COLUMNS = ("x", "err_mv", "err_em_map", "map_plugin_bound", "mv_plugin_bound",
                     "stderr_mv", "stderr_em_map", "stderr_map_plugin_bound", "stderr_mv_plugin_bound")


def _subsample_replication(task) -> dict:
    labels, gold, x, seed, em_options = task
    rng = np.random.default_rng(seed)
    thinned = labels.thinned(rng.random(labels.z.shape) < x)
    em_pred, _, _ = em_map_predict(thinned, "one_coin", em_options)
    # accuracies estimated against the ground truth
    params, _ = estimate_params(thinned, gold, "one_coin")
    map_bound = plugin_bound(params).upper_or_vacuous()
    mv_bound = mean_error_bounds_onecoin(majority_rule(params.num_workers), params,
                                         estimated=True).upper_or_vacuous()
    return {
        "err_mv": error_rate(majority_vote(thinned), gold),
        "err_em_map": error_rate(em_pred, gold),
        "map_plugin_bound": map_bound,
        "mv_plugin_bound": mv_bound,
    }


def experiment_subsample(labels: LabelMatrix, gold: GoldLabels, x_grid: Sequence[float],
                         reps: int = 40, seed: int = 0, sink=None, *,
                         em_options: EmOptions | None = None, n_jobs: int = 1) -> list[dict]:
    """Thin each observed label with keep-probability ``x``; average MV and
    EM-MAP errors and the MAP / MV plugin upper bounds over ``reps`` draws."""
    for x in x_grid:
        if not 0 < x <= 1:
            raise ValueError(f"subsampling proportion must lie in (0, 1], got {x}")
    em_options = em_options or EmOptions()
    tasks = [(labels, gold, float(x), derive_seed(seed, k, r), em_options)
             for k, x in enumerate(x_grid) for r in range(reps)]
    results = _map_ordered(_subsample_replication, tasks, n_jobs)
    rows = []
    for k, x in enumerate(x_grid):
        chunk = results[k * reps:(k + 1) * reps]
        row = {"x": float(x)}
        row.update(_summaries(chunk, ("err_mv", "err_em_map", "map_plugin_bound", "mv_plugin_bound")))
        rows.append(row)
    if sink is not None:
        write_csv(rows, SUBSAMPLE_COLUMNS, sink)
    return rows


def rte_like_generator(seed: int = 0, num_workers: int = 164, num_items: int = 800,
                       mean_q: float = 0.061, mean_accuracy: float = 0.8) -> CrowdGenerator:
    """Crowd shaped like the RTE dataset: many workers, each labelling a
    small, highly variable share of the items (heavy-tailed per-worker q)."""
    rng = np.random.default_rng(derive_seed(seed, 0))
    q = rng.beta(0.5, 0.5 * (1 - mean_q) / mean_q, num_workers)
    q = np.clip(q * mean_q / q.mean(), 1.0 / num_items, 1.0)
    return CrowdGenerator(num_workers, num_items, BetaAccuracy.from_mean(mean_accuracy, 2.0),
                          sampling=SamplingDesign.per_worker(q), seed=derive_seed(seed, 1),
                          balanced=True)

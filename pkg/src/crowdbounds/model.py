"""Core data model for binary crowdsourcing: label matrices, worker
parameters, sampling designs, gold labels and error rates.

Labels are encoded as +1 / -1 with 0 marking a missing observation, so the
dense matrix ``Z`` carries both the labels and the observation indicator
``T = (Z != 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

PROB_EPS = 1e-6


def clamp_probability(p, eps: float = PROB_EPS):
    """Clip probabilities into ``[eps, 1 - eps]`` so log-odds stay finite."""
    return np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_probs(name: str, values: np.ndarray, *, open_left: bool = False) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} must be finite")
    lo_ok = values > 0 if open_left else values >= 0
    if not (np.all(lo_ok) and np.all(values <= 1)):
        interval = "(0, 1]" if open_left else "[0, 1]"
        raise ValueError(f"{name} must lie in {interval}")


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Observed labels of ``M`` workers on ``N`` items.

    Stored densely as an int8 array with 0 for missing entries. The dense
    form is what every aggregation rule consumes, and at the sizes this
    library targets (a few hundred workers by a few thousand items) it is
    cheaper than a sparse container.
    """

    z: np.ndarray
    worker_ids: tuple[str, ...] | None = None
    item_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int8, copy=True)
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise ValueError(f"label matrix must be 2-d and non-empty, got shape {z.shape}")
        if not np.all(np.isin(z, (-1, 0, 1))):
            raise ValueError("labels must be -1, +1 or 0 (missing)")
        object.__setattr__(self, "z", _readonly(z))
        for name, ids, n in (("worker_ids", self.worker_ids, z.shape[0]),
                             ("item_ids", self.item_ids, z.shape[1])):
            if ids is not None:
                ids = tuple(str(x) for x in ids)
                if len(ids) != n or len(set(ids)) != n:
                    raise ValueError(f"{name} must hold {n} distinct ids")
                object.__setattr__(self, name, ids)

    @classmethod
    def from_entries(cls, num_workers: int, num_items: int, entries, *,
                     worker_ids=None, item_ids=None) -> "LabelMatrix":
        """Build from ``(worker, item, label)`` triples; duplicates are rejected."""
        if num_workers < 1 or num_items < 1:
            raise ValueError("num_workers and num_items must be positive")
        z = np.zeros((num_workers, num_items), dtype=np.int8)
        for i, j, lab in entries:
            if not (0 <= i < num_workers and 0 <= j < num_items):
                raise IndexError(f"entry ({i}, {j}) outside {num_workers}x{num_items}")
            if lab not in (-1, 1):
                raise ValueError(f"label must be -1 or +1, got {lab!r}")
            if z[i, j] != 0:
                raise ValueError(f"duplicate observation for worker {i}, item {j}")
            z[i, j] = lab
        return cls(z, worker_ids=worker_ids, item_ids=item_ids)

    @property
    def num_workers(self) -> int:
        return self.z.shape[0]

    @property
    def num_items(self) -> int:
        return self.z.shape[1]

    @cached_property
    def observed(self) -> np.ndarray:
        return _readonly(self.z != 0)

    @cached_property
    def positive(self) -> np.ndarray:
        return _readonly((self.z == 1).astype(float))

    @cached_property
    def negative(self) -> np.ndarray:
        return _readonly((self.z == -1).astype(float))

    @property
    def num_observations(self) -> int:
        return int(self.observed.sum())

    def labels_per_worker(self) -> np.ndarray:
        return self.observed.sum(axis=1)

    def labels_per_item(self) -> np.ndarray:
        return self.observed.sum(axis=0)

    def entries(self) -> Iterator[tuple[int, int, int]]:
        """Observed ``(worker, item, label)`` triples in row-major order."""
        for i, j in zip(*np.nonzero(self.z)):
            yield int(i), int(j), int(self.z[i, j])

    def entry_set(self) -> set[tuple[int, int, int]]:
        return set(self.entries())

    def flipped(self) -> "LabelMatrix":
        return LabelMatrix(-self.z, self.worker_ids, self.item_ids)

    def thinned(self, keep: np.ndarray) -> "LabelMatrix":
        """Drop every observed entry where ``keep`` is False."""
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != self.z.shape:
            raise ValueError("keep mask must match the label matrix shape")
        return LabelMatrix(np.where(keep, self.z, 0), self.worker_ids, self.item_ids)


@dataclass(frozen=True, eq=False)
class SamplingDesign:
    """Probabilities ``q_ij`` that worker ``i`` labels item ``j``.

    ``kind`` is ``"constant"`` (scalar q), ``"per_worker"`` (length-M vector)
    or ``"full"`` (M x N matrix).
    """

    kind: str
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float, copy=True)
        expected_ndim = {"constant": 0, "per_worker": 1, "full": 2}
        if self.kind not in expected_ndim:
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        if q.ndim != expected_ndim[self.kind]:
            raise ValueError(f"{self.kind} sampling needs a {expected_ndim[self.kind]}-d q")
        _check_probs("sampling probabilities", q, open_left=True)
        object.__setattr__(self, "q", _readonly(q))

    @classmethod
    def constant(cls, q: float) -> "SamplingDesign":
        return cls("constant", q)

    @classmethod
    def per_worker(cls, q: Sequence[float]) -> "SamplingDesign":
        return cls("per_worker", q)

    @classmethod
    def full(cls, q) -> "SamplingDesign":
        return cls("full", q)

    @classmethod
    def from_value(cls, q) -> "SamplingDesign":
        """Pick the variant from the shape of ``q`` (scalar, vector, matrix)."""
        ndim = np.ndim(q)
        return cls(("constant", "per_worker", "full")[ndim], q)

    @property
    def column_invariant(self) -> bool:
        return self.kind != "full"

    def matrix(self, num_workers: int, num_items: int = 1) -> np.ndarray:
        """Expand to an ``(M, N)`` array of probabilities."""
        if self.kind == "constant":
            return np.full((num_workers, num_items), float(self.q))
        if self.kind == "per_worker":
            if self.q.shape[0] != num_workers:
                raise ValueError(f"per-worker q has length {self.q.shape[0]}, expected {num_workers}")
            return np.repeat(self.q[:, None], num_items, axis=1)
        if self.q.shape[0] != num_workers or (num_items != 1 and self.q.shape[1] != num_items):
            raise ValueError(f"full q has shape {self.q.shape}, expected ({num_workers}, {num_items})")
        return np.array(self.q)

    def columns(self, num_workers: int) -> np.ndarray:
        """Distinct sampling columns: ``(M, 1)`` unless the design is full."""
        if self.kind == "full":
            return self.matrix(num_workers, self.q.shape[1])
        return self.matrix(num_workers, 1)

    def to_json(self):
        return self.q.tolist()


@dataclass(frozen=True, eq=False)
class DawidSkeneParams:
    """Per-worker sensitivity ``p+`` and specificity ``p-``, class prior and sampling."""

    sensitivity: np.ndarray
    specificity: np.ndarray
    prior: float = 0.5
    sampling: SamplingDesign = field(default_factory=lambda: SamplingDesign.constant(1.0))

    def __post_init__(self):
        sens = np.array(self.sensitivity, dtype=float, copy=True).reshape(-1)
        spec = np.array(self.specificity, dtype=float, copy=True).reshape(-1)
        if sens.shape != spec.shape or sens.size == 0:
            raise ValueError("sensitivity and specificity must be non-empty and equal length")
        _check_probs("sensitivity", sens)
        _check_probs("specificity", spec)
        _check_probs("prior", np.asarray(self.prior, dtype=float))
        object.__setattr__(self, "sensitivity", _readonly(sens))
        object.__setattr__(self, "specificity", _readonly(spec))
        object.__setattr__(self, "prior", float(self.prior))

    @property
    def num_workers(self) -> int:
        return self.sensitivity.shape[0]

    def clamped(self, eps: float = PROB_EPS) -> "DawidSkeneParams":
        return DawidSkeneParams(clamp_probability(self.sensitivity, eps),
                                clamp_probability(self.specificity, eps),
                                float(clamp_probability(self.prior, eps)), self.sampling)

    def is_one_coin(self) -> bool:
        return bool(np.array_equal(self.sensitivity, self.specificity))

    def to_one_coin(self) -> "OneCoinParams":
        if not self.is_one_coin():
            raise ValueError("sensitivity and specificity differ; not a one-coin model")
        return OneCoinParams(self.sensitivity, self.prior, self.sampling)


@dataclass(frozen=True, eq=False)
class OneCoinParams:
    """Per-worker accuracy ``w_i`` shared by both classes."""

    accuracy: np.ndarray
    prior: float = 0.5
    sampling: SamplingDesign = field(default_factory=lambda: SamplingDesign.constant(1.0))

    def __post_init__(self):
        acc = np.array(self.accuracy, dtype=float, copy=True).reshape(-1)
        if acc.size == 0:
            raise ValueError("accuracy must be non-empty")
        _check_probs("accuracy", acc)
        _check_probs("prior", np.asarray(self.prior, dtype=float))
        object.__setattr__(self, "accuracy", _readonly(acc))
        object.__setattr__(self, "prior", float(self.prior))

    @property
    def num_workers(self) -> int:
        return self.accuracy.shape[0]

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracy.mean())

    def clamped(self, eps: float = PROB_EPS) -> "OneCoinParams":
        return OneCoinParams(clamp_probability(self.accuracy, eps),
                             float(clamp_probability(self.prior, eps)), self.sampling)

    def to_dawid_skene(self) -> DawidSkeneParams:
        return DawidSkeneParams(self.accuracy, self.accuracy, self.prior, self.sampling)


def to_dawid_skene(p: OneCoinParams | DawidSkeneParams) -> DawidSkeneParams:
    if isinstance(p, DawidSkeneParams):
        return p
    return p.to_dawid_skene()


@dataclass(frozen=True, eq=False)
class GoldLabels:
    """Partial map from item index to its true label."""

    num_items: int
    items: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        items = np.array(self.items, dtype=np.int64, copy=True).reshape(-1)
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(-1)
        if items.shape != labels.shape:
            raise ValueError("items and labels must have equal length")
        if items.size and (items.min() < 0 or items.max() >= self.num_items):
            raise IndexError(f"gold item index outside [0, {self.num_items})")
        if np.unique(items).size != items.size:
            raise ValueError("gold labels contain a repeated item")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("gold labels must be -1 or +1")
        object.__setattr__(self, "items", _readonly(items))
        object.__setattr__(self, "labels", _readonly(labels))

    @classmethod
    def full(cls, labels) -> "GoldLabels":
        labels = np.asarray(labels)
        return cls(labels.size, np.arange(labels.size), labels)

    @classmethod
    def from_mapping(cls, num_items: int, mapping: dict[int, int]) -> "GoldLabels":
        items = sorted(mapping)
        return cls(num_items, items, [mapping[j] for j in items])

    def __len__(self) -> int:
        return int(self.items.size)

    def as_dict(self) -> dict[int, int]:
        return {int(j): int(y) for j, y in zip(self.items, self.labels)}

    def dense(self) -> np.ndarray:
        """Length-N vector with 0 where the gold label is unknown."""
        out = np.zeros(self.num_items, dtype=np.int8)
        out[self.items] = self.labels
        return out

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.labels == 1)) if len(self) else float("nan")


@dataclass(frozen=True, eq=False)
class Prediction:
    """Predicted labels for all ``N`` items.

    ``undetermined`` lists the items that had no observed label and were
    assigned by the prior fallback.
    """

    labels: np.ndarray
    undetermined: frozenset[int] = frozenset()

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(-1)
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("predicted labels must be -1 or +1")
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "undetermined", frozenset(int(j) for j in self.undetermined))

    @property
    def num_items(self) -> int:
        return int(self.labels.size)

    def flipped(self) -> "Prediction":
        return Prediction(-self.labels, self.undetermined)

    def as_gold(self) -> GoldLabels:
        return GoldLabels.full(self.labels)


def prior_fallback_label(prior: float) -> int:
    return 1 if prior >= 0.5 else -1


def error_rate(pred: Prediction, gold: GoldLabels) -> float:
    """Fraction of gold-labelled items whose prediction disagrees with gold."""
    if len(gold) == 0:
        raise ValueError("gold label set is empty")
    if gold.num_items != pred.num_items:
        raise ValueError(f"prediction covers {pred.num_items} items, gold expects {gold.num_items}")
    return float(np.mean(pred.labels[gold.items] != gold.labels))

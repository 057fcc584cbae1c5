"""CSV and JSON interchange for label matrices, gold labels, predictions and
worker parameters.

Label CSV: ``worker_id,item_id,label`` with a header row. Gold CSV:
``item_id,label``. Labels are -1/+1, or 0/1 with ``zero_one=True``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import (
    DawidSkeneParams,
    GoldLabels,
    LabelMatrix,
    OneCoinParams,
    Prediction,
    SamplingDesign,
)


class DataFileError(ValueError):
    """Malformed input file; the message names the file and line."""


def _parse_label(raw: str, zero_one: bool, where: str) -> int:
    allowed = {"0": -1, "1": 1} if zero_one else {"-1": -1, "1": 1, "+1": 1}
    value = allowed.get(raw.strip())
    if value is None:
        expected = "0 or 1" if zero_one else "-1 or 1"
        raise DataFileError(f"{where}: bad label {raw!r} (expected {expected})")
    return value


def _rows(path, ncols: int):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFileError(f"{path}: empty file (header row required)")
        if len(header) != ncols:
            raise DataFileError(f"{path}:1: header must have {ncols} columns, got {len(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != ncols:
                raise DataFileError(f"{path}:{lineno}: expected {ncols} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def parse_labels(path, zero_one: bool = False) -> LabelMatrix:
    """Read a label CSV; workers and items are indexed in order of first appearance.

    A repeated (worker, item) pair is an error.
    """
    workers: dict[str, int] = {}
    items: dict[str, int] = {}
    seen: dict[tuple[int, int], int] = {}
    entries = []
    for lineno, (wid, iid, raw) in _rows(path, 3):
        where = f"{path}:{lineno}"
        if not wid or not iid:
            raise DataFileError(f"{where}: empty worker or item id")
        lab = _parse_label(raw, zero_one, where)
        i = workers.setdefault(wid, len(workers))
        j = items.setdefault(iid, len(items))
        if (i, j) in seen:
            raise DataFileError(f"{where}: duplicate label for worker {wid!r}, item {iid!r} "
                                f"(first seen on line {seen[(i, j)]})")
        seen[(i, j)] = lineno
        entries.append((i, j, lab))
    if not entries:
        raise DataFileError(f"{path}: no observations after the header")
    return LabelMatrix.from_entries(len(workers), len(items), entries,
                                    worker_ids=list(workers), item_ids=list(items))


def parse_gold(path, item_ids, zero_one: bool = False) -> GoldLabels:
    """Read a gold CSV against the item ids of a parsed label matrix."""
    index = {iid: j for j, iid in enumerate(item_ids)}
    mapping: dict[int, int] = {}
    for lineno, (iid, raw) in _rows(path, 2):
        where = f"{path}:{lineno}"
        if iid not in index:
            raise DataFileError(f"{where}: item {iid!r} does not appear in the label file")
        j = index[iid]
        if j in mapping:
            raise DataFileError(f"{where}: duplicate gold label for item {iid!r}")
        mapping[j] = _parse_label(raw, zero_one, where)
    if not mapping:
        raise DataFileError(f"{path}: no gold labels after the header")
    return GoldLabels.from_mapping(len(index), mapping)


def _ids(ids, n):
    return list(ids) if ids is not None else [str(k) for k in range(n)]


def write_labels(labels: LabelMatrix, path) -> None:
    workers = _ids(labels.worker_ids, labels.num_workers)
    items = _ids(labels.item_ids, labels.num_items)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["worker_id", "item_id", "label"])
        for i, j, lab in labels.entries():
            w.writerow([workers[i], items[j], lab])


def write_gold(gold: GoldLabels, path, item_ids=None) -> None:
    items = _ids(item_ids, gold.num_items)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "label"])
        for j, y in zip(gold.items, gold.labels):
            w.writerow([items[j], int(y)])


def write_predictions(pred: Prediction, path, item_ids=None) -> None:
    write_gold(pred.as_gold(), path, item_ids)


def params_to_json(params: OneCoinParams | DawidSkeneParams, worker_ids=None) -> dict:
    out: dict = {}
    if isinstance(params, OneCoinParams):
        out["w"] = params.accuracy.tolist()
    else:
        out["p_plus"] = params.sensitivity.tolist()
        out["p_minus"] = params.specificity.tolist()
    out["pi"] = params.prior
    out["q"] = params.sampling.to_json()
    if worker_ids is not None:
        out["worker_ids"] = list(worker_ids)
    return out


def load_params(path, worker_ids=None) -> OneCoinParams | DawidSkeneParams:
    """Load a parameter JSON (``w`` or ``p_plus``/``p_minus``, ``pi``, ``q``).

    When the file lists ``worker_ids`` and ``worker_ids`` is given here, the
    vectors are re-ordered (and restricted) to match it.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON ({exc})") from None
    return params_from_json(raw, worker_ids, source=str(path))


def params_from_json(raw: dict, worker_ids=None, source: str = "params") -> OneCoinParams | DawidSkeneParams:
    if "w" in raw:
        vectors = {"w": np.asarray(raw["w"], dtype=float)}
    elif "p_plus" in raw and "p_minus" in raw:
        vectors = {k: np.asarray(raw[k], dtype=float) for k in ("p_plus", "p_minus")}
    else:
        raise DataFileError(f"{source}: needs 'w' or both 'p_plus' and 'p_minus'")
    q = np.asarray(raw.get("q", 1.0), dtype=float)
    file_ids = raw.get("worker_ids")
    if worker_ids is not None and file_ids is not None:
        pos = {str(w): k for k, w in enumerate(file_ids)}
        missing = [w for w in worker_ids if w not in pos]
        if missing:
            raise DataFileError(f"{source}: no parameters for workers {missing[:5]}")
        order = np.array([pos[w] for w in worker_ids])
        vectors = {k: v[order] for k, v in vectors.items()}
        if q.ndim >= 1:
            q = q[order]
    try:
        sampling = SamplingDesign.from_value(q)
        pi = float(raw.get("pi", 0.5))
        if "w" in vectors:
            return OneCoinParams(vectors["w"], pi, sampling)
        return DawidSkeneParams(vectors["p_plus"], vectors["p_minus"], pi, sampling)
    except (ValueError, IndexError) as exc:
        raise DataFileError(f"{source}: {exc}") from None

"""Ranking metrics: average precision, MAP and interpolated precision-recall."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, MissingLabelsError, ParameterError, UndefinedCurveError
from .hashing import hamming_matrix

__all__ = [
    "PRCurve",
    "DEFAULT_RECALL_LEVELS",
    "average_precision",
    "mean_average_precision",
    "precision_recall",
    "relevance_matrix",
    "evaluate_retrieval",
    "shuffled_map",
    "write_metrics_json",
    "write_pr_csv",
]

DEFAULT_RECALL_LEVELS = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray


def _relevance(rel, cutoff=None):
    rel = np.asarray(rel)
    if rel.ndim != 1 or rel.size == 0:
        raise ParameterError("relevance list must be a non-empty 1-D sequence")
    if not np.all((rel == 0) | (rel == 1)):
        raise ParameterError("relevance values must be 0 or 1")
    if cutoff is not None:
        if cutoff < 1:
            raise ParameterError(f"cutoff must be >= 1, got {cutoff}")
        rel = rel[:cutoff]
    return rel.astype(np.float64)


def average_precision(rel, cutoff=None):
    """``sum_k P(k) r(k) / sum_k r(k)`` over the (optionally truncated) list.

    A list with no relevant item scores 0.
    """
    r = _relevance(rel, cutoff)
    n_rel = r.sum()
    if n_rel == 0:
        return 0.0
    precision_at_k = np.cumsum(r) / np.arange(1, r.size + 1)
    return float(np.sum(precision_at_k * r) / n_rel)


def mean_average_precision(queries, cutoff=None):
    """Mean AP over an iterable of relevance lists (or a 2-D 0/1 array)."""
    aps = [average_precision(r, cutoff) for r in queries]
    if not aps:
        raise ParameterError("MAP needs at least one query")
    return float(np.mean(aps))


def precision_recall(rel, levels=None):
    """Interpolated precision at each recall level.

    Precision at level ``t`` is the maximum precision over every rank whose
    recall is at least ``t``.
    """
    r = _relevance(rel)
    n_rel = r.sum()
    if n_rel == 0:
        raise UndefinedCurveError("precision-recall is undefined without relevant documents")
    levels = DEFAULT_RECALL_LEVELS if levels is None else np.asarray(levels, dtype=np.float64)
    if levels.ndim != 1 or np.any(np.diff(levels) <= 0) or levels.min() < 0 or levels.max() > 1:
        raise ParameterError("recall levels must be strictly ascending within [0, 1]")
    hits = np.cumsum(r)
    recall = hits / n_rel
    precision = hits / np.arange(1, r.size + 1)
    # suffix maximum gives the best precision at or beyond each rank
    best_from = np.maximum.accumulate(precision[::-1])[::-1]
    first = np.searchsorted(recall, levels - 1e-12, side="left")
    return PRCurve(recall=levels.copy(), precision=best_from[np.minimum(first, r.size - 1)])


def relevance_matrix(distances, query_labels, db_labels):
    """Relevance of each ranked database item, shape ``(n_queries, n_db)``.

    Rows follow the stable ascending-distance order used by
    :func:`spcmh.hashing.rank`.
    """
    distances = np.asarray(distances)
    query_labels = np.asarray(query_labels)
    db_labels = np.asarray(db_labels)
    if distances.shape != (query_labels.size, db_labels.size):
        raise DimensionError("distance matrix does not match the label arrays")
    order = np.argsort(distances, axis=1, kind="stable")
    return (db_labels[order] == query_labels[:, None]).astype(np.int8)


def evaluate_retrieval(query_codes, db_codes, query_labels, db_labels, cutoff=None, levels=None):
    """MAP, per-query AP and a mean PR curve for one retrieval task."""
    if query_labels is None or db_labels is None:
        raise MissingLabelsError("evaluation requires class labels for queries and database")
    rel = relevance_matrix(hamming_matrix(query_codes, db_codes), query_labels, db_labels)
    aps = np.array([average_precision(r, cutoff) for r in rel])
    curves = [precision_recall(r, levels) for r in rel if r.any()]
    levels_out = DEFAULT_RECALL_LEVELS if levels is None else np.asarray(levels, dtype=np.float64)
    mean_precision = np.mean([c.precision for c in curves], axis=0) if curves else np.zeros_like(levels_out)
    return {
        "map": float(aps.mean()),
        "ap": aps,
        "pr_curve": PRCurve(recall=levels_out.copy(), precision=mean_precision),
    }


def shuffled_map(query_labels, db_labels, n_shuffles=20, seed=0, cutoff=None):
    """Chance-level MAP: the mean MAP of uniformly random rankings."""
    rng = np.random.default_rng(seed)
    query_labels = np.asarray(query_labels)
    db_labels = np.asarray(db_labels)
    maps = []
    for _ in range(n_shuffles):
        rel = [(db_labels[rng.permutation(db_labels.size)] == q).astype(np.int8) for q in query_labels]
        maps.append(mean_average_precision(rel, cutoff))
    return float(np.mean(maps))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, PRCurve):
        return {"recall": obj.recall.tolist(), "precision": obj.precision.tolist()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_metrics_json(results, path, config=None):
    doc = {"tasks": _jsonable(results)}
    if config is not None:
        doc["config"] = _jsonable(config)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def write_pr_csv(curves, path):
    """``curves`` maps task name to :class:`PRCurve`; one row per (task, level)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task", "recall", "precision"])
        for task, curve in curves.items():
            for r, p in zip(curve.recall, curve.precision):
                writer.writerow([task, repr(float(r)), repr(float(p))])

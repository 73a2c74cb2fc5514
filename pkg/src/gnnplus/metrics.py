"""Evaluation metrics.

Ranking and F1 metrics are evaluated in exact rational arithmetic and rounded
once at the end, so results do not depend on summation order.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import DimensionError, UndefinedMetricError

HIGHER_IS_BETTER = {"mae": False, "loss": False, "accuracy": True, "f1_macro": True,
                    "average_precision": True, "auroc": True}


def mae(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float).reshape(pred.shape)
    return float(np.mean(np.abs(pred - target))) if pred.size else 0.0


def accuracy(pred_labels, labels) -> float:
    pred_labels = np.asarray(pred_labels).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if pred_labels.size != labels.size:
        raise DimensionError("accuracy: prediction and label counts differ")
    if labels.size == 0:
        return 0.0
    return int(np.sum(pred_labels == labels)) / labels.size


def f1_macro(pred_labels, labels, num_classes: int) -> float:
    """Unweighted mean of per-class F1 over all ``num_classes`` classes.

    A class absent from both predictions and labels scores 0 and still counts.
    """
    pred_labels = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred_labels.size != labels.size:
        raise DimensionError("f1_macro: prediction and label counts differ")
    tp = np.bincount(labels[pred_labels == labels], minlength=num_classes)
    pred_count = np.bincount(pred_labels, minlength=num_classes)
    true_count = np.bincount(labels, minlength=num_classes)
    total = Fraction(0)
    for c in range(num_classes):
        denom = int(pred_count[c]) + int(true_count[c])
        if denom:
            total += Fraction(2 * int(tp[c]), denom)
    return float(total / num_classes)


def _ap_exact(scores: np.ndarray, labels: np.ndarray) -> Fraction:
    positives = int(labels.sum())
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # walk distinct thresholds from the top; ties enter together
    boundaries = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    total = Fraction(0)
    tp_prev = 0
    tp_cum = np.cumsum(y)
    for b in boundaries:
        tp = int(tp_cum[b])
        if tp > tp_prev:
            total += Fraction((tp - tp_prev) * tp, int(b) + 1)
        tp_prev = tp
    return total / positives


def average_precision(scores, labels) -> float:
    """Non-interpolated AP; with a 2-D input, the mean over label columns.

    Columns without a positive are skipped; if none remain the metric is
    undefined.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise DimensionError(f"average_precision: {scores.shape} vs {labels.shape}")
    if scores.ndim == 1:
        scores, labels = scores[:, None], labels[:, None]
    values = [_ap_exact(scores[:, j], labels[:, j])
              for j in range(scores.shape[1]) if labels[:, j].sum() > 0]
    if not values:
        raise UndefinedMetricError("average precision needs at least one positive")
    return float(sum(values, Fraction(0)) / len(values))


def _auroc_exact(scores: np.ndarray, labels: np.ndarray) -> Fraction:
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative examples")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], s.size] - 1
    # twice the 1-based midrank of each tie group is an integer
    twice_rank = np.empty(s.size, dtype=np.int64)
    twice_rank[order] = np.repeat(starts + ends + 2, ends - starts + 1)
    u2 = int(twice_rank[labels == 1].sum()) - pos * (pos + 1)
    return Fraction(u2, 2 * pos * neg)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks; 2-D input averages valid columns."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise DimensionError(f"auroc: {scores.shape} vs {labels.shape}")
    if scores.ndim == 1:
        return float(_auroc_exact(scores, labels))
    values = []
    for j in range(scores.shape[1]):
        col = labels[:, j]
        if 0 < col.sum() < col.size:
            values.append(_auroc_exact(scores[:, j], col))
    if not values:
        raise UndefinedMetricError("no label column has both classes")
    return float(sum(values, Fraction(0)) / len(values))


def compute_metrics(outputs, labels, task: str, num_classes: int | None = None) -> dict:
    """All metrics that apply to ``task``; undefined ranking metrics are omitted."""
    outputs = np.asarray(outputs, dtype=float)
    if task == "graph_regression":
        return {"mae": mae(outputs, labels)}
    if task in ("graph_classification", "node_classification"):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if outputs.ndim != 2 or outputs.shape[0] != labels.size:
            raise DimensionError(f"logits {outputs.shape} vs {labels.size} labels")
        k = num_classes or outputs.shape[1]
        pred = np.argmax(outputs, axis=1)
        out = {"accuracy": accuracy(pred, labels), "f1_macro": f1_macro(pred, labels, k)}
        if k == 2:
            try:
                out["auroc"] = auroc(outputs[:, 1] - outputs[:, 0], labels)
            except UndefinedMetricError:
                pass
        return out
    if task == "graph_multilabel":
        labels = np.asarray(labels).reshape(outputs.shape)
        out = {}
        for name, fn in (("average_precision", average_precision), ("auroc", auroc)):
            try:
                out[name] = fn(outputs, labels)
            except UndefinedMetricError:
                pass
        return out
    raise ValueError(f"unknown task {task!r}")

"""Confusion matrices, per-class and macro P/R/F1, and multiclass MCC.

Zero-denominator cases (a class never predicted, a constant gold
vector) are defined as 0 and flagged rather than raised, so pipeline
code never crashes on degenerate folds.
"""

from __future__ import annotations

import math

import numpy as np


class MetricsError(ValueError):
    """Contract violation in the metric inputs."""


def confusion_matrix(gold, pred, num_classes: int) -> np.ndarray:
    """K x K count matrix; rows are gold labels, columns predictions."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise MetricsError(
            f"gold and pred lengths differ: {gold.shape} vs {pred.shape}"
        )
    if gold.size and (gold.min() < 0 or gold.max() >= num_classes):
        raise MetricsError("gold label outside [0, K)")
    if pred.size and (pred.min() < 0 or pred.max() >= num_classes):
        raise MetricsError("predicted label outside [0, K)")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    return cm


def class_report(cm: np.ndarray) -> dict:
    """Per-class precision/recall/F1 plus unweighted macro averages.

    Classes with a zero denominator score 0 and are listed in
    ``flags``.
    """
    cm = np.asarray(cm, dtype=np.float64)
    k = cm.shape[0]
    per_class = []
    flags = []
    for c in range(k):
        col = cm[:, c].sum()
        row = cm[c, :].sum()
        tp = cm[c, c]
        if col == 0:
            precision = 0.0
            flags.append(f"class {c}: precision undefined (never predicted)")
        else:
            precision = tp / col
        if row == 0:
            recall = 0.0
            flags.append(f"class {c}: recall undefined (no gold examples)")
        else:
            recall = tp / row
        if precision + recall == 0.0:
            f1 = 0.0
        else:
            f1 = 2.0 * precision * recall / (precision + recall)
        per_class.append({"precision": precision, "recall": recall, "f1": f1})
    return {
        "per_class": per_class,
        "macro_precision": sum(p["precision"] for p in per_class) / k,
        "macro_recall": sum(p["recall"] for p in per_class) / k,
        "macro_f1": sum(p["f1"] for p in per_class) / k,
        "flags": flags,
    }


def macro_f1(gold, pred, num_classes: int) -> float:
    return class_report(confusion_matrix(gold, pred, num_classes))["macro_f1"]


def mcc(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation from a confusion matrix.

    Computed as ``(c s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 -
    sum t_k^2))`` with ``c`` the correct count, ``s`` the total and
    ``p_k`` / ``t_k`` the predicted / true class totals. A zero
    denominator yields 0 by convention.
    """
    cm = np.asarray(cm, dtype=np.float64)
    correct = float(np.trace(cm))
    total = float(cm.sum())
    pred_totals = cm.sum(axis=0)
    true_totals = cm.sum(axis=1)
    num = correct * total - float(pred_totals @ true_totals)
    den_sq = (total**2 - float(pred_totals @ pred_totals)) * (
        total**2 - float(true_totals @ true_totals)
    )
    if den_sq <= 0.0:
        return 0.0
    return num / math.sqrt(den_sq)


def mcc_degenerate(cm: np.ndarray) -> bool:
    """True when the MCC denominator vanishes (constant gold or prediction)."""
    cm = np.asarray(cm, dtype=np.float64)
    total = float(cm.sum())
    pred_totals = cm.sum(axis=0)
    true_totals = cm.sum(axis=1)
    return (
        total**2 - float(pred_totals @ pred_totals) <= 0.0
        or total**2 - float(true_totals @ true_totals) <= 0.0
    )


def metrics_report(gold, pred, num_classes: int) -> dict:
    """Full evaluation dict: per-class report, macro scores, MCC, confusion."""
    cm = confusion_matrix(gold, pred, num_classes)
    report = class_report(cm)
    flags = list(report["flags"])
    if mcc_degenerate(cm):
        flags.append("mcc undefined (degenerate marginals); reported as 0")
    return {
        "per_class": report["per_class"],
        "macro_precision": report["macro_precision"],
        "macro_recall": report["macro_recall"],
        "macro_f1": report["macro_f1"],
        "mcc": mcc(cm),
        "confusion": cm.tolist(),
        "flags": flags,
    }

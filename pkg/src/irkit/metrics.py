"""Evaluation metrics with exact tie handling and honest degeneracy flags.

AUC uses the average-rank Mann-Whitney statistic. Ranks of a finite sample
are integers or integer halves, both exact in binary floating point, so the
result is bit-identical to brute-force counting of concordant pairs (ties
worth one half). Undefined quantities (single-class AUC, zero-denominator
precision, zero-variance targets) are never silently patched: reports carry
a ``degenerate`` flag and scalar helpers raise.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UndefinedMetricError


def _validated(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} vs labels {y.shape}")
    if s.size == 0:
        raise UndefinedMetricError("empty input")
    if not np.all(np.isfinite(s)):
        raise UndefinedMetricError("non-finite scores")
    return s, y


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # exact: mean of ints
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties 0.5)."""
    s, y = _validated(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auc needs both classes present")
    ranks = average_ranks(s)
    u = ranks[y].sum() - 0.5 * n_pos * (n_pos + 1)
    return float(u / (n_pos * n_neg))


def confusion(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    """Counts at score > threshold (boundary scores predict negative)."""
    s, y = _validated(scores, labels)
    pred = s > threshold
    return {
        "tp": int(np.sum(pred & y)),
        "fp": int(np.sum(pred & ~y)),
        "fn": int(np.sum(~pred & y)),
        "tn": int(np.sum(~pred & ~y)),
    }


def _prf(tp: int, fp: int, fn: int, notes: list, tag: str) -> tuple[float, float, float]:
    if tp + fp == 0:
        notes.append(f"{tag}precision undefined (no predicted positives); reported 0")
        precision = 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        notes.append(f"{tag}recall undefined (no actual positives); reported 0")
        recall = 0.0
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def classification_report(
    scores, labels, threshold: float = 0.5, average: str = "binary"
) -> dict:
    """Accuracy, precision/recall/F1 and AUC at a fixed threshold.

    ``average='binary'`` scores the positive class; ``'macro'`` averages both
    one-vs-rest views. Undefined components report 0.0 and set ``degenerate``
    with a note, so a silent all-negative model cannot look precise.
    """
    if average not in ("binary", "macro"):
        raise UndefinedMetricError(f"unknown average {average!r}")
    s, y = _validated(scores, labels)
    counts = confusion(s, y, threshold)
    tp, fp, fn, tn = counts["tp"], counts["fp"], counts["fn"], counts["tn"]
    notes: list[str] = []
    n = s.size

    if average == "binary":
        precision, recall, f1 = _prf(tp, fp, fn, notes, "")
    else:
        p_pos, r_pos, f_pos = _prf(tp, fp, fn, notes, "positive-class ")
        # negative class viewed as the target: swap roles
        p_neg, r_neg, f_neg = _prf(tn, fn, fp, notes, "negative-class ")
        precision = 0.5 * (p_pos + p_neg)
        recall = 0.5 * (r_pos + r_neg)
        f1 = 0.5 * (f_pos + f_neg)

    try:
        auc_value: float | None = auc(s, y)
    except UndefinedMetricError as exc:
        auc_value = None
        notes.append(str(exc))

    return {
        "n": n,
        "threshold": threshold,
        "average": average,
        "accuracy": (tp + tn) / n,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "auc": auc_value,
        **counts,
        "degenerate": bool(notes),
        "notes": notes,
    }


def regression_report(preds, targets) -> dict:
    """MAE, RMSE and R^2 (R^2 is 1 - SSE/SST about the evaluation mean)."""
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"preds {p.shape} vs targets {t.shape}")
    if p.size == 0:
        raise UndefinedMetricError("empty input")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise UndefinedMetricError("non-finite values")
    err = p - t
    sse = float(np.sum(err**2))
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        raise UndefinedMetricError("r2 undefined for constant targets")
    return {
        "n": p.size,
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(sse / p.size)),
        "r2": 1.0 - sse / sst,
    }


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr) staircase from (0,0) to (1,1), one step per distinct score.

    Tied scores collapse to a single diagonal segment, so the trapezoidal
    area under these points reproduces ``auc`` to floating-point accuracy.
    """
    s, y = _validated(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc needs both classes present")
    order = np.argsort(-s, kind="mergesort")
    y_sorted = y[order]
    s_sorted = s[order]
    boundaries = np.flatnonzero(np.diff(s_sorted) != 0)
    cut = np.concatenate([boundaries, [y.size - 1]])
    tps = np.cumsum(y_sorted)[cut]
    fps = (cut + 1) - tps
    points = np.column_stack([fps / n_neg, tps / n_pos])
    return np.vstack([[0.0, 0.0], points])


def roc_auc_trapezoid(points: np.ndarray) -> float:
    return float(np.trapezoid(points[:, 1], points[:, 0]))


def group_summary(groups, scores, labels, kind: str = "classification") -> dict:
    """Per-subgroup reports keyed by group value; tiny groups flag, not fail."""
    g = [str(v) for v in groups]
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(g) != s.size:
        raise ShapeError(f"groups {len(g)} vs scores {s.shape}")
    out: dict[str, dict] = {}
    for value in sorted(set(g)):
        idx = [i for i, v in enumerate(g) if v == value]
        sub_scores = s[idx]
        sub_labels = np.asarray(labels).ravel()[idx]
        if kind == "classification":
            out[value] = classification_report(sub_scores, sub_labels)
        else:
            try:
                out[value] = regression_report(sub_scores, sub_labels)
            except UndefinedMetricError as exc:
                out[value] = {"n": len(idx), "degenerate": True, "notes": [str(exc)]}
    return out

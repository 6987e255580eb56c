from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    pass


def _check(scores, labels, need_both=True):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape != labels.shape or scores.size == 0:
        raise MetricError("scores and labels must be non-empty and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    if need_both and (labels.min() == labels.max()):
        raise MetricError("both classes must be present")
    return scores, labels


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    scores, labels = _check(scores, labels, need_both=False)
    return float(np.mean((scores >= threshold).astype(np.int64) == labels))


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC, ties counted one half.

    Computed as an exact integer ``2U`` so the value is the correctly
    rounded quotient ``U / (n_pos * n_neg)``.
    """
    scores, labels = _check(scores, labels)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # group boundaries of tied scores
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    counts_neg = np.add.reduceat(1 - y, starts)
    counts_pos = np.add.reduceat(y, starts)
    neg_below = np.cumsum(counts_neg) - counts_neg
    twice_u = int(np.sum(counts_pos * (2 * neg_below + counts_neg)))
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return twice_u / (2 * n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision: sum over descending thresholds of precision x recall increment."""
    scores, labels = _check(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    gains = np.diff(np.r_[0.0, recall])
    return float(np.sum(gains * precision))


def all_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    return {
        "accuracy": accuracy(scores, labels, threshold),
        "auroc": auroc(scores, labels),
        "auprc": auprc(scores, labels),
    }

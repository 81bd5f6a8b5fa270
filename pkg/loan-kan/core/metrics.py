# core/metrics.py
from typing import Tuple

import numpy as np
from scipy.stats import rankdata

from utils.data_models import ConfusionCounts, MetricsReport
from utils.errors import MetricError


def _validate(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size == 0:
        raise MetricError("Cannot score an empty set")
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores but {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("Labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def confusion_at_threshold(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """A score at or above the threshold counts as a predicted default"""
    scores, labels = _validate(scores, labels)
    predicted = scores >= threshold
    positive = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def compute_metrics(counts: ConfusionCounts) -> Tuple[float, float, float, float, bool, bool]:
    """
    Accuracy, precision, recall and F1 from confusion counts.

    Returns:
        (accuracy, precision, recall, f1, precision_defined, recall_defined).
        An undefined precision or recall is reported as 0.
    """
    if counts.total <= 0:
        raise MetricError("Confusion counts are empty")
    accuracy = (counts.tp + counts.tn) / counts.total
    precision_defined = counts.tp + counts.fp > 0
    recall_defined = counts.tp + counts.fn > 0
    precision = counts.tp / (counts.tp + counts.fp) if precision_defined else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if recall_defined else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return accuracy, precision, recall, f1, precision_defined, recall_defined


def auc(scores, labels) -> float:
    """Mann-Whitney AUC from average ranks; tied pairs count one half"""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes")
    ranks = rankdata(scores, method='average')
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_bruteforce(scores, labels) -> float:
    """Pair-enumeration AUC, O(P * N)"""
    scores, labels = _validate(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise MetricError("AUC needs both classes")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    counts = confusion_at_threshold(scores, labels, threshold)
    accuracy, precision, recall, f1, p_defined, r_defined = compute_metrics(counts)
    return MetricsReport(accuracy, precision, recall, f1, auc(scores, labels), threshold, counts,
                         p_defined, r_defined)

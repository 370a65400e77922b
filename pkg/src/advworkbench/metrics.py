"""Top-k error, per-image confidence reports and robustness-curve summaries.

Errors are fractions in [0, 1]; percent formatting happens only when writing
reports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .models import forward_logits


@dataclass(frozen=True)
class SweepRecord:
    epsilon: float
    top1_error: float
    top5_error: float
    mean_l2: float
    success_rate: float
    attack: str


def true_label_rank(logits, labels):
    """0-based rank of each row's true label; ties go to the lower class index."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(labels))
    z = logits[rows, labels][:, None]
    cls = np.arange(logits.shape[1])[None, :]
    ahead = (logits > z) | ((logits == z) & (cls < labels[:, None]))
    return ahead.sum(axis=1)


def topk_error_from_logits(logits, labels, k):
    logits = np.asarray(logits)
    if k < 1 or k > logits.shape[1]:
        raise ValueError(f"k must lie in [1, {logits.shape[1]}], got {k}")
    if len(labels) == 0:
        return 0.0
    return float(np.mean(true_label_rank(logits, labels) >= k))


def topk_error(model, ds, k):
    """Fraction of items whose true label is not among the k highest logits."""
    if k > ds.num_classes or k > model.spec.num_classes:
        raise ValueError(f"k={k} exceeds the number of classes")
    return topk_error_from_logits(forward_logits(model, ds.images), ds.labels, k)


def accuracy(model, ds):
    return 1.0 - topk_error(model, ds, 1)


@dataclass(frozen=True)
class ConfidenceReport:
    index: int
    true_class: str
    top_classes: tuple  # names, most confident first
    confidences: tuple


def confidence_report(model, ds, indices, class_names=None):
    """Top-5 classes with softmax (T=1) confidences for each selected item."""
    names = list(class_names) if class_names is not None else [str(c) for c in range(ds.num_classes)]
    indices = [int(i) for i in indices]
    for i in indices:
        if not 0 <= i < len(ds):
            raise IndexError(f"item index {i} out of range [0, {len(ds)})")
    if not indices:
        return []
    probs = ad.softmax_with_temperature(forward_logits(model, ds.images[indices]), 1.0).data
    top = min(5, probs.shape[1])
    reports = []
    for row, i in zip(probs, indices):
        order = sorted(range(len(row)), key=lambda c: (-row[c], c))[:top]
        reports.append(ConfidenceReport(i, names[int(ds.labels[i])],
                                        tuple(names[c] for c in order),
                                        tuple(float(row[c]) for c in order)))
    return reports


@dataclass(frozen=True)
class CurveSummary:
    peak_top1: float
    peak_top5: float
    saturation_epsilon: float


def robustness_curve(records):
    """Peak errors and the smallest epsilon reaching 95% of the peak top-1 error."""
    if not records:
        raise ValueError("robustness_curve needs at least one record")
    peak1 = max(r.top1_error for r in records)
    peak5 = max(r.top5_error for r in records)
    sat = next(r.epsilon for r in records if r.top1_error >= 0.95 * peak1)
    return CurveSummary(peak1, peak5, sat)

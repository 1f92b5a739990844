"""Binary classification metrics: confusion counts, rates, ROC/AUC, timing.

MCC uses the four-marginal product form; when any marginal is zero the
value is defined as 0 (with a warning), the usual convention for a
degenerate confusion matrix. ROC sweeps group tied scores into a single
threshold step, which makes the trapezoidal area equal to the Mann-Whitney
pair-counting statistic with half credit for ties.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRocError, UndefinedRateError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if self.total < 1:
            raise ValueError("confusion counts must describe at least one sample")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RocCurve:
    points: list  # (fpr, tpr), threshold descending
    auc: float

    def __post_init__(self):
        if not (0.0 <= self.auc <= 1.0):
            raise ValueError(f"AUC must be in [0, 1], got {self.auc}")
        fprs = [p[0] for p in self.points]
        tprs = [p[1] for p in self.points]
        if self.points[0] != (0.0, 0.0) or self.points[-1] != (1.0, 1.0):
            raise ValueError("ROC must start at (0,0) and end at (1,1)")
        if any(b < a for a, b in zip(fprs, fprs[1:])) or any(b < a for a, b in zip(tprs, tprs[1:])):
            raise ValueError("ROC coordinates must be non-decreasing")


def confusion(scores: list, threshold: float = 0.5) -> ConfusionCounts:
    """Tally (score, truth) pairs; predicted positive iff score >= threshold."""
    if len(scores) == 0:
        raise ValueError("cannot build confusion counts from an empty score list")
    tp = fp = tn = fn = 0
    for score, truth in scores:
        if not math.isfinite(score):
            raise ValueError(f"scores must be finite, got {score}")
        if int(truth) not in (0, 1):
            raise ValueError(f"labels must be binary, got {truth}")
        positive = score >= threshold
        if positive and truth:
            tp += 1
        elif positive:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def rates(c: ConfusionCounts) -> dict:
    """Sensitivity, specificity, accuracy and MCC from one confusion matrix."""
    if c.tp + c.fn == 0:
        raise UndefinedRateError("sensitivity undefined: no positive samples (tp + fn = 0)")
    if c.tn + c.fp == 0:
        raise UndefinedRateError("specificity undefined: no negative samples (tn + fp = 0)")
    marginals = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if min(marginals) == 0:
        warnings.warn("MCC denominator has a zero marginal; reporting 0 by convention",
                      stacklevel=2)
        mcc = 0.0
    else:
        mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(math.prod(marginals))
    return {
        "sensitivity": c.tp / (c.tp + c.fn),
        "specificity": c.tn / (c.tn + c.fp),
        "accuracy": (c.tp + c.tn) / c.total,
        "mcc": mcc,
    }


def roc_auc(scores: list) -> RocCurve:
    """ROC curve over all distinct thresholds, AUC by the trapezoidal rule."""
    arr = np.asarray([(float(s), int(t)) for s, t in scores], dtype=np.float64)
    if arr.size == 0:
        raise DegenerateRocError("empty score list")
    pos = int(np.sum(arr[:, 1] == 1))
    neg = int(np.sum(arr[:, 1] == 0))
    if pos == 0 or neg == 0:
        raise DegenerateRocError("ROC needs both classes present")
    order = np.argsort(-arr[:, 0], kind="stable")
    sorted_scores = arr[order, 0]
    sorted_truth = arr[order, 1]

    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(sorted_scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:  # one step per tie group
            tp += int(sorted_truth[j] == 1)
            fp += int(sorted_truth[j] == 0)
            j += 1
        points.append((fp / neg, tp / pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, auc=auc)


def time_inference(predict_fn, patches: list, repeats: int = 10) -> dict:
    """Median and p95 single-image latency in ms; one warm-up pass excluded."""
    if repeats < 10:
        raise ValueError("need at least 10 repeats")
    if not patches:
        raise ValueError("need at least one patch")
    predict_fn(patches[0])  # warm-up
    samples = []
    for r in range(repeats):
        for patch in patches:
            t0 = time.perf_counter()
            predict_fn(patch)
            samples.append((time.perf_counter() - t0) * 1e3)
    return {
        "median_ms": float(np.median(samples)),
        "p95_ms": float(np.percentile(samples, 95)),
        "images": len(patches),
        "repeats": repeats,
    }

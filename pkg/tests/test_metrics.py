"""Metrics against brute-force oracles and algebraic identities."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rbcphase.errors import DegenerateRocError, UndefinedRateError
from rbcphase.metrics import ConfusionCounts, RocCurve, confusion, rates, roc_auc, time_inference


def brute_confusion(scores, threshold):
    tp = sum(1 for s, t in scores if s >= threshold and t == 1)
    fp = sum(1 for s, t in scores if s >= threshold and t == 0)
    fn = sum(1 for s, t in scores if s < threshold and t == 1)
    tn = sum(1 for s, t in scores if s < threshold and t == 0)
    return tp, fp, tn, fn


def pair_count_auc(scores):
    """O(n^2) Mann-Whitney statistic with half credit for ties."""
    pos = [s for s, t in scores if t == 1]
    neg = [s for s, t in scores if t == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_confusion_perfect_pair():
    c = confusion([(1.0, 1), (0.0, 0)], threshold=0.5)
    assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)


def test_confusion_all_positive_at_zero_threshold():
    c = confusion([(0.2, 1), (0.7, 0), (0.0, 1)], threshold=0.0)
    assert c.fn == 0 and c.tn == 0
    assert c.tp == 2 and c.fp == 1


def test_confusion_matches_brute_force():
    rng = np.random.default_rng(7)
    scores = [(float(s), int(t)) for s, t in
              zip(rng.random(200), rng.integers(0, 2, 200))]
    for threshold in (0.1, 0.5, 0.9):
        c = confusion(scores, threshold)
        assert (c.tp, c.fp, c.tn, c.fn) == brute_confusion(scores, threshold)


def test_confusion_rejects_empty():
    with pytest.raises(ValueError):
        confusion([], 0.5)


def test_rates_perfect_classifier():
    r = rates(ConfusionCounts(tp=50, fp=0, tn=50, fn=0))
    assert r == {"sensitivity": 1.0, "specificity": 1.0, "accuracy": 1.0, "mcc": 1.0}


def test_rates_hand_case():
    # oracle: tp=90 fn=10 tn=91 fp=9 -> 0.900 / 0.910 / 0.905 and
    # MCC = 8100 / sqrt(99*100*100*101) = 0.8100405...
    r = rates(ConfusionCounts(tp=90, fp=9, tn=91, fn=10))
    assert r["sensitivity"] == pytest.approx(0.900, abs=1e-12)
    assert r["specificity"] == pytest.approx(0.910, abs=1e-12)
    assert r["accuracy"] == pytest.approx(0.905, abs=1e-12)
    assert r["mcc"] == pytest.approx(0.8100405030377531, abs=1e-12)


def test_rates_anticorrelated_classifier():
    # All four marginals are positive here, so the formula applies and gives
    # exactly -1 (every prediction wrong).
    r = rates(ConfusionCounts(tp=0, fn=100, tn=0, fp=100))
    assert r["sensitivity"] == 0.0
    assert r["specificity"] == 0.0
    assert r["mcc"] == pytest.approx(-1.0, abs=1e-12)


def test_rates_degenerate_marginal_gives_zero_mcc():
    with pytest.warns(UserWarning):
        r = rates(ConfusionCounts(tp=10, fp=10, tn=0, fn=0))
    assert r["mcc"] == 0.0


def test_rates_undefined_without_positives():
    with pytest.raises(UndefinedRateError):
        rates(ConfusionCounts(tp=0, fp=5, tn=5, fn=0))
    with pytest.raises(UndefinedRateError):
        rates(ConfusionCounts(tp=5, fp=0, tn=0, fn=5))


def test_rates_match_brute_force_on_random_counts():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 50, 4))
        if tp + fn == 0 or tn + fp == 0:
            continue
        c = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
        marginals = ((tp + fp), (tp + fn), (tn + fp), (tn + fn))
        if min(marginals) == 0:
            with pytest.warns(UserWarning):
                r = rates(c)
            assert r["mcc"] == 0.0
        else:
            r = rates(c)
            expect = (tp * tn - fp * fn) / math.sqrt(math.prod(marginals))
            assert r["mcc"] == pytest.approx(expect, abs=1e-12)
        assert r["accuracy"] == pytest.approx((tp + tn) / (tp + fp + tn + fn), abs=1e-12)
        # accuracy = (sens*P + spec*N) / (P+N) identically
        p, n = tp + fn, tn + fp
        assert r["accuracy"] == pytest.approx(
            (r["sensitivity"] * p + r["specificity"] * n) / (p + n), abs=1e-12)


@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_mcc_bounded(tp, fp, tn, fn):
    if tp + fn == 0 or tn + fp == 0 or tp + fp + tn + fn == 0:
        return
    if min(tp + fp, tn + fn) == 0:
        with pytest.warns(UserWarning):
            r = rates(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn))
    else:
        r = rates(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn))
    assert -1.0 - 1e-12 <= r["mcc"] <= 1.0 + 1e-12
    if fp == 0 and fn == 0:
        assert r["mcc"] == pytest.approx(1.0)


def test_roc_perfect_separation():
    scores = [(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)]
    roc = roc_auc(scores)
    assert roc.auc == pytest.approx(1.0)
    assert roc.points[0] == (0.0, 0.0) and roc.points[-1] == (1.0, 1.0)


def test_roc_random_scores_near_half():
    rng = np.random.default_rng(42)
    scores = [(float(s), int(t)) for s, t in zip(rng.random(1000), rng.integers(0, 2, 1000))]
    assert 0.45 <= roc_auc(scores).auc <= 0.55


def test_roc_matches_pair_counting_with_ties():
    rng = np.random.default_rng(5)
    for n in (10, 57, 200, 500):
        # coarse quantization forces plenty of ties
        scores = [(float(np.round(s, 1)), int(t))
                  for s, t in zip(rng.random(n), rng.integers(0, 2, n))]
        if not any(t == 1 for _, t in scores) or not any(t == 0 for _, t in scores):
            continue
        assert roc_auc(scores).auc == pytest.approx(pair_count_auc(scores), abs=1e-12)


def test_roc_monotone_points():
    rng = np.random.default_rng(11)
    scores = [(float(s), int(t)) for s, t in zip(rng.random(300), rng.integers(0, 2, 300))]
    roc = roc_auc(scores)
    xs = [p[0] for p in roc.points]
    ys = [p[1] for p in roc.points]
    assert all(b >= a for a, b in zip(xs, xs[1:]))
    assert all(b >= a for a, b in zip(ys, ys[1:]))


def test_roc_single_class_rejected():
    with pytest.raises(DegenerateRocError):
        roc_auc([(0.5, 1), (0.7, 1)])


def test_roc_curve_invariants_enforced():
    with pytest.raises(ValueError):
        RocCurve(points=[(0.0, 0.0), (0.5, 0.2)], auc=0.5)  # missing (1,1)
    with pytest.raises(ValueError):
        RocCurve(points=[(0.0, 0.0), (0.6, 0.4), (0.5, 0.9), (1.0, 1.0)], auc=0.5)


def test_time_inference_reports_positive_latency():
    stats = time_inference(lambda x: sum(x), [[1, 2, 3]], repeats=10)
    assert stats["median_ms"] > 0 and math.isfinite(stats["median_ms"])
    assert stats["p95_ms"] >= stats["median_ms"]


def test_time_inference_requires_repeats():
    with pytest.raises(ValueError):
        time_inference(lambda x: x, [[1]], repeats=5)

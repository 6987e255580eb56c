from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dipseq.train import MetricError, accuracy, all_metrics, auprc, auroc


def pair_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            total += 1 if p > n else Fraction(1, 2) if p == n else 0
    return float(total / (len(pos) * len(neg)))


def sweep_auprc(scores, labels):
    """Average precision by visiting every distinct threshold from the top."""
    scores = list(scores)
    labels = list(labels)
    n_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        sel = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(sel)
        recall = tp / n_pos
        ap += (recall - prev_recall) * tp / len(sel)
        prev_recall = recall
    return ap


def test_perfect_separation():
    assert auroc([0.9, 0.1], [1, 0]) == 1.0
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert auprc([0.9, 0.1], [1, 0]) == 1.0


def test_all_ties():
    assert auroc([0.3] * 6, [0, 1] * 3) == 0.5


def test_random_sets_match_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        # coarse grid gives plenty of ties
        scores = rng.integers(0, 8, n) / 8.0 if rng.random() < 0.5 else rng.random(n)
        assert auroc(scores, labels) == pair_auroc(scores, labels)
        assert abs(auprc(scores, labels) - sweep_auprc(scores, labels)) <= 1e-12


@given(st.lists(st.tuples(st.integers(-40, 40), st.integers(0, 1)), min_size=2, max_size=40))
def test_monotone_invariance(pairs):
    # grid scores so the transform stays strictly monotone after rounding
    s = np.array([p[0] / 8 for p in pairs])
    y = np.array([p[1] for p in pairs])
    if y.min() == y.max():
        return
    assert auroc(s, y) == auroc(np.exp(s) * 3 + 1, y)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1), st.integers(0, 2**16))
def test_accuracy_plus_error(scores, thr, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(scores))
    acc = accuracy(scores, y, thr)
    err = np.mean((np.asarray(scores) >= thr) != y)
    assert acc + err == pytest.approx(1.0)


def test_errors():
    with pytest.raises(MetricError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        auprc([0.1], [0])
    with pytest.raises(MetricError):
        accuracy([], [])
    with pytest.raises(MetricError):
        accuracy([0.1, 0.2], [0, 2])
    assert accuracy([0.7], [1]) == 1.0


def test_all_metrics_keys():
    assert set(all_metrics([0.2, 0.8, 0.6], [0, 1, 0])) == {"accuracy", "auroc", "auprc"}

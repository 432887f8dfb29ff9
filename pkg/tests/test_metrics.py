"""Metric implementations against brute-force oracles."""

import numpy as np
import numpy.testing as npt
import pytest

from hierprot import metrics as mt


def accuracy_oracle(logits, labels):
    hits = 0
    for row, label in zip(logits, labels):
        best = 0
        for j in range(1, len(row)):
            if row[j] > row[best]:
                best = j
        hits += best == label
    return hits / len(labels)


def fmax_oracle(scores, labels):
    best = 0.0
    for t in range(1, 101):
        tau = t / 100.0
        precisions = []
        recalls = []
        for srow, lrow in zip(scores, labels):
            pred = [j for j, s in enumerate(srow) if s >= tau]
            tp = sum(1 for j in pred if lrow[j] == 1)
            if pred:
                precisions.append(tp / len(pred))
            pos = sum(lrow)
            recalls.append(tp / pos if pos > 0 else 0.0)
        if not precisions:
            continue
        p = sum(precisions) / len(precisions)
        r = sum(recalls) / len(recalls)
        if p + r > 0:
            best = max(best, 2 * p * r / (p + r))
    return best


def auc_oracle(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_accuracy_trivials():
    logits = np.array([[0.1, 0.9], [0.8, 0.2]])
    assert mt.compute_accuracy(logits, [1, 0]) == 1.0
    assert mt.compute_accuracy(logits, [0, 1]) == 0.0
    # argmax tie resolves to the lowest index
    assert mt.compute_accuracy(np.array([[0.5, 0.5]]), [0]) == 1.0
    assert mt.compute_accuracy(np.array([[0.5, 0.5]]), [1]) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_accuracy_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(20, 5))
    labels = rng.integers(0, 5, size=20)
    npt.assert_allclose(mt.compute_accuracy(logits, labels),
                        accuracy_oracle(logits, labels), atol=1e-15)


def test_fmax_perfect_scores():
    labels = np.array([[1., 0, 1], [0, 1, 0]])
    scores = labels.copy()
    assert mt.compute_fmax(scores, labels) == pytest.approx(1.0)


def test_fmax_half_precision_recall():
    # One protein, two positives: every usable threshold predicts exactly one
    # true and one false positive (the 0.005 scores sit below the grid), so
    # precision = recall = 0.5 and F1 = 0.5 at the best threshold.
    labels = np.array([[1., 1, 0, 0]])
    scores = np.array([[0.9, 0.005, 0.9, 0.005]])
    value = mt.compute_fmax(scores, labels)
    assert value == pytest.approx(fmax_oracle(scores, labels))
    assert value == pytest.approx(0.5)


def test_fmax_all_zero_scores():
    labels = np.array([[1., 0], [0, 1]])
    scores = np.zeros((2, 2))
    assert mt.compute_fmax(scores, labels) == 0.0


def test_fmax_no_positives_raises():
    with pytest.raises(mt.NoPositives):
        mt.compute_fmax(np.ones((2, 3)), np.zeros((2, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_fmax_matches_threshold_oracle(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random((6, 8)).round(2)
    labels = (rng.random((6, 8)) < 0.3).astype(float)
    if labels.sum() == 0:
        labels[0, 0] = 1.0
    npt.assert_allclose(mt.compute_fmax(scores, labels),
                        fmax_oracle(scores, labels), atol=1e-12)


def test_auc_trivials():
    assert mt.compute_roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert mt.compute_roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    with pytest.raises(mt.OneClassOnly):
        mt.compute_roc_auc([0.5, 0.6], [1, 1])


@pytest.mark.parametrize("seed", range(5))
def test_auc_matches_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random(30).round(1)  # rounded to force plenty of ties
    labels = rng.integers(0, 2, size=30)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    npt.assert_allclose(mt.compute_roc_auc(scores, labels),
                        auc_oracle(scores, labels), atol=1e-12)

"""Evaluation metrics: accuracy, protein-centric F-max, and ROC-AUC."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeMismatch

FMAX_THRESHOLDS = np.arange(1, 101) / 100.0


class OneClassOnly(ValueError):
    """ROC-AUC needs at least one positive and one negative."""


class NoPositives(ValueError):
    """F-max is undefined when no protein has a positive label."""


def compute_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax (lowest index on ties) hits the label."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"accuracy: logits {logits.shape} vs labels {labels.shape}")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def compute_fmax(scores: np.ndarray, labels: np.ndarray) -> float:
    """Protein-centric maximum F1 over the 100-point threshold grid.

    At each threshold, a protein predicts the labels whose score is >= the
    threshold.  Precision averages over proteins with at least one prediction;
    recall averages over all proteins (no predictions contributes 0; a protein
    without positives also contributes 0).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeMismatch(f"fmax: scores {scores.shape} vs labels {labels.shape}")
    positives = labels.sum(axis=1)
    if positives.sum() == 0:
        raise NoPositives("every protein has zero positive labels")
    best = 0.0
    for tau in FMAX_THRESHOLDS:
        predicted = scores >= tau
        n_pred = predicted.sum(axis=1)
        tp = (predicted * labels).sum(axis=1)
        has_pred = n_pred > 0
        if not has_pred.any():
            continue
        precision = float((tp[has_pred] / n_pred[has_pred]).mean())
        with np.errstate(invalid="ignore", divide="ignore"):
            recall_rows = np.where(positives > 0, tp / np.maximum(positives, 1), 0.0)
        recall = float(recall_rows.mean())
        if precision + recall > 0:
            best = max(best, 2 * precision * recall / (precision + recall))
    return best


def compute_roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal), via ranks."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape != labels.shape:
        raise ShapeMismatch(f"roc_auc: scores {scores.shape} vs labels {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"got {n_pos} positives and {n_neg} negatives")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[order[j]] == scores[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # average 1-based rank of the tie run
        i = j
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))

"""Classification metrics with fully pinned-down edge cases."""

from __future__ import annotations

import numpy as np

from .errors import UndefinedStatisticError, ValidationError


def _check_labels(truth: np.ndarray, pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.ndim != 1 or truth.shape != pred.shape:
        raise ValidationError("truth and pred must be equal-length 1-D arrays")
    if truth.size == 0:
        raise ValidationError("metrics need at least one sample")
    if truth.min() < 0 or pred.min() < 0:
        raise ValidationError("labels must be nonnegative")
    return truth, pred


def micro_f1(truth, pred) -> float:
    """F1 over pooled per-class counts. For single-label predictions this
    pools to plain accuracy (every miss is one FP and one FN)."""
    truth, pred = _check_labels(truth, pred)
    c = int(max(truth.max(), pred.max())) + 1
    tp = fp = fn = 0
    for k in range(c):
        t = truth == k
        p = pred == k
        tp += int(np.sum(t & p))
        fp += int(np.sum(~t & p))
        fn += int(np.sum(t & ~p))
    return (2 * tp) / (2 * tp + fp + fn)


def macro_f1(truth, pred, num_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1; a class with no support and no
    predictions contributes 0, so passing a num_classes larger than the
    observed labels dilutes the mean on purpose."""
    truth, pred = _check_labels(truth, pred)
    observed = int(max(truth.max(), pred.max())) + 1
    if num_classes is None:
        c = observed
    else:
        if num_classes < observed:
            raise ValidationError("num_classes smaller than an observed label")
        c = int(num_classes)
    scores = []
    for k in range(c):
        t = truth == k
        p = pred == k
        tp = int(np.sum(t & p))
        fp = int(np.sum(~t & p))
        fn = int(np.sum(t & ~p))
        scores.append((2 * tp) / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0)
    return sum(scores) / c


def auroc(scores, truth) -> float:
    """Binary AUROC in the rank (Mann-Whitney) form:
    (#{pos above neg} + half the ties) / (n_pos * n_neg), computed from
    average ranks so ties are exact."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.ndim != 1 or scores.shape != truth.shape:
        raise ValidationError("scores and truth must be equal-length 1-D arrays")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be finite")
    bad = set(np.unique(truth).tolist()) - {0, 1}
    if bad:
        raise ValidationError(f"auroc is binary only; found labels {sorted(bad)}")
    n_pos = int(np.sum(truth == 1))
    n_neg = int(np.sum(truth == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatisticError("auroc needs both classes present")
    ranks = _average_ranks(scores)
    rank_sum_pos = float(ranks[truth == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; equal values share the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks

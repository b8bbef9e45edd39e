"""Contextual stochastic block model generator for synthetic domain pairs.

Nodes get class labels according to supplied priors, undirected edges are
sampled independently with within/between-class probabilities, and features
are Gaussian around per-class means. Two calls with the same arguments and
seed produce bit-identical graphs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .graph import SparseGraph
from .sparse import from_coo


def class_counts(total: int, priors: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of priors * total to integer class sizes."""
    priors = np.asarray(priors, dtype=np.float64)
    raw = priors * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # Hand the leftover slots to the largest fractional parts; ties go to
        # the lower class index.
        remainders = raw - base
        order = np.lexsort((np.arange(len(priors)), -remainders))
        base[order[:short]] += 1
    return base


def gen_csbm(n_per_class: int, num_classes: int, p_intra: float, p_inter: float,
             class_means: np.ndarray, sigma: float,
             class_priors: np.ndarray | None = None, seed: int = 0) -> SparseGraph:
    """Sample one CSBM graph with n_per_class * num_classes nodes.

    class_means has one row per class; class_priors defaults to uniform.
    Labels are assigned in contiguous blocks by class, all observed.
    """
    if n_per_class < 1 or num_classes < 1:
        raise ConfigError("n_per_class and num_classes must be positive")
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"{name} must lie in [0, 1]")
    if sigma <= 0.0:
        raise ConfigError("sigma must be positive")
    class_means = np.asarray(class_means, dtype=np.float64)
    if class_means.ndim != 2 or class_means.shape[0] != num_classes:
        raise ConfigError(f"class_means must have {num_classes} rows")
    if class_priors is None:
        class_priors = np.full(num_classes, 1.0 / num_classes)
    class_priors = np.asarray(class_priors, dtype=np.float64)
    if class_priors.shape != (num_classes,) or np.any(class_priors < 0):
        raise ConfigError("class_priors must be nonnegative with one entry per class")
    if abs(class_priors.sum() - 1.0) > 1e-9:
        raise ConfigError("class_priors must sum to 1")

    n = n_per_class * num_classes
    counts = class_counts(n, class_priors)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), counts)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    # Edge sampling: one uniform draw per unordered pair, thresholded by the
    # pair's class relation. Dense in n^2 but fine at the scales used here.
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_intra, p_inter)
    u = rng.random((n, n))
    upper = np.triu(u < prob, k=1)
    src, dst = np.nonzero(upper)
    adj = from_coo(n, n, np.concatenate([src, dst]), np.concatenate([dst, src]))

    feats = class_means[labels] + sigma * rng.standard_normal((n, class_means.shape[1]))
    return SparseGraph(adj, feats, labels, num_classes, directed=False)

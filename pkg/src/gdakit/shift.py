"""Distribution-shift diagnostics between two labeled graphs.

Three scalar estimators plus a bundled report:

  feature_shift    kernel MMD on raw node features (median-heuristic
                   bandwidth, scale list {0.5, 1, 2});
  label_shift      KL divergence between smoothed empirical label
                   frequencies, source relative to target;
  structure_shift  class-conditional neighborhood divergence: per class,
                   the mean distribution of neighbor labels, compared by
                   total variation and averaged over classes both domains
                   realize.

All three are invariant to node reordering; the label and structure
estimators are exactly so (order-independent accumulation), the feature
estimator up to float round-off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .align import median_bandwidth, mmd_value
from .errors import UndefinedStatisticError, ValidationError
from .graph import DomainPair, SparseGraph, degree_stats, edge_homophily

MMD_SCALES = (0.5, 1.0, 2.0)


def feature_shift(xs: np.ndarray, xt: np.ndarray) -> float:
    """Multi-kernel MMD between the raw feature samples (no tape)."""
    if xs.shape[0] == 0 or xt.shape[0] == 0:
        raise ValidationError("feature_shift needs nonempty feature sets")
    base = median_bandwidth(xs, xt)
    return mmd_value(xs, xt, [s * base for s in MMD_SCALES])


def label_shift(labels_s: np.ndarray, labels_t: np.ndarray, num_classes: int,
                epsilon: float = 1e-8) -> float:
    """KL(P_source || P_target) on smoothed label frequencies,
    (count + eps) / (n + C * eps)."""
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    p = _smoothed_freqs(labels_s, num_classes, epsilon)
    q = _smoothed_freqs(labels_t, num_classes, epsilon)
    return float(sum(pk * math.log(pk / qk) for pk, qk in zip(p, q)))


def _smoothed_freqs(labels: np.ndarray, num_classes: int, epsilon: float) -> list[float]:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValidationError("label_shift needs nonempty label sets")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValidationError("labels must lie in [0, num_classes)")
    counts = np.bincount(labels, minlength=num_classes)
    denom = labels.size + num_classes * epsilon
    return [(int(k) + epsilon) / denom for k in counts]


def _class_neighbor_rows(g: SparseGraph) -> dict[int, list[float]]:
    """Per class: mean neighbor-label distribution over the class's nodes,
    skipping degree-0 nodes and self-loops. Column sums use math.fsum so the
    result is independent of node order."""
    if np.any(g.labels < 0):
        raise ValidationError("structure_shift needs fully labeled graphs")
    c = g.num_classes
    per_node: dict[int, list[list[float]]] = {k: [] for k in range(c)}
    for i in range(g.n):
        nbrs = g.adj.row_slice(i)
        nbrs = nbrs[nbrs != i]
        if nbrs.size == 0:
            continue
        counts = np.bincount(g.labels[nbrs], minlength=c)
        per_node[int(g.labels[i])].append((counts / nbrs.size).tolist())
    rows: dict[int, list[float]] = {}
    for k, dists in per_node.items():
        if not dists:
            continue
        m = len(dists)
        rows[k] = [math.fsum(d[j] for d in dists) / m for j in range(c)]
    return rows


def structure_shift(gs: SparseGraph, gt: SparseGraph) -> float:
    """Mean total-variation distance between class-conditional neighborhood
    label distributions, over classes realized in both graphs."""
    if gs.num_classes != gt.num_classes:
        raise ValidationError("graphs must share the label space")
    rows_s = _class_neighbor_rows(gs)
    rows_t = _class_neighbor_rows(gt)
    common = sorted(set(rows_s) & set(rows_t))
    if not common:
        raise UndefinedStatisticError("no class appears with neighbors in both graphs")
    tvs = []
    for k in common:
        tvs.append(0.5 * sum(abs(a - b) for a, b in zip(rows_s[k], rows_t[k])))
    return sum(tvs) / len(common)


@dataclass
class ShiftReport:
    feature_shift: float
    label_shift: float
    structure_shift: float
    homophily_source: float
    homophily_target: float
    avg_degree_source: float
    avg_degree_target: float

    def to_json(self) -> str:
        """Fixed 6-decimal serialization; parse -> serialize round-trips
        byte-identically."""
        return (
            "{\n"
            f'  "feature_shift": {self.feature_shift:.6f},\n'
            f'  "structure_shift": {self.structure_shift:.6f},\n'
            f'  "label_shift": {self.label_shift:.6f},\n'
            '  "homophily": {\n'
            f'    "source": {self.homophily_source:.6f},\n'
            f'    "target": {self.homophily_target:.6f}\n'
            "  },\n"
            '  "avg_degree": {\n'
            f'    "source": {self.avg_degree_source:.6f},\n'
            f'    "target": {self.avg_degree_target:.6f}\n'
            "  }\n"
            "}\n"
        )

    @staticmethod
    def from_json(text: str) -> "ShiftReport":
        obj = json.loads(text)
        top = ["feature_shift", "structure_shift", "label_shift",
               "homophily", "avg_degree"]
        if not isinstance(obj, dict) or sorted(obj.keys()) != sorted(top):
            raise ValidationError("shift report JSON has unexpected keys")
        for nested in ("homophily", "avg_degree"):
            inner = obj[nested]
            if not isinstance(inner, dict) or sorted(inner.keys()) != ["source", "target"]:
                raise ValidationError(f"shift report {nested} must hold source and target")
        return ShiftReport(
            feature_shift=float(obj["feature_shift"]),
            label_shift=float(obj["label_shift"]),
            structure_shift=float(obj["structure_shift"]),
            homophily_source=float(obj["homophily"]["source"]),
            homophily_target=float(obj["homophily"]["target"]),
            avg_degree_source=float(obj["avg_degree"]["source"]),
            avg_degree_target=float(obj["avg_degree"]["target"]),
        )


def shift_report(pair: DomainPair) -> ShiftReport:
    """Full diagnostic bundle for a domain pair. Reads the held-out target
    labels; this is one of the two sanctioned access paths."""
    target_labeled = pair.target.with_labels(pair.target_truth.reveal())
    gs = pair.source
    return ShiftReport(
        feature_shift=feature_shift(gs.features, target_labeled.features),
        label_shift=label_shift(gs.labels, target_labeled.labels, gs.num_classes),
        structure_shift=structure_shift(gs, target_labeled),
        homophily_source=edge_homophily(gs),
        homophily_target=edge_homophily(target_labeled),
        avg_degree_source=degree_stats(gs)[0],
        avg_degree_target=degree_stats(target_labeled)[0],
    )

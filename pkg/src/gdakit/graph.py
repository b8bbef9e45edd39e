"""Graph containers, the on-disk dataset format, and structural operators.

A dataset directory holds four files:

    meta.json       {"num_nodes": n, "num_features": d, "num_classes": c,
                     "directed": bool}
    edges.tsv       one "src<TAB>dst" pair per line
    features.csv    one row of comma-separated floats per node
    labels.csv      one integer per node, -1 meaning unlabeled

Undirected graphs are stored with each edge listed once and symmetrized on
load. Writers emit LF line endings and shortest round-trip float formatting,
so save(load(dir)) is byte-identical for directories this package wrote.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedStatisticError, ValidationError
from .sparse import CsrMatrix, from_coo


class SparseGraph:
    """An attributed graph in CSR form.

    labels uses -1 for unlabeled nodes; all other labels lie in
    [0, num_classes). For undirected graphs the stored adjacency is
    symmetric (every edge appears as two directed slots).
    """

    __slots__ = ("n", "adj", "features", "labels", "num_classes", "directed")

    def __init__(self, adj: CsrMatrix, features: np.ndarray, labels: np.ndarray,
                 num_classes: int, directed: bool):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if adj.n_rows != adj.n_cols:
            raise ValidationError("adjacency must be square")
        n = adj.n_rows
        if features.ndim != 2 or features.shape[0] != n:
            raise ValidationError(f"features must be ({n}, d)")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features must be finite")
        if labels.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},)")
        if num_classes < 1:
            raise ValidationError("num_classes must be positive")
        if labels.size and (labels.min() < -1 or labels.max() >= num_classes):
            raise ValidationError("labels must lie in [-1, num_classes)")
        if not directed:
            _check_symmetric(adj)
        self.n = n
        self.adj = adj
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)
        self.directed = bool(directed)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_slots(self) -> int:
        """Stored directed slots (an undirected edge counts twice)."""
        return self.adj.nnz

    def edge_pairs(self) -> np.ndarray:
        """(nnz, 2) array of stored (src, dst) slots."""
        return np.stack([self.adj.row_ids(), self.adj.indices], axis=1)

    def with_labels(self, labels: np.ndarray) -> "SparseGraph":
        return SparseGraph(self.adj, self.features, labels, self.num_classes, self.directed)

    def permuted(self, perm: np.ndarray) -> "SparseGraph":
        """Relabel nodes so new node perm[i] is old node i."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise ValidationError("perm must be a permutation of node ids")
        pairs = self.edge_pairs()
        adj = from_coo(self.n, self.n, perm[pairs[:, 0]], perm[pairs[:, 1]])
        inv = np.empty(self.n, dtype=np.int64)
        inv[perm] = np.arange(self.n)
        return SparseGraph(adj, self.features[inv], self.labels[inv],
                           self.num_classes, self.directed)


def _check_symmetric(adj: CsrMatrix):
    pairs = {(int(i), int(j)) for i, j in zip(adj.row_ids(), adj.indices)}
    for i, j in pairs:
        if (j, i) not in pairs:
            raise ValidationError(f"undirected graph is missing reverse slot for ({i}, {j})")


class HeldOutLabels:
    """Target labels sealed away from the training path.

    The only way to read them is reveal(), which counts accesses so tests
    can audit that optimization never touched them.
    """

    __slots__ = ("_labels", "access_count")

    def __init__(self, labels: np.ndarray):
        self._labels = np.ascontiguousarray(labels, dtype=np.int64)
        self._labels.setflags(write=False)
        self.access_count = 0

    def reveal(self) -> np.ndarray:
        self.access_count += 1
        return self._labels


@dataclass
class DomainPair:
    """A source graph with observed labels and a target graph whose labels
    are held out for evaluation and shift measurement only."""

    source: SparseGraph
    target: SparseGraph
    target_truth: HeldOutLabels

    def __post_init__(self):
        if self.source.num_features != self.target.num_features:
            raise ValidationError("domains must share the feature dimension")
        if self.source.num_classes != self.target.num_classes:
            raise ValidationError("domains must share the label space")
        if np.any(self.source.labels < 0):
            raise ValidationError("source labels must all be observed")

    @staticmethod
    def make(source: SparseGraph, target: SparseGraph) -> "DomainPair":
        """Seal the target's labels; the pair's target graph carries -1s."""
        truth = HeldOutLabels(target.labels)
        stripped = target.with_labels(np.full(target.n, -1, dtype=np.int64))
        return DomainPair(source, stripped, truth)


# ---------------------------------------------------------------------------
# normalizations and simple statistics


def with_self_loops(adj: CsrMatrix) -> CsrMatrix:
    """Adjacency with exactly one (i, i) slot per row; idempotent."""
    rows = adj.row_ids()
    cols = adj.indices
    has_loop = np.zeros(adj.n_rows, dtype=bool)
    has_loop[rows[rows == cols]] = True
    missing = np.flatnonzero(~has_loop)
    if missing.size == 0:
        return adj
    all_rows = np.concatenate([rows, missing])
    all_cols = np.concatenate([cols, missing])
    return from_coo(adj.n_rows, adj.n_cols, all_rows, all_cols)


def normalize_gcn(g: SparseGraph) -> CsrMatrix:
    """Symmetric normalization with self-loops:
    D^{-1/2} (A + I) D^{-1/2}, degrees taken after adding the loops."""
    aug = with_self_loops(g.adj)
    deg = np.diff(aug.indptr).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)  # deg >= 1 because of the self-loop
    rows = aug.row_ids()
    weights = inv_sqrt[rows] * inv_sqrt[aug.indices]
    return aug.with_data(weights)


def normalize_row(g: SparseGraph, include_self: bool = False) -> CsrMatrix:
    """Row-normalized adjacency D^{-1} A; rows with no slots stay zero.

    With include_self a self-loop is ensured first and counted in the degree.
    """
    adj = with_self_loops(g.adj) if include_self else g.adj
    deg = np.diff(adj.indptr).astype(np.float64)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    weights = inv[adj.row_ids()]
    return adj.with_data(weights)


def edge_homophily(g: SparseGraph) -> float:
    """Fraction of stored slots joining same-labeled endpoints.

    Self-loops and slots touching an unlabeled endpoint are excluded; with
    nothing left to count the statistic is undefined.
    """
    rows = g.adj.row_ids()
    cols = g.adj.indices
    keep = rows != cols
    keep &= (g.labels[rows] >= 0) & (g.labels[cols] >= 0)
    total = int(keep.sum())
    if total == 0:
        raise UndefinedStatisticError("no labeled non-loop edges to measure homophily on")
    same = int((g.labels[rows[keep]] == g.labels[cols[keep]]).sum())
    return same / total


def degree_stats(g: SparseGraph) -> tuple[float, np.ndarray]:
    """Average degree (stored slots per node) and the degree histogram."""
    if g.n == 0:
        raise ValidationError("degree_stats needs at least one node")
    deg = np.diff(g.adj.indptr)
    hist = np.bincount(deg)
    return float(g.num_slots / g.n), hist


# ---------------------------------------------------------------------------
# dataset directory I/O


_META_KEYS = ("num_nodes", "num_features", "num_classes", "directed")


def load_graph(path: str) -> SparseGraph:
    """Read a dataset directory, validating as it goes.

    Errors carry the file and 1-based line number of the first offending
    record.
    """
    meta_path = os.path.join(path, "meta.json")
    with open(meta_path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"meta.json: invalid JSON ({e})") from e
    if not isinstance(meta, dict) or sorted(meta.keys()) != sorted(_META_KEYS):
        raise ValidationError(f"meta.json: keys must be exactly {list(_META_KEYS)}")
    n, d, c = meta["num_nodes"], meta["num_features"], meta["num_classes"]
    directed = meta["directed"]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (n, d, c)):
        raise ValidationError("meta.json: counts must be integers")
    if not isinstance(directed, bool):
        raise ValidationError("meta.json: directed must be a boolean")
    if n < 0 or d < 1 or c < 1:
        raise ValidationError("meta.json: counts out of range")

    srcs, dsts = [], []
    with open(os.path.join(path, "edges.tsv"), "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"edges.tsv line {lineno}: expected 'src<TAB>dst'")
            try:
                s, t = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValidationError(f"edges.tsv line {lineno}: non-integer endpoint") from None
            if not (0 <= s < n and 0 <= t < n):
                raise ValidationError(f"edges.tsv line {lineno}: node index out of range")
            srcs.append(s)
            dsts.append(t)

    feats = np.zeros((n, d))
    with open(os.path.join(path, "features.csv"), "r", encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            if lineno > n:
                raise ValidationError(f"features.csv line {lineno}: more rows than num_nodes")
            parts = line.rstrip("\n").split(",")
            if len(parts) != d:
                raise ValidationError(f"features.csv line {lineno}: expected {d} values")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise ValidationError(f"features.csv line {lineno}: non-numeric value") from None
            if not all(np.isfinite(row)):
                raise ValidationError(f"features.csv line {lineno}: non-finite value")
            feats[lineno - 1] = row
        if lineno != n:
            raise ValidationError(f"features.csv: expected {n} rows, found {lineno}")

    labels = np.full(n, -1, dtype=np.int64)
    with open(os.path.join(path, "labels.csv"), "r", encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            if lineno > n:
                raise ValidationError(f"labels.csv line {lineno}: more rows than num_nodes")
            try:
                y = int(line.strip())
            except ValueError:
                raise ValidationError(f"labels.csv line {lineno}: non-integer label") from None
            if y < -1 or y >= c:
                raise ValidationError(f"labels.csv line {lineno}: label out of range")
            labels[lineno - 1] = y
        if lineno != n:
            raise ValidationError(f"labels.csv: expected {n} rows, found {lineno}")

    srcs = np.asarray(srcs, dtype=np.int64)
    dsts = np.asarray(dsts, dtype=np.int64)
    if not directed:
        srcs, dsts = np.concatenate([srcs, dsts]), np.concatenate([dsts, srcs])
    adj = from_coo(n, n, srcs, dsts)  # dedups repeated slots
    return SparseGraph(adj, feats, labels, c, directed)


def _format_float(x: float) -> str:
    return repr(float(x))


def _atomic_write(path: str, data: bytes):
    """Write via a temp file in the destination directory plus rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str):
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path: str, data: bytes):
    _atomic_write(path, data)


def save_graph(g: SparseGraph, path: str):
    """Write the canonical four-file layout for g into a directory.

    Undirected graphs emit each edge once with src <= dst; edge lists are
    sorted. All files end with a newline and use LF endings.
    """
    os.makedirs(path, exist_ok=True)
    meta = {
        "num_nodes": g.n,
        "num_features": g.num_features,
        "num_classes": g.num_classes,
        "directed": g.directed,
    }
    atomic_write_text(os.path.join(path, "meta.json"),
                      json.dumps(meta, indent=2, sort_keys=True) + "\n")

    pairs = g.edge_pairs()
    if not g.directed:
        keep = pairs[:, 0] <= pairs[:, 1]
        pairs = pairs[keep]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    lines = [f"{int(s)}\t{int(t)}" for s, t in pairs[order]]
    atomic_write_text(os.path.join(path, "edges.tsv"),
                      "\n".join(lines) + ("\n" if lines else ""))

    rows = [",".join(_format_float(v) for v in row) for row in g.features]
    atomic_write_text(os.path.join(path, "features.csv"),
                      "\n".join(rows) + ("\n" if rows else ""))

    atomic_write_text(os.path.join(path, "labels.csv"),
                      "\n".join(str(int(y)) for y in g.labels) + ("\n" if g.n else ""))

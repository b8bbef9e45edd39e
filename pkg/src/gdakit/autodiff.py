"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Everything is a matrix: column vectors are (n, 1), row vectors (1, c),
scalars (1, 1). A Tape records one node per operation in execution order;
backward walks the node list once in reverse, so the topological invariant
(parents precede children) holds by construction.

Sparse matrices (CsrMatrix) enter only as constant left operands of the
sparse products; gradients always flow through the dense side.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, ValidationError
from .sparse import CsrMatrix

Array = np.ndarray


def _as_matrix(value) -> Array:
    a = np.ascontiguousarray(value, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {a.shape}")
    return a


class Tensor:
    """A 2-D float64 value, optionally tracked on a tape node."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data: Array, tape: "Tape", node: int):
        self.data = data
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node={self.node})"


class _Node:
    __slots__ = ("op", "parents", "vjps", "shape")

    def __init__(self, op, parents, vjps, shape):
        self.op = op
        self.parents = parents
        self.vjps = vjps
        self.shape = shape


class Gradients:
    """Result of a backward pass: one gradient array per visited node.

    Leaves that no path connects to the root simply never get visited and
    read back as zeros of the leaf's shape.
    """

    def __init__(self, per_node: list[Array | None], tape: "Tape"):
        self._per_node = per_node
        self._tape = tape

    def of(self, t: Tensor) -> Array:
        if t.tape is not self._tape:
            raise ValidationError("tensor does not belong to this tape")
        g = self._per_node[t.node]
        if g is None:
            return np.zeros(t.shape)
        return g


class Tape:
    """Ordered record of operations; supports one backward sweep per root."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, op: str, value: Array, parents: tuple[Tensor, ...],
                vjps: tuple[Callable[[Array], Array], ...]) -> Tensor:
        for p in parents:
            if p.tape is not self:
                raise ValidationError("operands must live on the same tape")
        node = _Node(op, tuple(p.node for p in parents), vjps, value.shape)
        self._nodes.append(node)
        return Tensor(value, self, len(self._nodes) - 1)

    def leaf(self, value) -> Tensor:
        """A differentiable source node (a parameter)."""
        return self._record("leaf", _as_matrix(value).copy(), (), ())

    def constant(self, value) -> Tensor:
        """A non-differentiable source node (data)."""
        return self._record("const", _as_matrix(value).copy(), (), ())

    def backward(self, root: Tensor) -> Gradients:
        """Accumulate d(root)/d(node) for every node reachable from root.

        The root must be scalar shaped and recorded on this tape. Seeding
        follows the usual convention: the root's own gradient is all ones.
        """
        if root.tape is not self:
            raise ValidationError("root does not belong to this tape")
        if root.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
        accum: list[Array | None] = [None] * len(self._nodes)
        accum[root.node] = np.ones(root.shape)
        for idx in range(root.node, -1, -1):
            g = accum[idx]
            if g is None:
                continue
            node = self._nodes[idx]
            for parent, vjp in zip(node.parents, node.vjps):
                contrib = vjp(g)
                if accum[parent] is None:
                    accum[parent] = contrib
                else:
                    accum[parent] = accum[parent] + contrib
        return Gradients(accum, self)


# ---------------------------------------------------------------------------
# dense products and structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dims differ ({a.shape} x {b.shape})")
    out = a.data @ b.data
    ad, bd = a.data, b.data
    return a.tape._record(
        "matmul", out, (a, b),
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
    )


def transpose(x: Tensor) -> Tensor:
    return x.tape._record(
        "transpose", np.ascontiguousarray(x.data.T), (x,),
        (lambda g: np.ascontiguousarray(g.T),),
    )


def vstack(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.cols:
        raise ShapeError("vstack: column counts differ")
    na = a.rows
    out = np.concatenate([a.data, b.data], axis=0)
    return a.tape._record(
        "vstack", out, (a, b),
        (lambda g: g[:na], lambda g: g[na:]),
    )


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= x.rows):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {x.rows} rows")
    n, c = x.shape

    def back(g):
        z = np.zeros((n, c))
        z[start:stop] = g
        return z

    return x.tape._record("slice_rows", x.data[start:stop].copy(), (x,), (back,))


# ---------------------------------------------------------------------------
# binary elementwise and row/column broadcasts


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ ({a.shape} vs {b.shape})")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return a.tape._record("add", a.data + b.data, (a, b), (lambda g: g, lambda g: g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return a.tape._record("sub", a.data - b.data, (a, b), (lambda g: g, lambda g: -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return a.tape._record("mul", ad * bd, (a, b), (lambda g: g * bd, lambda g: g * ad))


def add_rowvec(x: Tensor, r: Tensor) -> Tensor:
    """x + r with r a (1, c) row broadcast down every row of x."""
    if r.shape != (1, x.cols):
        raise ShapeError(f"add_rowvec: expected (1, {x.cols}), got {r.shape}")
    return x.tape._record(
        "add_rowvec", x.data + r.data, (x, r),
        (lambda g: g, lambda g: g.sum(axis=0, keepdims=True)),
    )


def add_colvec(x: Tensor, v: Tensor) -> Tensor:
    """x + v with v an (n, 1) column broadcast across every column of x."""
    if v.shape != (x.rows, 1):
        raise ShapeError(f"add_colvec: expected ({x.rows}, 1), got {v.shape}")
    return x.tape._record(
        "add_colvec", x.data + v.data, (x, v),
        (lambda g: g, lambda g: g.sum(axis=1, keepdims=True)),
    )


def mul_colvec(x: Tensor, v: Tensor) -> Tensor:
    """Scale row i of x by v[i]; v has shape (n, 1)."""
    if v.shape != (x.rows, 1):
        raise ShapeError(f"mul_colvec: expected ({x.rows}, 1), got {v.shape}")
    xd, vd = x.data, v.data
    return x.tape._record(
        "mul_colvec", xd * vd, (x, v),
        (lambda g: g * vd, lambda g: (g * xd).sum(axis=1, keepdims=True)),
    )


def scale_by(x: Tensor, s: Tensor) -> Tensor:
    """Multiply x by a trainable scalar s of shape (1, 1)."""
    if s.shape != (1, 1):
        raise ShapeError("scale_by: scalar operand must be 1x1")
    xd = x.data
    sv = float(s.data[0, 0])
    return x.tape._record(
        "scale_by", xd * sv, (x, s),
        (lambda g: g * sv, lambda g: np.array([[float((g * xd).sum())]])),
    )


# ---------------------------------------------------------------------------
# unary elementwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    return x.tape._record("relu", np.where(mask, x.data, 0.0), (x,), (lambda g: g * mask,))


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    mask = x.data > 0.0
    out = np.where(mask, x.data, slope * x.data)
    return x.tape._record(
        "leaky_relu", out, (x,),
        (lambda g: g * np.where(mask, 1.0, slope),),
    )


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_values(x.data)
    return x.tape._record("sigmoid", out, (x,), (lambda g: g * out * (1.0 - out),))


def _sigmoid_values(x: Array) -> Array:
    # Split by sign so neither branch exponentiates a large positive value.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return x.tape._record("exp", out, (x,), (lambda g: g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise DomainError("log: input must be strictly positive")
    xd = x.data
    return x.tape._record("log", np.log(xd), (x,), (lambda g: g / xd,))


def neg(x: Tensor) -> Tensor:
    return x.tape._record("neg", -x.data, (x,), (lambda g: -g,))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return x.tape._record("scale", c * x.data, (x,), (lambda g: c * g,))


def powc(x: Tensor, p: float) -> Tensor:
    """x ** p for a constant exponent; requires x > 0 unless p is a
    nonnegative integer."""
    p = float(p)
    if not (p >= 0 and p == int(p)) and np.any(x.data <= 0.0):
        raise DomainError("powc: input must be strictly positive for this exponent")
    xd = x.data
    out = xd ** p
    return x.tape._record("powc", out, (x,), (lambda g: g * p * xd ** (p - 1.0),))


def xlogx(x: Tensor) -> Tensor:
    """Elementwise x * ln(x) with the continuous extension 0 at x = 0.

    The derivative ln(x) + 1 diverges as x -> 0+; at exactly zero the
    backward pass emits 0 so gradients stay finite.
    """
    if np.any(x.data < 0.0):
        raise DomainError("xlogx: input must be nonnegative")
    xd = x.data
    pos = xd > 0.0
    safe = np.where(pos, xd, 1.0)
    out = np.where(pos, xd * np.log(safe), 0.0)
    grad = np.where(pos, np.log(safe) + 1.0, 0.0)
    return x.tape._record("xlogx", out, (x,), (lambda g: g * grad,))


# ---------------------------------------------------------------------------
# softmax family


def row_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return out * (g - dot)

    return x.tape._record("row_softmax", out, (x,), (back,))


def row_log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def back(g):
        return g - p * g.sum(axis=1, keepdims=True)

    return x.tape._record("row_log_softmax", out, (x,), (back,))


def masked_row_logsumexp(x: Tensor, mask: Array) -> Tensor:
    """Per-row log-sum-exp over the entries where mask is True.

    The mask is a constant boolean array of x's shape; every row must keep
    at least one entry.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError("masked_row_logsumexp: mask shape mismatch")
    if np.any(~mask.any(axis=1)):
        raise ValidationError("masked_row_logsumexp: a row has no unmasked entry")
    neg_inf = np.where(mask, x.data, -np.inf)
    m = neg_inf.max(axis=1, keepdims=True)
    ex = np.exp(neg_inf - m)  # masked entries become exp(-inf) = 0
    s = ex.sum(axis=1, keepdims=True)
    out = m + np.log(s)
    soft = ex / s

    def back(g):
        return soft * g

    return x.tape._record("masked_row_lse", out, (x,), (back,))


# ---------------------------------------------------------------------------
# reductions


def _reduce(x: Tensor, axis: str, mean: bool) -> Tensor:
    n, c = x.shape
    if axis == "all":
        out = np.array([[x.data.sum()]])
        denom = n * c

        def back(g):
            return np.full((n, c), g[0, 0] / denom if mean else g[0, 0])
    elif axis == "rows":
        out = x.data.sum(axis=1, keepdims=True)
        denom = c

        def back(g):
            tile = np.repeat(g, c, axis=1)
            return tile / denom if mean else tile
    elif axis == "cols":
        out = x.data.sum(axis=0, keepdims=True)
        denom = n

        def back(g):
            tile = np.repeat(g, n, axis=0)
            return tile / denom if mean else tile
    else:
        raise ConfigError(f"reduce: unknown axis {axis!r}")
    if mean:
        if denom == 0:
            raise ShapeError("mean reduction over an empty axis")
        out = out / denom
    name = ("mean" if mean else "sum") + "_" + axis
    return x.tape._record(name, out, (x,), (back,))


def reduce_sum(x: Tensor, axis: str = "all") -> Tensor:
    return _reduce(x, axis, mean=False)


def reduce_mean(x: Tensor, axis: str = "all") -> Tensor:
    return _reduce(x, axis, mean=True)


# ---------------------------------------------------------------------------
# stochastic and adversarial plumbing


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero entries with probability p and scale survivors
    by 1/(1-p) so the expectation is unchanged. Identity when not training
    or when p == 0 (no random draws consumed in either case)."""
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a random generator")
    keep = rng.random(x.shape) >= p
    factor = 1.0 / (1.0 - p)
    out = np.where(keep, x.data * factor, 0.0)
    return x.tape._record("dropout", out, (x,), (lambda g: np.where(keep, g * factor, 0.0),))


def grad_reverse(x: Tensor, lam: float) -> Tensor:
    """Identity in the forward pass; multiplies the gradient by -lam."""
    lam = float(lam)
    if lam < 0.0:
        raise ConfigError("grad_reverse: lambda must be nonnegative")
    return x.tape._record("grad_reverse", x.data.copy(), (x,), (lambda g: -lam * g,))


# ---------------------------------------------------------------------------
# sparse-dense products and neighborhood ops


def spmm(s: CsrMatrix, d: Tensor) -> Tensor:
    """Sparse (constant) times dense (differentiable). Per output row the
    accumulation runs in ascending column order of the stored slots."""
    if s.n_cols != d.rows:
        raise ShapeError(f"spmm: inner dims differ ({s.n_rows}x{s.n_cols} x {d.shape})")
    out = np.asarray(s.scipy() @ d.data)
    return d.tape._record("spmm", out, (d,), (lambda g: np.asarray(s.scipy_t() @ g),))


def weighted_spmm(s: CsrMatrix, w: Tensor, x: Tensor) -> Tensor:
    """Like spmm but with differentiable slot weights w (one per stored slot,
    shape (nnz, 1)); s supplies the pattern only."""
    if w.shape != (s.nnz, 1):
        raise ShapeError(f"weighted_spmm: weights must be ({s.nnz}, 1), got {w.shape}")
    if s.n_cols != x.rows:
        raise ShapeError("weighted_spmm: inner dims differ")
    mat = s.with_data(w.data[:, 0])
    out = np.asarray(mat.scipy() @ x.data)
    rows = s.row_ids()
    cols = s.indices
    xd = x.data

    def back_w(g):
        return (g[rows] * xd[cols]).sum(axis=1, keepdims=True)

    def back_x(g):
        return np.asarray(mat.scipy_t() @ g)

    return w.tape._record("weighted_spmm", out, (w, x), (back_w, back_x))


def neighbor_max(s: CsrMatrix, x: Tensor) -> Tensor:
    """Rowwise maximum of x over each row's stored neighbors.

    Empty rows produce zeros. The gradient routes to the first neighbor
    (ascending column order) attaining the maximum in each output entry.
    """
    if s.n_cols != x.rows:
        raise ShapeError("neighbor_max: inner dims differ")
    n, c = s.n_rows, x.cols
    xd = x.data
    out = np.zeros((n, c))
    src = np.full((n, c), -1, dtype=np.int64)
    for i in range(n):
        nbrs = s.indices[s.indptr[i]:s.indptr[i + 1]]
        if nbrs.size == 0:
            continue
        block = xd[nbrs]
        k = block.argmax(axis=0)  # first occurrence on ties
        out[i] = block[k, np.arange(c)]
        src[i] = nbrs[k]

    def back(g):
        dz = np.zeros_like(xd)
        sel = src >= 0
        np.add.at(dz, (src[sel], np.nonzero(sel)[1]), g[sel])
        return dz

    return x.tape._record("neighbor_max", out, (x,), (back,))


def edge_scores(s: CsrMatrix, left: Tensor, right: Tensor) -> Tensor:
    """Per stored slot (i, j): left[i] + right[j], as an (nnz, 1) tensor."""
    if left.shape != (s.n_rows, 1) or right.shape != (s.n_cols, 1):
        raise ShapeError("edge_scores: operands must be column vectors matching s")
    rows = s.row_ids()
    cols = s.indices
    out = (left.data[rows, 0] + right.data[cols, 0]).reshape(-1, 1)

    def back_left(g):
        return np.bincount(rows, weights=g[:, 0], minlength=s.n_rows).reshape(-1, 1)

    def back_right(g):
        return np.bincount(cols, weights=g[:, 0], minlength=s.n_cols).reshape(-1, 1)

    return left.tape._record("edge_scores", out, (left, right), (back_left, back_right))


def edge_softmax(s: CsrMatrix, e: Tensor) -> Tensor:
    """Softmax of per-slot scores within each row's segment.

    Output weights over every nonempty row sum to one.
    """
    if e.shape != (s.nnz, 1):
        raise ShapeError(f"edge_softmax: scores must be ({s.nnz}, 1), got {e.shape}")
    if s.nnz == 0:
        return e.tape._record("edge_softmax", np.zeros((0, 1)), (e,), (lambda g: np.zeros((0, 1)),))
    rows = s.row_ids()
    flat = e.data[:, 0]
    # Reduce over segments of the nonempty rows only. Empty rows contribute no
    # slots, so consecutive nonempty starts delimit exactly one row each and
    # every start index is < nnz.
    nonempty = np.flatnonzero(np.diff(s.indptr) > 0)
    starts = s.indptr[nonempty]
    n_rows = s.n_rows
    seg_max = np.empty(n_rows)
    seg_max[nonempty] = np.maximum.reduceat(flat, starts)
    ex = np.exp(flat - seg_max[rows])
    seg_sum = np.empty(n_rows)
    seg_sum[nonempty] = np.add.reduceat(ex, starts)
    alpha = ex / seg_sum[rows]

    def back(g):
        gv = g[:, 0]
        dot = np.empty(n_rows)
        dot[nonempty] = np.add.reduceat(gv * alpha, starts)
        return (alpha * (gv - dot[rows])).reshape(-1, 1)

    return e.tape._record("edge_softmax", alpha.reshape(-1, 1), (e,), (back,))


def gather_labels(x: Tensor, labels: Array) -> Tensor:
    """Pick x[i, labels[i]] for each row, as an (n, 1) tensor."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.rows,):
        raise ShapeError(f"gather_labels: labels must have shape ({x.rows},)")
    if labels.size and (labels.min() < 0 or labels.max() >= x.cols):
        raise ValidationError("gather_labels: label out of range")
    idx = np.arange(x.rows)
    out = x.data[idx, labels].reshape(-1, 1)
    n, c = x.shape

    def back(g):
        z = np.zeros((n, c))
        z[idx, labels] = g[:, 0]
        return z

    return x.tape._record("gather_labels", out, (x,), (back,))


def pair_dots(x: Tensor, rows_i: Array, rows_j: Array) -> Tensor:
    """Dot products x[i] . x[j] for aligned index lists, as a (k, 1) tensor."""
    rows_i = np.asarray(rows_i, dtype=np.int64)
    rows_j = np.asarray(rows_j, dtype=np.int64)
    if rows_i.shape != rows_j.shape or rows_i.ndim != 1:
        raise ShapeError("pair_dots: index lists must be equal-length 1-D arrays")
    for idx in (rows_i, rows_j):
        if idx.size and (idx.min() < 0 or idx.max() >= x.rows):
            raise ValidationError("pair_dots: row index out of range")
    xd = x.data
    out = np.einsum("kh,kh->k", xd[rows_i], xd[rows_j]).reshape(-1, 1)

    def back(g):
        dz = np.zeros_like(xd)
        np.add.at(dz, rows_i, g * xd[rows_j])
        np.add.at(dz, rows_j, g * xd[rows_i])
        return dz

    return x.tape._record("pair_dots", out, (x,), (back,))


def bce_with_logits(d: Tensor, targets: Array) -> Tensor:
    """Elementwise binary cross-entropy on logits with constant 0/1 targets.

    Computed as softplus(d) - y * d, with softplus in its overflow-safe form,
    so extreme logits never produce log(0).
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != d.shape:
        raise ShapeError("bce_with_logits: target shape mismatch")
    dd = d.data
    softplus = np.maximum(dd, 0.0) + np.log1p(np.exp(-np.abs(dd)))
    out = softplus - y * dd
    sig = _sigmoid_values(dd)

    def back(g):
        return g * (sig - y)

    return d.tape._record("bce_with_logits", out, (d,), (back,))


# ---------------------------------------------------------------------------
# optimizer


def sgd_step(params: dict[str, Array], grads: dict[str, Array], *,
             lr: float, weight_decay: float = 0.0, momentum: float = 0.0,
             state: dict[str, Array]) -> None:
    """One SGD step with classical momentum, updating params in place.

    v <- momentum * v + (g + weight_decay * theta)
    theta <- theta - lr * v

    Velocity buffers live in `state`, keyed like params, and are created on
    first use.
    """
    if lr <= 0.0:
        raise ConfigError("sgd_step: lr must be positive")
    if not (0.0 <= momentum < 1.0):
        raise ConfigError("sgd_step: momentum must lie in [0, 1)")
    if weight_decay < 0.0:
        raise ConfigError("sgd_step: weight_decay must be nonnegative")
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"sgd_step: gradient shape mismatch for {name!r}")
        v = state.get(name)
        if v is None:
            v = np.zeros_like(theta)
        v = momentum * v + (g + weight_decay * theta)
        state[name] = v
        theta -= lr * v

"""Graph encoders built from interchangeable neighborhood aggregators.

Every encoder starts with a dense input projection H0 = relu(X W0) (features
see dropout first in training mode), then runs `hops` aggregation rounds over
the graph. With hops = 0 the adjacency is ignored entirely and the model is a
one-layer MLP. A linear head maps the final embedding to class logits.

Aggregators:
    gcn        Z = A_hat H W,  A_hat the symmetric-normalized adjacency with
               self-loops
    mean       Z = D^{-1} A H W  (neighbors only; isolated nodes stay zero)
    max        Z = rowmax_{j in N(i)} H_j, then W
    attention  softmax-normalized scores over neighbors plus self, applied
               to W H
    gin        Z = MLP((1 + eps) h_i + sum_{j in N(i)} h_j), eps trainable

Each round: H_l = relu(Z) (+ H_{l-1} when residual), with dropout applied
between consecutive rounds in training mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, ShapeError, ValidationError
from .graph import SparseGraph, normalize_gcn, normalize_row, with_self_loops

AGGREGATORS = ("gcn", "mean", "max", "attention", "gin")

ATTENTION_SLOPE = 0.2  # leaky-relu slope for attention scores


@dataclass
class EncoderConfig:
    aggregator: str = "gcn"
    hops: int = 1
    hidden: int = 128
    residual: bool = False
    dropout: float = 0.5
    gin_epsilon: float = 0.0
    input_dim: int | None = None
    num_classes: int | None = None

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.hops < 0:
            raise ConfigError("hops must be nonnegative")
        if self.hidden < 1:
            raise ConfigError("hidden must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")

    def bound(self, input_dim: int, num_classes: int) -> "EncoderConfig":
        """A copy with the data-dependent dimensions filled in."""
        cfg = EncoderConfig(**{**self.__dict__})
        cfg.input_dim = input_dim
        cfg.num_classes = num_classes
        return cfg


@dataclass
class EncoderParams:
    """Named parameter arrays plus the config they were built for."""

    config: EncoderConfig
    arrays: dict[str, np.ndarray]

    def leafed(self, tape: Tape) -> dict[str, Tensor]:
        return {name: tape.leaf(a) for name, a in self.arrays.items()}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.arrays.items()})


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
           shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Glorot-uniform weights, zero biases, eps = gin_epsilon.

    Draw order is fixed (input, hops in order, classifier) so results are
    bit-reproducible for a given generator state.
    """
    if cfg.input_dim is None or cfg.num_classes is None:
        raise ConfigError("init_params needs input_dim and num_classes set")
    d, h, c = cfg.input_dim, cfg.hidden, cfg.num_classes
    arrays: dict[str, np.ndarray] = {}
    arrays["input.w"] = glorot(rng, d, h, (d, h))
    for k in range(1, cfg.hops + 1):
        if cfg.aggregator in ("gcn", "mean", "max"):
            arrays[f"hop{k}.w"] = glorot(rng, h, h, (h, h))
        elif cfg.aggregator == "attention":
            arrays[f"hop{k}.w"] = glorot(rng, h, h, (h, h))
            arrays[f"hop{k}.a"] = glorot(rng, 2 * h, 1, (2 * h, 1))
        else:  # gin
            arrays[f"hop{k}.w1"] = glorot(rng, h, h, (h, h))
            arrays[f"hop{k}.b1"] = np.zeros((1, h))
            arrays[f"hop{k}.w2"] = glorot(rng, h, h, (h, h))
            arrays[f"hop{k}.b2"] = np.zeros((1, h))
            arrays[f"hop{k}.eps"] = np.full((1, 1), float(cfg.gin_epsilon))
    arrays["cls.w"] = glorot(rng, h, c, (h, c))
    arrays["cls.b"] = np.zeros((1, c))
    return EncoderParams(cfg, arrays)


def _hop(tape: Tape, g: SparseGraph, cfg: EncoderConfig, pt: dict[str, Tensor],
         h: Tensor, k: int) -> Tensor:
    agg = cfg.aggregator
    if agg == "gcn":
        return ad.matmul(ad.spmm(normalize_gcn(g), h), pt[f"hop{k}.w"])
    if agg == "mean":
        return ad.matmul(ad.spmm(normalize_row(g), h), pt[f"hop{k}.w"])
    if agg == "max":
        return ad.matmul(ad.neighbor_max(g.adj, h), pt[f"hop{k}.w"])
    if agg == "attention":
        support = with_self_loops(g.adj)
        wh = ad.matmul(h, pt[f"hop{k}.w"])
        a = pt[f"hop{k}.a"]
        a_left = ad.slice_rows(a, 0, cfg.hidden)
        a_right = ad.slice_rows(a, cfg.hidden, 2 * cfg.hidden)
        score_left = ad.matmul(wh, a_left)
        score_right = ad.matmul(wh, a_right)
        e = ad.leaky_relu(ad.edge_scores(support, score_left, score_right), ATTENTION_SLOPE)
        alpha = ad.edge_softmax(support, e)
        return ad.weighted_spmm(support, alpha, wh)
    # gin
    eps_term = ad.scale_by(h, pt[f"hop{k}.eps"])
    pooled = ad.add(ad.add(eps_term, h), ad.spmm(g.adj, h))  # (1 + eps) h + sum over N(i)
    inner = ad.relu(ad.add_rowvec(ad.matmul(pooled, pt[f"hop{k}.w1"]), pt[f"hop{k}.b1"]))
    return ad.add_rowvec(ad.matmul(inner, pt[f"hop{k}.w2"]), pt[f"hop{k}.b2"])


def encode(tape: Tape, g: SparseGraph, cfg: EncoderConfig, pt: dict[str, Tensor],
           *, training: bool = False, rng: np.random.Generator | None = None,
           features: np.ndarray | None = None) -> Tensor:
    """Run the encoder on g and return the (n, hidden) embedding tensor.

    pt maps parameter names (as produced by init_params) to leaves on `tape`.
    An explicit `features` array overrides g's features, for augmented views.
    """
    x = g.features if features is None else np.asarray(features, dtype=np.float64)
    if cfg.input_dim is not None and x.shape[1] != cfg.input_dim:
        raise ShapeError(f"encoder expects {cfg.input_dim} features, graph has {x.shape[1]}")
    if x.shape[0] != g.n:
        raise ShapeError("feature row count must match the graph")
    xt = ad.dropout(tape.constant(x), cfg.dropout, rng, training)
    h = ad.relu(ad.matmul(xt, pt["input.w"]))
    for k in range(1, cfg.hops + 1):
        z = _hop(tape, g, cfg, pt, h, k)
        h = ad.add(ad.relu(z), h) if cfg.residual else ad.relu(z)
        if k < cfg.hops:
            h = ad.dropout(h, cfg.dropout, rng, training)
    return h


def classify(h: Tensor, pt: dict[str, Tensor]) -> Tensor:
    """Linear head: logits = H W + b."""
    return ad.add_rowvec(ad.matmul(h, pt["cls.w"]), pt["cls.b"])


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over rows of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.rows,):
        raise ShapeError(f"labels must have shape ({logits.rows},)")
    if labels.size == 0:
        raise ValidationError("cross_entropy_loss needs at least one row")
    if labels.min() < 0 or labels.max() >= logits.cols:
        raise ValidationError("labels must lie in [0, num_classes)")
    picked = ad.gather_labels(ad.row_log_softmax(logits), labels)
    return ad.neg(ad.reduce_mean(picked, "all"))


def predict_logits(g: SparseGraph, params: EncoderParams,
                   features: np.ndarray | None = None) -> np.ndarray:
    """Evaluation-mode forward pass returning plain logit values."""
    tape = Tape()
    pt = params.leafed(tape)
    h = encode(tape, g, params.config, pt, training=False, features=features)
    return classify(h, pt).data.copy()


def softmax_scores(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)

"""Label-free target-domain losses layered on top of a trained encoder.

Three options:
  * im  - information maximization on target predictions: confident per-node
          posteriors, diverse on average.
  * ae  - inner-product graph autoencoder: reconstruct observed edges against
          rejection-sampled non-edges.
  * cl  - contrastive learning over two feature-masked views with a linear
          projection head and the NT-Xent objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, ShapeError, ValidationError
from .graph import SparseGraph

UNSUP_KINDS = ("none", "im", "ae", "cl")


@dataclass
class UnsupConfig:
    kind: str = "none"
    beta: float = 0.5
    neg_ratio: int = 1
    decoder_dropout: float = 0.1
    mask_prob: float = 0.3
    temperature: float = 0.5
    proj_dim: int = 64

    def __post_init__(self):
        if self.kind not in UNSUP_KINDS:
            raise ConfigError(f"unknown unsupervised loss kind {self.kind!r}")
        if self.beta < 0.0:
            raise ConfigError("beta must be nonnegative")
        if self.neg_ratio < 1:
            raise ConfigError("neg_ratio must be at least 1")
        if not (0.0 <= self.decoder_dropout < 1.0):
            raise ConfigError("decoder_dropout must lie in [0, 1)")
        if not (0.0 <= self.mask_prob < 1.0):
            raise ConfigError("mask_prob must lie in [0, 1)")
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be positive")
        if self.proj_dim < 1:
            raise ConfigError("proj_dim must be positive")


# ---------------------------------------------------------------------------
# information maximization


def im_loss(logits: Tensor) -> Tensor:
    """mean_i H(p_i) - H(mean_i p_i) with p = softmax(logits), natural log.

    Minimized (-ln C) by confident predictions spread evenly over classes;
    maximal (ln C) when every row is uniform. Entropy terms go through
    x ln x with its continuous extension, so exactly-zero probabilities are
    safe.
    """
    if logits.rows == 0:
        raise ShapeError("im_loss needs at least one row")
    p = ad.row_softmax(logits)
    per_row = ad.neg(ad.reduce_sum(ad.xlogx(p), "rows"))        # (n, 1) entropies
    mean_entropy = ad.reduce_mean(per_row, "all")
    marginal = ad.reduce_mean(p, "cols")                        # (1, c)
    marginal_entropy = ad.neg(ad.reduce_sum(ad.xlogx(marginal), "all"))
    return ad.sub(mean_entropy, marginal_entropy)


# ---------------------------------------------------------------------------
# graph autoencoder


def sample_negative_pairs(g: SparseGraph, count: int,
                          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ordered non-adjacent pairs (i != j, (i, j) not stored),
    rejection-sampled. Duplicates among the samples are allowed."""
    n = g.n
    loops = int((g.adj.row_ids() == g.adj.indices).sum())
    if n * (n - 1) - (g.adj.nnz - loops) <= 0:
        raise ValidationError("graph has no non-adjacent ordered pairs to sample")
    present = np.unique(g.adj.row_ids() * n + g.adj.indices)
    chunks_i: list[np.ndarray] = []
    chunks_j: list[np.ndarray] = []
    filled = 0
    while filled < count:
        batch = 2 * (count - filled) + 8
        draw = rng.integers(0, n, size=(batch, 2))
        keys = draw[:, 0] * n + draw[:, 1]
        ok = (draw[:, 0] != draw[:, 1]) & ~np.isin(keys, present)
        good = draw[ok][: count - filled]
        chunks_i.append(good[:, 0])
        chunks_j.append(good[:, 1])
        filled += good.shape[0]
    return np.concatenate(chunks_i), np.concatenate(chunks_j)


def ae_loss(z: Tensor, g: SparseGraph, neg_ratio: int, decoder_dropout: float,
            rng_drop: np.random.Generator | None, rng_sample: np.random.Generator,
            *, training: bool = True) -> Tensor:
    """Edge-reconstruction BCE for the inner-product decoder.

    Scores sigmoid(z_i . z_j) over all stored slots (label 1) and
    neg_ratio * nnz sampled non-pairs (label 0), averaged together.
    Decoder-side dropout perturbs z before scoring in training mode.
    """
    if g.adj.nnz == 0:
        raise ValidationError("ae_loss needs a graph with at least one edge")
    if z.rows != g.n:
        raise ShapeError("ae_loss: embedding rows must match the graph")
    m = g.adj.nnz
    pos_i = g.adj.row_ids()
    pos_j = g.adj.indices
    neg_i, neg_j = sample_negative_pairs(g, neg_ratio * m, rng_sample)
    rows_i = np.concatenate([pos_i, neg_i])
    rows_j = np.concatenate([pos_j, neg_j])
    targets = np.concatenate([np.ones((m, 1)), np.zeros((neg_ratio * m, 1))], axis=0)
    zd = ad.dropout(z, decoder_dropout, rng_drop, training)
    dots = ad.pair_dots(zd, rows_i, rows_j)
    return ad.reduce_mean(ad.bce_with_logits(dots, targets), "all")


# ---------------------------------------------------------------------------
# contrastive learning


def augment_mask(x: np.ndarray, mask_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Zero whole feature columns independently with probability mask_prob."""
    if not (0.0 <= mask_prob < 1.0):
        raise ConfigError("mask_prob must lie in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    dropped = rng.random(x.shape[1]) < mask_prob
    out = x.copy()
    out[:, dropped] = 0.0
    return out


@dataclass
class ProjectionParams:
    """Linear projection head hidden -> proj_dim (no activation)."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def init(hidden: int, proj_dim: int, rng: np.random.Generator) -> "ProjectionParams":
        from .encoders import glorot
        return ProjectionParams({
            "proj.w": glorot(rng, hidden, proj_dim, (hidden, proj_dim)),
            "proj.b": np.zeros((1, proj_dim)),
        })


def project(h: Tensor, pt: dict[str, Tensor]) -> Tensor:
    return ad.add_rowvec(ad.matmul(h, pt["proj.w"]), pt["proj.b"])


def _l2_normalize_rows(z: Tensor) -> Tensor:
    sq = ad.reduce_sum(ad.mul(z, z), "rows")
    if np.any(sq.data <= 0.0):
        raise ValidationError("nt_xent: a projected row has zero norm")
    return ad.mul_colvec(z, ad.powc(sq, -0.5))


def nt_xent(z1: Tensor, z2: Tensor, temperature: float) -> Tensor:
    """Normalized-temperature cross entropy over 2n pooled projections.

    Rows are L2-normalized, similarities are cosines divided by the
    temperature, each anchor's positive is its counterpart in the other
    view, and the denominator runs over the 2n - 1 pooled rows other than
    the anchor itself.
    """
    if temperature <= 0.0:
        raise ConfigError("temperature must be positive")
    if z1.shape != z2.shape:
        raise ShapeError("nt_xent: views must have equal shape")
    n = z1.rows
    if n < 2:
        raise ShapeError("nt_xent needs at least two pairs")
    pooled = _l2_normalize_rows(ad.vstack(z1, z2))
    sims = ad.scale(ad.matmul(pooled, ad.transpose(pooled)), 1.0 / temperature)
    off_diag = ~np.eye(2 * n, dtype=bool)
    denom = ad.masked_row_logsumexp(sims, off_diag)             # (2n, 1)
    pos_index = np.concatenate([np.arange(n) + n, np.arange(n)])
    pos = ad.gather_labels(sims, pos_index)                     # (2n, 1)
    return ad.reduce_mean(ad.sub(denom, pos), "all")


def cl_loss(tape: Tape, g: SparseGraph, encoder_cfg, encoder_pt: dict[str, Tensor],
            proj_pt: dict[str, Tensor], cfg: UnsupConfig,
            rng_aug: np.random.Generator, rng_drop: np.random.Generator | None,
            *, training: bool = True) -> Tensor:
    """Two independently masked views -> shared encoder -> projection ->
    NT-Xent. The graph structure is identical for both views."""
    from .encoders import encode
    view1 = augment_mask(g.features, cfg.mask_prob, rng_aug)
    view2 = augment_mask(g.features, cfg.mask_prob, rng_aug)
    h1 = encode(tape, g, encoder_cfg, encoder_pt, training=training, rng=rng_drop,
                features=view1)
    h2 = encode(tape, g, encoder_cfg, encoder_pt, training=training, rng=rng_drop,
                features=view2)
    return nt_xent(project(h1, proj_pt), project(h2, proj_pt), cfg.temperature)

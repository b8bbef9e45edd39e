"""Domain alignment terms: kernel MMD and an adversarial discriminator.

The MMD estimator is the biased V-statistic with a sum of Gaussian kernels;
bandwidths come from the median heuristic on the pooled sample, stretched by
a fixed scale list. The adversarial path pushes pooled embeddings through a
gradient-reversal node into a small MLP domain classifier trained with
binary cross-entropy (source = 0, target = 1), so a single optimizer handles
both sides of the game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import (ConfigError, DegenerateBandwidthError, ShapeError,
                     ValidationError)

ALIGN_KINDS = ("none", "mmd", "adversarial")


@dataclass
class AlignmentConfig:
    kind: str = "none"
    alpha: float = 1.0
    bandwidth_scales: tuple[float, ...] = (0.5, 1.0, 2.0)
    disc_hidden: int = 64
    lambda_max: float = 1.0
    lambda_schedule: str = "ramp"  # "constant" or "ramp"

    def __post_init__(self):
        if self.kind not in ALIGN_KINDS:
            raise ConfigError(f"unknown alignment kind {self.kind!r}")
        if self.alpha < 0.0:
            raise ConfigError("alpha must be nonnegative")
        self.bandwidth_scales = tuple(float(s) for s in self.bandwidth_scales)
        if not self.bandwidth_scales or any(s <= 0 for s in self.bandwidth_scales):
            raise ConfigError("bandwidth_scales must be positive")
        if self.disc_hidden < 1:
            raise ConfigError("disc_hidden must be positive")
        if self.lambda_max < 0.0:
            raise ConfigError("lambda_max must be nonnegative")
        if self.lambda_schedule not in ("constant", "ramp"):
            raise ConfigError(f"unknown lambda schedule {self.lambda_schedule!r}")


# ---------------------------------------------------------------------------
# kernel MMD


def median_bandwidth(xs: np.ndarray, xt: np.ndarray) -> float:
    """gamma = 1 / (2 m^2) with m the (lower) median pairwise distance over
    the pooled sample."""
    pooled = np.concatenate([np.asarray(xs, dtype=np.float64),
                             np.asarray(xt, dtype=np.float64)], axis=0)
    n = pooled.shape[0]
    if n < 2:
        raise DegenerateBandwidthError("need at least two pooled points")
    sq = _pairwise_sq(pooled, pooled)
    iu = np.triu_indices(n, k=1)
    d2 = np.maximum(sq[iu], 0.0)
    med2 = _lower_median(d2)
    if med2 <= 0.0:
        # over half the pairs coincide; fall back to the closest distinct
        # pair so the bandwidth stays finite
        positive = d2[d2 > 0.0]
        if positive.size == 0:
            raise DegenerateBandwidthError("all pooled points are identical")
        med2 = float(positive.min())
    return 1.0 / (2.0 * med2)


def _lower_median(values: np.ndarray) -> float:
    k = (values.size - 1) // 2
    return float(np.partition(values, k)[k])


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sa = (a * a).sum(axis=1)[:, None]
    sb = (b * b).sum(axis=1)[None, :]
    return sa + sb - 2.0 * (a @ b.T)


def mmd_value(xs: np.ndarray, xt: np.ndarray, gammas) -> float:
    """Tape-free MMD, same estimator as mmd_loss."""
    xs = np.asarray(xs, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    d_ss = np.maximum(_pairwise_sq(xs, xs), 0.0)
    d_tt = np.maximum(_pairwise_sq(xt, xt), 0.0)
    d_st = np.maximum(_pairwise_sq(xs, xt), 0.0)
    total = 0.0
    for gamma in gammas:
        total += (np.exp(-gamma * d_ss).mean()
                  + np.exp(-gamma * d_tt).mean()
                  - 2.0 * np.exp(-gamma * d_st).mean())
    return float(total)


def _sq_dists(a: Tensor, b: Tensor) -> Tensor:
    """Tape node computing the (na, nb) squared-distance matrix."""
    sa = ad.reduce_sum(ad.mul(a, a), "rows")            # (na, 1)
    sb = ad.reduce_sum(ad.mul(b, b), "rows")            # (nb, 1)
    cross = ad.matmul(a, ad.transpose(b))               # (na, nb)
    d = ad.add_colvec(ad.scale(cross, -2.0), sa)
    return ad.add_rowvec(d, ad.transpose(sb))


def mmd_loss(hs: Tensor, ht: Tensor, gammas) -> Tensor:
    """Biased V-statistic MMD between embedding sets on the tape.

    sum over gamma of  mean k(s, s') + mean k(t, t') - 2 mean k(s, t),
    k_gamma(x, y) = exp(-gamma ||x - y||^2).
    """
    gammas = [float(g) for g in gammas]
    if not gammas or any(g <= 0 for g in gammas):
        raise ConfigError("bandwidths must be positive")
    if hs.cols != ht.cols:
        raise ShapeError("mmd_loss: embedding dimensions differ")
    if hs.rows == 0 or ht.rows == 0:
        raise ValidationError("mmd_loss: both samples must be nonempty")
    d_ss = _sq_dists(hs, hs)
    d_tt = _sq_dists(ht, ht)
    d_st = _sq_dists(hs, ht)
    total = None
    for gamma in gammas:
        term = ad.sub(
            ad.add(ad.reduce_mean(ad.exp(ad.scale(d_ss, -gamma)), "all"),
                   ad.reduce_mean(ad.exp(ad.scale(d_tt, -gamma)), "all")),
            ad.scale(ad.reduce_mean(ad.exp(ad.scale(d_st, -gamma)), "all"), 2.0),
        )
        total = term if total is None else ad.add(total, term)
    return total


def mmd_gammas(hs_values: np.ndarray, ht_values: np.ndarray,
               scales) -> list[float]:
    """Median-heuristic gamma stretched by each scale."""
    base = median_bandwidth(hs_values, ht_values)
    return [s * base for s in scales]


# ---------------------------------------------------------------------------
# adversarial alignment


@dataclass
class DiscriminatorParams:
    """Two-layer domain classifier: hidden -> disc_hidden -> 1."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def init(hidden: int, disc_hidden: int, rng: np.random.Generator) -> "DiscriminatorParams":
        from .encoders import glorot
        return DiscriminatorParams({
            "disc.w1": glorot(rng, hidden, disc_hidden, (hidden, disc_hidden)),
            "disc.b1": np.zeros((1, disc_hidden)),
            "disc.w2": glorot(rng, disc_hidden, 1, (disc_hidden, 1)),
            "disc.b2": np.zeros((1, 1)),
        })


def discriminator_logits(h: Tensor, pt: dict[str, Tensor]) -> Tensor:
    inner = ad.relu(ad.add_rowvec(ad.matmul(h, pt["disc.w1"]), pt["disc.b1"]))
    return ad.add_rowvec(ad.matmul(inner, pt["disc.w2"]), pt["disc.b2"])


def adversarial_loss(hs: Tensor, ht: Tensor, pt: dict[str, Tensor], lam: float) -> Tensor:
    """Mean domain-classification BCE over all rows, with the encoder side
    seeing a reversed, lam-scaled gradient."""
    if hs.cols != ht.cols:
        raise ShapeError("adversarial_loss: embedding dimensions differ")
    pooled = ad.grad_reverse(ad.vstack(hs, ht), lam)
    logits = discriminator_logits(pooled, pt)
    domains = np.concatenate([np.zeros((hs.rows, 1)), np.ones((ht.rows, 1))], axis=0)
    return ad.reduce_mean(ad.bce_with_logits(logits, domains), "all")


def lambda_at(step: int, total: int, schedule: str, lambda_max: float) -> float:
    """Ramp 2 / (1 + exp(-10 p)) - 1 toward lambda_max, p = step / total."""
    if total < 1:
        raise ConfigError("lambda_at: total must be positive")
    if not (0 <= step <= total):
        raise ConfigError("lambda_at: step out of range")
    if schedule == "constant":
        return float(lambda_max)
    if schedule != "ramp":
        raise ConfigError(f"unknown lambda schedule {schedule!r}")
    p = step / total
    return float(lambda_max * (2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0))

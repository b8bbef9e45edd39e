"""Full-batch training with alignment and unsupervised target terms.

total loss = CE(source) + alpha * L_align + beta * L_unsup

One SGD-with-momentum optimizer updates every trainable array (encoder,
classifier head, and the discriminator or projection head when configured).
There is no early stopping and no target-based model selection: the final
epoch's parameters are the result.

Target labels never enter this module's optimization path. They stay sealed
inside the pair's HeldOutLabels and are read only by evaluate(), after
training has finished.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .align import (AlignmentConfig, DiscriminatorParams, adversarial_loss,
                    lambda_at, mmd_gammas, mmd_loss)
from .autodiff import Tape, sgd_step
from .encoders import (EncoderConfig, EncoderParams, classify,
                       cross_entropy_loss, encode, init_params, predict_logits,
                       softmax_scores)
from .errors import ConfigError, DivergedRunError, ValidationError
from .graph import DomainPair, HeldOutLabels, SparseGraph
from .metrics import auroc, macro_f1, micro_f1
from .unsup import ProjectionParams, UnsupConfig, ae_loss, cl_loss, im_loss

STREAM_NAMES = ("init", "dropout", "augmentation", "sampling")


@dataclass
class RngStreams:
    """Independent named substreams split from one 64-bit seed.

    Drawing from one stream never shifts another, so optional loss terms can
    consume randomness without perturbing the rest of the run.
    """

    init: np.random.Generator
    dropout: np.random.Generator
    augmentation: np.random.Generator
    sampling: np.random.Generator


def set_seed(seed: int) -> RngStreams:
    if not (0 <= int(seed) < 2 ** 64):
        raise ConfigError("seed must fit in 64 bits")
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAM_NAMES))
    gens = [np.random.Generator(np.random.Philox(c)) for c in children]
    return RngStreams(*gens)


@dataclass
class OptimConfig:
    lr: float = 0.005
    weight_decay: float = 0.0005
    momentum: float = 0.9
    epochs: int = 200

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay must be nonnegative")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")


@dataclass
class ExperimentConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    align: AlignmentConfig = field(default_factory=AlignmentConfig)
    unsup: UnsupConfig = field(default_factory=UnsupConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be positive")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must fit in 64 bits")


@dataclass
class Metrics:
    micro_f1: float
    macro_f1: float
    auroc: float | None

    def as_dict(self) -> dict:
        return {"micro_f1": self.micro_f1, "macro_f1": self.macro_f1, "auroc": self.auroc}


@dataclass
class EpochLoss:
    total: float
    cross_entropy: float
    align: float
    unsup: float


@dataclass
class RunResult:
    seed: int
    metrics: Metrics
    history: list[EpochLoss]
    runtime_seconds: float


@dataclass
class TrainedModel:
    """Final parameters: the encoder proper plus any auxiliary heads."""

    encoder: EncoderParams
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def all_arrays(self) -> dict[str, np.ndarray]:
        return {**self.encoder.arrays, **self.extras}


def train(pair: DomainPair, cfg: ExperimentConfig) -> tuple[TrainedModel, RunResult]:
    """Train on the pair under cfg; returns the final model and the run
    record (loss history, target metrics, wall time)."""
    started = time.perf_counter()
    enc_cfg = cfg.encoder.bound(pair.source.num_features, pair.source.num_classes)
    streams = set_seed(cfg.seed)

    enc_params = init_params(enc_cfg, streams.init)
    extras: dict[str, np.ndarray] = {}
    use_align = cfg.align.kind != "none" and cfg.align.alpha > 0.0
    use_unsup = cfg.unsup.kind != "none" and cfg.unsup.beta > 0.0
    if cfg.align.kind == "adversarial":
        extras.update(DiscriminatorParams.init(enc_cfg.hidden, cfg.align.disc_hidden,
                                               streams.init).arrays)
    if cfg.unsup.kind == "cl":
        extras.update(ProjectionParams.init(enc_cfg.hidden, cfg.unsup.proj_dim,
                                            streams.init).arrays)
    arrays = {**enc_params.arrays, **extras}
    opt_state: dict[str, np.ndarray] = {}
    history: list[EpochLoss] = []

    need_target = use_align or (use_unsup and cfg.unsup.kind in ("im", "ae"))
    # Overflow in a diverging run is reported through DivergedRunError, not
    # as a stream of numpy warnings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for epoch in range(cfg.optim.epochs):
            tape = Tape()
            pt = {name: tape.leaf(a) for name, a in arrays.items()}
            hs = encode(tape, pair.source, enc_cfg, pt, training=True,
                        rng=streams.dropout)
            ce = cross_entropy_loss(classify(hs, pt), pair.source.labels)

            ht = None
            if need_target:
                ht = encode(tape, pair.target, enc_cfg, pt, training=True,
                            rng=streams.dropout)

            align_term = None
            if use_align:
                if cfg.align.kind == "mmd":
                    gammas = mmd_gammas(hs.data, ht.data, cfg.align.bandwidth_scales)
                    align_term = mmd_loss(hs, ht, gammas)
                else:
                    lam = lambda_at(epoch, cfg.optim.epochs, cfg.align.lambda_schedule,
                                    cfg.align.lambda_max)
                    align_term = adversarial_loss(hs, ht, pt, lam)

            unsup_term = None
            if use_unsup:
                if cfg.unsup.kind == "im":
                    unsup_term = im_loss(classify(ht, pt))
                elif cfg.unsup.kind == "ae":
                    unsup_term = ae_loss(ht, pair.target, cfg.unsup.neg_ratio,
                                         cfg.unsup.decoder_dropout, streams.dropout,
                                         streams.sampling, training=True)
                else:
                    unsup_term = cl_loss(tape, pair.target, enc_cfg, pt, pt, cfg.unsup,
                                         streams.augmentation, streams.dropout,
                                         training=True)

            total = ce
            if align_term is not None:
                total = ad.add(total, ad.scale(align_term, cfg.align.alpha))
            if unsup_term is not None:
                total = ad.add(total, ad.scale(unsup_term, cfg.unsup.beta))

            total_v = total.item()
            if not np.isfinite(total_v):
                raise DivergedRunError(epoch)
            history.append(EpochLoss(
                total=total_v,
                cross_entropy=ce.item(),
                align=align_term.item() if align_term is not None else 0.0,
                unsup=unsup_term.item() if unsup_term is not None else 0.0,
            ))

            grads = tape.backward(total)
            gd = {name: grads.of(pt[name]) for name in arrays}
            sgd_step(arrays, gd, lr=cfg.optim.lr, weight_decay=cfg.optim.weight_decay,
                     momentum=cfg.optim.momentum, state=opt_state)

    model = TrainedModel(encoder=EncoderParams(enc_cfg, enc_params.arrays),
                         extras=extras)
    metrics = evaluate(model.encoder, pair.target, pair.target_truth)
    runtime = time.perf_counter() - started
    return model, RunResult(seed=cfg.seed, metrics=metrics, history=history,
                            runtime_seconds=runtime)


def evaluate(params: EncoderParams, g: SparseGraph,
             truth: HeldOutLabels | np.ndarray) -> Metrics:
    """Evaluation-mode metrics of params on g against the true labels.

    Accepts sealed labels and reveals them here, or a plain array. AUROC is
    reported for binary label spaces only, scored by the positive-class
    probability.
    """
    labels = truth.reveal() if isinstance(truth, HeldOutLabels) else np.asarray(truth)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (g.n,):
        raise ValidationError("truth labels must cover every node")
    if np.any(labels < 0) or labels.max() >= g.num_classes:
        raise ValidationError("truth labels must lie in [0, num_classes)")
    logits = predict_logits(g, params)
    pred = logits.argmax(axis=1)
    roc = None
    if g.num_classes == 2:
        roc = auroc(softmax_scores(logits)[:, 1], labels)
    return Metrics(micro_f1=micro_f1(labels, pred),
                   macro_f1=macro_f1(labels, pred),
                   auroc=roc)


# ---------------------------------------------------------------------------
# grid search


GRID_SECTIONS = ("encoder", "align", "unsup", "optim")
PRIMARY_METRICS = ("micro_f1", "macro_f1", "auroc")


@dataclass
class GridCell:
    config_id: str
    overrides: dict
    results: list[RunResult]
    failures: list[tuple[int, str]]  # (seed, reason)

    def mean_std(self, metric: str) -> tuple[float | None, float | None]:
        values = [getattr(r.metrics, metric) for r in self.results]
        values = [v for v in values if v is not None]
        if not values:
            return None, None
        if all(v == values[0] for v in values):
            # exact path: repeated seeds must report literal zero spread
            return values[0], 0.0
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        return mean, var ** 0.5


def config_id_for(obj: dict) -> str:
    canon = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return "c" + hashlib.sha256(canon.encode("utf-8")).hexdigest()[:10]


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """A copy of cfg with dotted-path overrides (e.g. "optim.lr") applied."""
    sections = {
        "encoder": dict(cfg.encoder.__dict__),
        "align": dict(cfg.align.__dict__),
        "unsup": dict(cfg.unsup.__dict__),
        "optim": dict(cfg.optim.__dict__),
    }
    for path, value in overrides.items():
        section, _, key = path.partition(".")
        if section not in sections or not key:
            raise ConfigError(f"grid key {path!r} is not a section.field path")
        if key not in sections[section]:
            raise ConfigError(f"grid key {path!r} does not name a config field")
        sections[section][key] = value
    return ExperimentConfig(
        encoder=EncoderConfig(**sections["encoder"]),
        align=AlignmentConfig(**sections["align"]),
        unsup=UnsupConfig(**sections["unsup"]),
        optim=OptimConfig(**sections["optim"]),
        seed=cfg.seed, repeats=cfg.repeats,
    )


def _run_cell_seed(args) -> tuple[int, int, RunResult | None, str | None]:
    cell_idx, seed, pair, cfg = args
    try:
        _, result = train(pair, cfg)
        return cell_idx, seed, result, None
    except DivergedRunError as e:
        return cell_idx, seed, None, str(e)


def grid_search(pair: DomainPair, base: ExperimentConfig, grid: dict[str, list],
                seeds: list[int], primary_metric: str = "micro_f1",
                jobs: int = 1) -> list[GridCell]:
    """Cartesian product of grid values x seeds; cells come back sorted by
    the primary metric's mean, best first, ties broken by the override
    values in key order. Diverged runs are recorded per cell, not dropped."""
    if primary_metric not in PRIMARY_METRICS:
        raise ConfigError(f"unknown primary metric {primary_metric!r}")
    if not seeds:
        raise ConfigError("grid_search needs at least one seed")
    if jobs < 1:
        raise ConfigError("jobs must be positive")
    keys = sorted(grid.keys())
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigError(f"grid entry {k!r} must be a nonempty list")
    combos = list(itertools.product(*(grid[k] for k in keys))) if keys else [()]

    cells: list[GridCell] = []
    tasks = []
    for idx, combo in enumerate(combos):
        overrides = dict(zip(keys, combo))
        cells.append(GridCell(config_id=config_id_for(overrides), overrides=overrides,
                              results=[], failures=[]))
        for seed in seeds:
            cfg = apply_overrides(base, overrides)
            cfg.seed = seed
            tasks.append((idx, seed, pair, cfg))

    if jobs == 1:
        outcomes = [_run_cell_seed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell_seed, tasks))

    for cell_idx, seed, result, failure in outcomes:
        if result is not None:
            cells[cell_idx].results.append(result)
        else:
            cells[cell_idx].failures.append((seed, failure))

    def sort_key(cell: GridCell):
        mean, _ = cell.mean_std(primary_metric)
        rank = -mean if mean is not None else float("inf")
        tie = json.dumps([cell.overrides.get(k) for k in keys], sort_keys=True)
        return (rank, tie)

    cells.sort(key=sort_key)
    return cells

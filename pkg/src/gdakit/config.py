"""JSON config parsing with a closed schema.

Unknown keys are rejected at every level rather than ignored, so a typo like
"momentun" fails loudly instead of silently training with the default.
"""

from __future__ import annotations

import json

from .align import AlignmentConfig
from .encoders import EncoderConfig
from .errors import ConfigError
from .trainer import (ExperimentConfig, OptimConfig, PRIMARY_METRICS,
                      apply_overrides)
from .unsup import UnsupConfig

_ENCODER_FIELDS = {
    "aggregator": str, "hops": int, "hidden": int, "residual": bool,
    "dropout": float, "gin_epsilon": float,
}
_ALIGN_FIELDS = {
    "kind": str, "alpha": float, "bandwidth_scales": list, "disc_hidden": int,
    "lambda_max": float, "lambda_schedule": str,
}
_UNSUP_FIELDS = {
    "kind": str, "beta": float, "neg_ratio": int, "decoder_dropout": float,
    "mask_prob": float, "temperature": float, "proj_dim": int,
}
_OPTIM_FIELDS = {"lr": float, "weight_decay": float, "momentum": float, "epochs": int}

_SYNTH_DOMAIN_FIELDS = {
    "n_per_class": int, "num_classes": int, "p_intra": float, "p_inter": float,
    "class_means": list, "sigma": float, "class_priors": list, "seed": int,
}


def _coerce(value, want: type, where: str):
    if want is float:
        # JSON integers are fine where a float is expected; bools are not.
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if want is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return value
    raise AssertionError(f"unhandled field type {want!r}")


def _section(obj: dict, name: str, fields: dict) -> dict:
    raw = obj.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {name!r}")
    return {k: _coerce(v, fields[k], f"{name}.{k}") for k, v in raw.items()}


def _scales(raw) -> tuple:
    out = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("align.bandwidth_scales entries must be numbers")
        out.append(float(v))
    return tuple(out)


_TOP_KEYS = {"encoder", "align", "unsup", "optim", "seed", "repeats"}


def parse_experiment(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("experiment config must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    enc = _section(obj, "encoder", _ENCODER_FIELDS)
    ali = _section(obj, "align", _ALIGN_FIELDS)
    uns = _section(obj, "unsup", _UNSUP_FIELDS)
    opt = _section(obj, "optim", _OPTIM_FIELDS)
    if "bandwidth_scales" in ali:
        ali["bandwidth_scales"] = _scales(ali["bandwidth_scales"])
    seed = _coerce(obj.get("seed", 0), int, "seed")
    repeats = _coerce(obj.get("repeats", 1), int, "repeats")
    return ExperimentConfig(
        encoder=EncoderConfig(**enc), align=AlignmentConfig(**ali),
        unsup=UnsupConfig(**uns), optim=OptimConfig(**opt),
        seed=seed, repeats=repeats,
    )


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    enc = dict(cfg.encoder.__dict__)
    enc.pop("input_dim", None)
    enc.pop("num_classes", None)
    ali = dict(cfg.align.__dict__)
    ali["bandwidth_scales"] = list(ali["bandwidth_scales"])
    return {
        "encoder": enc, "align": ali, "unsup": dict(cfg.unsup.__dict__),
        "optim": dict(cfg.optim.__dict__), "seed": cfg.seed, "repeats": cfg.repeats,
    }


_GRID_TOP_KEYS = {"base", "grid", "seeds", "primary_metric"}


def parse_grid(obj: dict) -> tuple[ExperimentConfig, dict, list[int], str]:
    if not isinstance(obj, dict):
        raise ConfigError("grid config must be a JSON object")
    unknown = set(obj) - _GRID_TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    base = parse_experiment(obj.get("base", {}))

    raw_grid = obj.get("grid", {})
    if not isinstance(raw_grid, dict):
        raise ConfigError("'grid' must map dotted paths to value lists")
    grid: dict[str, list] = {}
    for path, values in raw_grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid entry {path!r} must be a nonempty list")
        grid[path] = values
    # Validate every path and value by applying the worst case once.
    for path, values in grid.items():
        for v in values:
            apply_overrides(base, {path: v})

    raw_seeds = obj.get("seeds", [0])
    if not isinstance(raw_seeds, list) or not raw_seeds:
        raise ConfigError("'seeds' must be a nonempty list of integers")
    seeds = [_coerce(s, int, "seeds entry") for s in raw_seeds]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("'seeds' must not repeat")

    metric = _coerce(obj.get("primary_metric", "micro_f1"), str, "primary_metric")
    if metric not in PRIMARY_METRICS:
        raise ConfigError(f"unknown primary metric {metric!r}")
    return base, grid, seeds, metric


def parse_synth(obj: dict) -> tuple[dict, dict]:
    """Validated (source, target) generator settings for the synth command."""
    if not isinstance(obj, dict):
        raise ConfigError("synth config must be a JSON object")
    unknown = set(obj) - {"source", "target"}
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    out = []
    for name in ("source", "target"):
        if name not in obj:
            raise ConfigError(f"synth config needs a {name!r} section")
        raw = obj[name]
        if not isinstance(raw, dict):
            raise ConfigError(f"section {name!r} must be an object")
        bad = set(raw) - set(_SYNTH_DOMAIN_FIELDS)
        if bad:
            raise ConfigError(f"unknown key {sorted(bad)[0]!r} in section {name!r}")
        for req in ("n_per_class", "num_classes", "p_intra", "p_inter",
                    "class_means", "sigma"):
            if req not in raw:
                raise ConfigError(f"section {name!r} is missing {req!r}")
        parsed = {k: _coerce(v, _SYNTH_DOMAIN_FIELDS[k], f"{name}.{k}")
                  for k, v in raw.items()}
        means = parsed["class_means"]
        if not all(isinstance(row, list) for row in means):
            raise ConfigError(f"{name}.class_means must be a list of rows")
        if "class_priors" in parsed:
            pri = parsed["class_priors"]
            for v in pri:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{name}.class_priors entries must be numbers")
            parsed["class_priors"] = [float(v) for v in pri]
        out.append(parsed)
    return out[0], out[1]


def load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e

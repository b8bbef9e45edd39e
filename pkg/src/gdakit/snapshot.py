"""Binary parameter snapshots.

Layout (all integers little-endian):

    4 bytes   magic "GDAP"
    u32       format version (currently 1)
    u32       length of the config JSON blob
    ...       config JSON, utf-8 (the bound encoder config)
    u32       number of arrays
    per array:
        u16   name length, then the utf-8 name
        u32   rows, u32 cols
        ...   rows*cols float64 values, little-endian, row-major

Auxiliary heads (discriminator, projection) are stored alongside the encoder
arrays; their names carry a "disc." or "proj." prefix and they split back out
on load.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .encoders import EncoderConfig, EncoderParams
from .errors import ValidationError
from .graph import atomic_write_bytes
from .trainer import TrainedModel

MAGIC = b"GDAP"
VERSION = 1

_CONFIG_KEYS = ("aggregator", "hops", "hidden", "residual", "dropout",
                "gin_epsilon", "input_dim", "num_classes")


def _config_blob(cfg: EncoderConfig) -> bytes:
    if cfg.input_dim is None or cfg.num_classes is None:
        raise ValidationError("snapshot needs a bound encoder config")
    obj = {k: getattr(cfg, k) for k in _CONFIG_KEYS}
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dump_model(model: TrainedModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = _config_blob(model.encoder.config)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    arrays = model.all_arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for name, a in arrays.items():
        enc = name.encode("utf-8")
        if a.ndim != 2:
            raise ValidationError(f"array {name!r} is not 2-D")
        buf.write(struct.pack("<H", len(enc)))
        buf.write(enc)
        buf.write(struct.pack("<II", a.shape[0], a.shape[1]))
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def save_model(model: TrainedModel, path: str):
    atomic_write_bytes(path, dump_model(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValidationError("parameter snapshot is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def parse_model(data: bytes) -> TrainedModel:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise ValidationError("not a parameter snapshot (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    blob = r.take(r.u32())
    try:
        obj = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError("snapshot config blob is not valid JSON") from e
    if set(obj) != set(_CONFIG_KEYS):
        raise ValidationError("snapshot config blob has unexpected keys")
    cfg = EncoderConfig(**obj)

    count = r.u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rows = r.u32()
        cols = r.u32()
        raw = r.take(rows * cols * 8)
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(
            np.float64, copy=True)
    if r.pos != len(data):
        raise ValidationError("parameter snapshot has trailing bytes")

    encoder_arrays = {k: v for k, v in arrays.items()
                      if not k.startswith(("disc.", "proj."))}
    extras = {k: v for k, v in arrays.items() if k.startswith(("disc.", "proj."))}
    return TrainedModel(encoder=EncoderParams(cfg, encoder_arrays), extras=extras)


def load_model(path: str) -> TrainedModel:
    with open(path, "rb") as f:
        return parse_model(f.read())

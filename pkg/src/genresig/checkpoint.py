"""Binary model checkpoints.

Layout (little-endian): magic "TSIG", version u32 (=1), config blob
(u32 byte length + UTF-8 JSON holding the model config and genre names),
block count u32, then per parameter block: name length u32, UTF-8 name,
rank u32, extents u32 each, values as float32 row-major. Training stays
in float64; storage quantizes to float32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedFile, UnsupportedVersion
from .model import ModelConfig, ModelParams, param_spec

MAGIC = b"TSIG"
VERSION = 1


def save_checkpoint(params: ModelParams, path, genre_names=None):
    config_blob = json.dumps({
        "model": params.cfg.to_dict(),
        "genres": list(genre_names or []),
    }).encode("utf-8")
    blocks = params.parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(blocks)))
        for p in blocks:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(p.data.astype("<f4").tobytes())


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise TruncatedFile(f"{self.path}: ran out of bytes")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Returns (ModelParams, genre_names). Validates magic, version and
    that every block matches the shape the embedded config implies; a
    broken file never yields partial parameters."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    reader = _Reader(raw, path)
    reader.take(4)
    version = reader.u32()
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: checkpoint version {version}")
    config = json.loads(reader.take(reader.u32()).decode("utf-8"))
    cfg = ModelConfig.from_dict(config["model"])
    genre_names = list(config.get("genres", []))

    expected = {name: shape for name, shape, _ in param_spec(cfg)}
    arrays: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        if name not in expected:
            raise ShapeMismatch(f"{path}: unexpected block {name!r}")
        if shape != expected[name]:
            raise ShapeMismatch(f"{path}: {name} stored {shape}, config wants {expected[name]}")
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(count * 4), dtype="<f4")
        arrays[name] = values.reshape(shape).astype(np.float64)
    if set(arrays) != set(expected):
        raise TruncatedFile(f"{path}: missing blocks {sorted(set(expected) - set(arrays))}")
    return ModelParams.from_arrays(cfg, arrays), genre_names

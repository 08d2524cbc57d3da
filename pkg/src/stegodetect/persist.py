"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic b"TSRNNCK1"
    u32       metadata length M
    M bytes   UTF-8 JSON: format_version, config, vocabulary, tensor names, extra
    per tensor, in metadata order:
        u16   name length, then the UTF-8 name
        u8    ndim, then ndim x u32 dims
        f32   payload, row-major, prod(dims) values
    u32       CRC-32 (zlib polynomial) of every preceding byte

The whole file is validated before any tensor is handed out.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .corpus import Vocabulary
from .errors import (ChecksumError, CheckpointShapeError, FormatError, StorageError,
                     VersionError)
from .network import ModelConfig, ModelParams, expected_shapes

MAGIC = b"TSRNNCK1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    extra: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    names = ckpt.params.names()
    meta = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "vocabulary": ckpt.vocab.to_list(),
        "tensors": names,
        "extra": ckpt.extra,
    }
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save(ckpt: Checkpoint, path: str | Path) -> None:
    data = to_bytes(ckpt)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    if len(data) < len(MAGIC) + 8:
        raise FormatError("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError("checkpoint checksum mismatch (corrupt or truncated file)")

    rd = _Reader(body)
    rd.take(len(MAGIC))
    (meta_len,) = rd.unpack("<I")
    try:
        meta = json.loads(rd.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable metadata block: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {meta.get('format_version')}, expected {FORMAT_VERSION}")
    config = ModelConfig.from_dict(meta["config"])
    vocab = Vocabulary.from_list(meta["vocabulary"])
    if len(vocab) != config.vocab_size:
        raise CheckpointShapeError(f"vocabulary has {len(vocab)} entries, config says {config.vocab_size}")
    shapes = expected_shapes(config)
    names = meta["tensors"]
    if len(names) != len(shapes):
        missing = sorted(set(shapes) - set(names)) or sorted(set(names) - set(shapes))
        raise CheckpointShapeError(f"checkpoint holds {len(names)} tensors, config needs {len(shapes)}; "
                                   f"first offending tensor: {missing[0] if missing else '?'}")

    tensors = {}
    for expected_name in names:
        (n,) = rd.unpack("<H")
        name = rd.take(n).decode("utf-8")
        if name != expected_name:
            raise FormatError(f"tensor record {name!r} out of order (expected {expected_name!r})")
        if name not in shapes:
            raise CheckpointShapeError(f"tensor {name} not part of this model configuration")
        (ndim,) = rd.unpack("<B")
        dims = rd.unpack(f"<{ndim}I")
        if tuple(dims) != shapes[name]:
            raise CheckpointShapeError(f"tensor {name} has shape {tuple(dims)}, config needs {shapes[name]}")
        count = int(np.prod(dims))
        arr = np.frombuffer(rd.take(4 * count), dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(nx.get_dtype())
    if rd.pos != len(body):
        raise FormatError("trailing bytes after last tensor")
    return Checkpoint(config, vocab, ModelParams(config, tensors), meta.get("extra", {}))


def load(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(data)

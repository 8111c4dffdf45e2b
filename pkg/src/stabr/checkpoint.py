"""Versioned binary checkpoints.

Byte layout (all integers unsigned little-endian)::

    magic        8 bytes   b"STABRCKP"
    version      u32       FORMAT_VERSION
    header_len   u64
    header       header_len bytes of UTF-8 JSON (sorted keys, no spaces):
                 {"kind", "config", "hyperparams", "songs", "tags", "tag_table"}
    n_tensors    u32
    n_tensors times:
        name_len u16, name (UTF-8)
        ndim     u8, then ndim dims as u64
        data     prod(dims) float64 little-endian, row-major
    crc32        u32 over every preceding byte

``kind`` is one of ``stabr``, ``sabr``, ``rnn``, ``pop`` or ``sscf``.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import atomic_write
from .errors import CheckpointError

MAGIC = b"STABRCKP"
FORMAT_VERSION = 1
KINDS = ("stabr", "sabr", "rnn", "pop", "sscf")


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)
    songs: list[list[str]] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)
    tag_table: list[list[int]] = field(default_factory=list)


def to_bytes(ckpt: Checkpoint) -> bytes:
    if ckpt.kind not in KINDS:
        raise CheckpointError(f"unknown checkpoint kind {ckpt.kind!r}")
    header = json.dumps(
        {
            "kind": ckpt.kind,
            "config": ckpt.config,
            "hyperparams": ckpt.hyperparams,
            "songs": [list(s) for s in ckpt.songs],
            "tags": list(ckpt.tags),
            "tag_table": [list(t) for t in ckpt.tag_table],
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
    buf.write(header)
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr, dtype="<f8", order="C")
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version > FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is newer than supported {FORMAT_VERSION}"
        )
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    (header_len,) = r.unpack("<Q")
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    (n_tensors,) = r.unpack("<I")
    tensors = {}
    for _ in range(n_tensors):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64)
        tensors[name] = arr.reshape(shape)
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after tensor table")
    try:
        return Checkpoint(
            kind=header["kind"],
            config=header["config"],
            tensors=tensors,
            hyperparams=header["hyperparams"],
            songs=header["songs"],
            tags=header["tags"],
            tag_table=header["tag_table"],
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint header lacks {exc}") from exc


def save(ckpt: Checkpoint, path) -> None:
    atomic_write(Path(path), to_bytes(ckpt))


def load(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(data)

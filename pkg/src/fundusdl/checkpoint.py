"""Binary checkpoint files.

Layout (all integers little-endian u32):
    magic "FDLE" | format version | digest length + utf-8 digest |
    record count | records

Each record: name length + utf-8 name | rank | dims (rank u32s) |
float32 payload, row-major. Parameter tensors and any auxiliary state
(optimizer moments, counters) share this one record shape.
"""

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CheckpointError

__all__ = ["MAGIC", "FORMAT_VERSION", "write_records", "read_records"]

MAGIC = b"FDLE"
FORMAT_VERSION = 1


def _pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def write_records(path, config_digest: str, records) -> None:
    """Write (name, array) pairs. Arrays are stored as float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest_bytes = config_digest.encode("utf-8")
    records = list(records)
    chunks = [MAGIC, _pack_u32(FORMAT_VERSION),
              _pack_u32(len(digest_bytes)), digest_bytes,
              _pack_u32(len(records))]
    for name, array in records:
        arr = np.ascontiguousarray(array, dtype=np.float32)
        name_bytes = name.encode("utf-8")
        chunks.append(_pack_u32(len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(_pack_u32(arr.ndim))
        for dim in arr.shape:
            chunks.append(_pack_u32(dim))
        chunks.append(arr.tobytes())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def read_records(path):
    """Return (config_digest, OrderedDict name -> float32 array)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version}")
    digest = reader.take(reader.u32()).decode("utf-8")
    count = reader.u32()
    records = OrderedDict()
    for _ in range(count):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = reader.take(4 * size)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if name in records:
            raise CheckpointError(f"{path}: duplicate record {name!r}")
        records[name] = arr
    if reader.pos != len(reader.data):
        raise CheckpointError(f"{path}: trailing bytes after last record")
    return digest, records

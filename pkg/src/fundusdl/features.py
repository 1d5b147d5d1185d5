"""Binary feature store: descriptors plus regression targets per image.

Layout (little-endian u32 integers):
    magic "FDFS" | format version | record count | descriptor dim | records

Each record: id length + utf-8 id | dim float32 descriptor | float32 target.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["FEATURE_MAGIC", "FEATURE_VERSION", "write_features",
           "read_features"]

FEATURE_MAGIC = b"FDFS"
FEATURE_VERSION = 1


def write_features(path, rows, dim: int) -> None:
    """Write (image_id, descriptor, target) rows; descriptors must be
    length ``dim``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    chunks = [FEATURE_MAGIC, struct.pack("<I", FEATURE_VERSION),
              struct.pack("<I", len(rows)), struct.pack("<I", dim)]
    for image_id, descriptor, target in rows:
        vec = np.ascontiguousarray(descriptor, dtype=np.float32)
        if vec.shape != (dim,):
            raise DataError(f"descriptor for {image_id!r} has shape "
                            f"{vec.shape}, expected ({dim},)")
        id_bytes = image_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(vec.tobytes())
        chunks.append(struct.pack("<f", float(target)))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def read_features(path):
    """Return (dim, rows) with rows of (image_id, float32 descriptor,
    target)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such feature file")
    data = path.read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"{path}: truncated feature file")
        out = data[pos:pos + n]
        pos += n
        return out

    def u32():
        return struct.unpack("<I", take(4))[0]

    if take(4) != FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature file (bad magic)")
    version = u32()
    if version != FEATURE_VERSION:
        raise DataError(f"{path}: unsupported feature format version "
                        f"{version}")
    count = u32()
    dim = u32()
    rows = []
    seen = set()
    for _ in range(count):
        image_id = take(u32()).decode("utf-8")
        if image_id in seen:
            raise DataError(f"{path}: duplicate feature id {image_id!r}")
        seen.add(image_id)
        vec = np.frombuffer(take(4 * dim), dtype="<f4").copy()
        target = struct.unpack("<f", take(4))[0]
        rows.append((image_id, vec, target))
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes after last record")
    return dim, rows

"""Flat binary parameter checkpoints.

Layout (little-endian)::

    b"GCKP" | version u32 | count u32
    repeated count times:
        name_len u16 | name utf-8 | rank u8 | extents u32 * rank | payload

Version 1 stores float32 payloads, version 2 float64.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"GCKP"
_VERSION_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    arrays = {k: np.asarray(v) for k, v in tensors.items()}
    wide = any(a.dtype == np.float64 for a in arrays.values())
    version = 2 if wide else 1
    dtype = _VERSION_DTYPE[version]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", version, len(arrays)))
    for name, a in arrays.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or a.ndim > 0xFF:
            raise CheckpointError(f"tensor {name!r} exceeds format limits")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", a.ndim))
        buf.write(struct.pack(f"<{a.ndim}I", *a.shape))
        buf.write(np.ascontiguousarray(a, dtype=dtype).tobytes())
    return buf.getvalue()


def loads(data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("bad magic; not a GCKP checkpoint")
    version, count = struct.unpack_from("<II", view, 4)
    dtype = _VERSION_DTYPE.get(version)
    if dtype is None:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", view, pos)
            pos += 2
            name = bytes(view[pos:pos + nlen]).decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", view, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", view, pos)
            pos += 4 * rank
            n = int(np.prod(shape, dtype=np.int64))
            nbytes = n * dtype.itemsize
            if pos + nbytes > len(view):
                raise CheckpointError(f"truncated payload for {name!r}")
            out[name] = np.frombuffer(view[pos:pos + nbytes], dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
            pos += nbytes
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def save(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())

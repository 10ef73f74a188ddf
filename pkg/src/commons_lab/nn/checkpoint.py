"""Portable parameter checkpoint container.

Byte layout (all integers little-endian)::

    magic      4 bytes   b"CLNN"
    version    u32       1
    meta_len   u32       length of the metadata blob
    meta       bytes     UTF-8 JSON object (may be "{}")
    count      u32       number of tensors
    then per tensor, in stored order:
      name_len u16
      name     bytes     UTF-8
      ndim     u8
      dims     u32 x ndim
      data     f32 x prod(dims), C order

Tensors are always written as 32-bit floats, whatever the in-memory dtype.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from commons_lab.errors import IncompatibleCheckpointError

MAGIC = b"CLNN"
VERSION = 1


def dumps(tensors: dict, meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict, dict]:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise IncompatibleCheckpointError("not a checkpoint file (bad magic)")
    version, meta_len = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise IncompatibleCheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(bytes(view[pos:pos + meta_len]).decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos:pos + nlen]).decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", view, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * n
        tensors[name] = arr
    if pos != len(data):
        raise IncompatibleCheckpointError("trailing bytes after the last tensor")
    return tensors, meta


def save(path, tensors: dict, meta: dict | None = None) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(tensors, meta))
    tmp.replace(path)


def load(path) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes())

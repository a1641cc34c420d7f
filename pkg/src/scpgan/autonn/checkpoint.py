"""Binary checkpoint format.

Layout (all little-endian)::

    b"SCPG"  u32 version
    u32 meta_len   meta_len bytes of UTF-8 JSON
    u32 n_arrays
    repeated: u16 name_len, name (UTF-8), u8 ndim, u32 dims[ndim], f64 data[prod(dims)]
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import BadCheckpoint

MAGIC = b"SCPG"
VERSION = 1


def save(path, arrays: dict, meta: dict | None = None):
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(blob)), blob,
             struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load(path):
    """Return ``(arrays, meta)``; raises BadCheckpoint on any malformed input."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise BadCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return _parse(buf)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise BadCheckpoint(f"malformed checkpoint {path}: {exc}") from exc


def _parse(buf):
    if buf[:4] != MAGIC:
        raise BadCheckpoint("missing SCPG magic")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise BadCheckpoint(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", buf, 8)
    pos = 12
    meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        name = buf[pos + 2:pos + 2 + nlen].decode("utf-8")
        pos += 2 + nlen
        (ndim,) = struct.unpack_from("<B", buf, pos)
        shape = struct.unpack_from(f"<{ndim}I", buf, pos + 1)
        pos += 1 + 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        if pos + 8 * n > len(buf):
            raise BadCheckpoint(f"array {name!r} truncated")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(buf):
        raise BadCheckpoint("trailing bytes after last array")
    return arrays, meta

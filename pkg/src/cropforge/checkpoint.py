"""Binary checkpoint format.

Layout (all little-endian)::

    b"CFCK"  u32 version
    repeated until EOF:
        u32 name_len, name (utf-8), u32 rank, u32 dims[rank], f64 payload[prod(dims)]
"""
from __future__ import annotations

import io
import os
import struct

import numpy as np

from .errors import CheckpointError
from .params import ModelParams

MAGIC = b"CFCK"
VERSION = 1


def dumps(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for name, t in params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", t.data.ndim))
        buf.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        buf.write(t.data.astype("<f8").tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> ModelParams:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    params = ModelParams()
    pos = 8
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            end = pos + 8 * count
            if end > len(blob):
                raise CheckpointError(f"truncated payload for {name!r}")
            data = np.frombuffer(blob[pos:end], dtype="<f8").astype(np.float64).reshape(dims)
            pos = end
            params.add(name, data, ModelParams.group_of_name(name))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    return params


def save(params: ModelParams, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load(path: str | os.PathLike) -> ModelParams:
    with open(path, "rb") as fh:
        return loads(fh.read())

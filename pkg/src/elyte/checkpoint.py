"""Versioned binary serialization of named parameter dictionaries.

Layout, little-endian:

    magic   4 bytes  ASCII "CKPT"
    version u32      = 1
    count   u32
    block   repeated count times, sorted by name:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     rank * u32
        values   prod(dims) float64

Blocks are written in sorted-name order, so identical parameter dicts
serialize to byte-identical files.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


def save_params(path, params: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name in sorted(params):
            array = np.asarray(params[name], dtype=np.float64)
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", array.ndim))
            fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
            fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    params: dict[str, np.ndarray] = {}
    for index in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", data, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            nbytes = size * 8
            if len(data) < offset + nbytes:
                raise struct.error
            values = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
            offset += nbytes
        except struct.error:
            raise CheckpointError(f"{path}: truncated block {index}") from None
        if name in params:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        params[name] = values.reshape(dims).copy()
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return params

"""CEMB embedding file format: per-molecule token embedding matrices.

Binary, little-endian:

    magic   4 bytes  ASCII "CEMB"
    version u32      = 1
    H       u32      embedding width
    count   u32      number of records
    record  repeated count times:
        smiles_len u32
        smiles     UTF-8 bytes
        L          u32
        values     L*H float32, token-major

Values round-trip bit-exactly: they are stored as IEEE-754 32-bit floats
exactly as produced.  Duplicate SMILES keys are an error on read.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CEMB"
VERSION = 1


class CembError(ValueError):
    """Malformed CEMB file (bad magic, version, duplicate key, truncation)."""


def write_embeddings(path, records) -> None:
    """Write ``records``, an iterable of (smiles, matrix) pairs.

    Every matrix must be two-dimensional with a common width H; values are
    cast to float32 if they are not already.
    """
    records = [(smiles, np.asarray(matrix, dtype=np.float32)) for smiles, matrix in records]
    width = None
    for smiles, matrix in records:
        if matrix.ndim != 2:
            raise CembError(f"record {smiles!r}: matrix must be 2-D")
        if width is None:
            width = matrix.shape[1]
        elif matrix.shape[1] != width:
            raise CembError(
                f"record {smiles!r}: width {matrix.shape[1]} != {width}"
            )
    if width is None:
        width = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, width, len(records)))
        for smiles, matrix in records:
            blob = smiles.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", matrix.shape[0]))
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_embeddings(path) -> tuple[int, dict[str, np.ndarray]]:
    """Read a CEMB file; returns (H, {smiles: L x H float32 matrix})."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CembError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 16:
        raise CembError(f"{path}: truncated header")
    version, width, count = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise CembError(f"{path}: unsupported version {version}")
    offset = 16
    out: dict[str, np.ndarray] = {}
    for index in range(count):
        try:
            (smiles_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            smiles = data[offset : offset + smiles_len].decode("utf-8")
            if len(data) < offset + smiles_len:
                raise struct.error
            offset += smiles_len
            (rows,) = struct.unpack_from("<I", data, offset)
            offset += 4
            nbytes = rows * width * 4
            if len(data) < offset + nbytes:
                raise struct.error
            values = np.frombuffer(data, dtype="<f4", count=rows * width, offset=offset)
            offset += nbytes
        except struct.error:
            raise CembError(f"{path}: truncated payload in record {index}") from None
        if smiles in out:
            raise CembError(f"{path}: duplicate SMILES key {smiles!r}")
        out[smiles] = values.reshape(rows, width).copy()
    if offset != len(data):
        raise CembError(f"{path}: {len(data) - offset} trailing bytes")
    return width, out

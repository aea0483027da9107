"""Writer for the CEMB embedding interchange format.

Binary, little-endian: magic "CEMB", version u32 = 1, H u32, record count
u32, then per record: smiles byte length u32, SMILES UTF-8 bytes, L u32,
L*H float32 values token-major.  Values are written exactly as produced
(bit-preserving float32), so consumers can verify round trips bit for bit.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CEMB"
VERSION = 1


def write_cemb(path, width: int, records: list[tuple[str, np.ndarray]]) -> None:
    """Write (smiles, L x width float32 matrix) records to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, width, len(records)))
        for smiles, matrix in records:
            matrix = np.asarray(matrix, dtype="<f4")
            if matrix.ndim != 2 or matrix.shape[1] != width:
                raise ValueError(
                    f"record {smiles!r}: expected (L, {width}) matrix, got {matrix.shape}"
                )
            blob = smiles.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", matrix.shape[0]))
            fh.write(np.ascontiguousarray(matrix).tobytes())

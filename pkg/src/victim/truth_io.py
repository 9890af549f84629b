"""Binary matrix files for ground-truth exports.

Layout: a 16-byte header (8-byte magic ``b"STLMAT01"``, uint32 rows, uint32 cols,
both little-endian) followed by rows*cols little-endian float64 values in
row-major order.
"""

from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"STLMAT01"
HEADER_SIZE = 16
_DIMS = np.dtype("<u4")
_VALUES = np.dtype("<f8")


class MatrixFormatError(ValueError):
    """Raised when a file is not a valid binary matrix."""


def encode_matrix(matrix: np.ndarray) -> bytes:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = matrix.shape
    header = MAGIC + np.array([rows, cols], dtype=_DIMS).tobytes()
    return header + np.ascontiguousarray(matrix, dtype=_VALUES).tobytes()


def decode_matrix(payload: bytes) -> np.ndarray:
    if len(payload) < HEADER_SIZE or payload[:8] != MAGIC:
        raise MatrixFormatError("missing matrix header")
    rows, cols = (int(v) for v in np.frombuffer(payload[8:HEADER_SIZE], dtype=_DIMS))
    expected = HEADER_SIZE + rows * cols * _VALUES.itemsize
    if len(payload) != expected:
        raise MatrixFormatError(f"expected {expected} bytes for {rows}x{cols}, got {len(payload)}")
    values = np.frombuffer(payload[HEADER_SIZE:], dtype=_VALUES)
    return values.reshape(rows, cols).astype(np.float64)


def write_matrix(path: Union[str, Path], matrix: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_matrix(matrix))
    return path


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())

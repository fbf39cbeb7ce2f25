"""Minimal binary tensor file.

Layout (little-endian throughout):

====================  ======================================================
bytes                 meaning
====================  ======================================================
0-3                   magic ``HICU``
4                     version, currently 1
5                     dtype code: 0 complex double (interleaved re/im),
                      1 real double, 2 uint8 mask
6                     number of dimensions
7                     reserved, written as 0
8 .. 8+8*ndim         extents, u64 each, outermost first
rest                  payload, row-major
====================  ======================================================

Round trips are bit-exact, and the format is trivially parseable from any
language, which keeps golden-file tests portable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ArrayFormatError

__all__ = ["write_array", "read_array"]

MAGIC = b"HICU"
VERSION = 1

_DTYPES = {
    0: np.dtype("<c16"),
    1: np.dtype("<f8"),
    2: np.dtype("<u1"),
}
_CODES = {v: k for k, v in _DTYPES.items()}


def _code_for(arr: np.ndarray) -> int:
    kind = arr.dtype
    if kind.kind == "c":
        return 0
    if kind.kind == "f":
        return 1
    if kind.kind in "ub" and kind.itemsize == 1:
        return 2
    if kind.kind == "i":
        return 2
    raise ArrayFormatError(f"unsupported dtype {arr.dtype}")


def write_array(path, arr: np.ndarray) -> None:
    """Write ``arr`` (complex, real, or {0,1} mask) to ``path``."""
    arr = np.asarray(arr)
    code = _code_for(arr)
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    if code == 2 and not np.all((data == 0) | (data == 1)):
        raise ArrayFormatError("mask payload must be {0,1}-valued")
    header = MAGIC + struct.pack("<BBBB", VERSION, code, data.ndim, 0)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    """Read a tensor written by :func:`write_array`; bit-exact round trip."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ArrayFormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise ArrayFormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, code, ndim, _reserved = struct.unpack("<BBBB", raw[4:8])
    if version != VERSION:
        raise ArrayFormatError(f"{path}: unsupported version {version}, expected {VERSION}")
    if code not in _DTYPES:
        raise ArrayFormatError(f"{path}: unknown dtype code {code}")
    if ndim < 1:
        raise ArrayFormatError(f"{path}: ndim must be >= 1")
    need = 8 + 8 * ndim
    if len(raw) < need:
        raise ArrayFormatError(f"{path}: truncated dims")
    dims = struct.unpack(f"<{ndim}Q", raw[8:need])
    dtype = _DTYPES[code]
    count = int(np.prod(dims))
    expected = need + count * dtype.itemsize
    if len(raw) != expected:
        raise ArrayFormatError(
            f"{path}: payload is {len(raw) - need} bytes, expected {count * dtype.itemsize}"
        )
    data = np.frombuffer(raw[need:], dtype=dtype, count=count).reshape(dims)
    return data.copy()

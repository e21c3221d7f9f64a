"""The ``HSNF`` feature container and temporal segment arithmetic.

Layout, all integers little-endian::

    magic     4 bytes  b"HSNF"
    version   u16      1
    precision u8       0 = float32, 1 = float64
    ndim      u8       1..4
    extents   ndim x u32
    payload   row-major values
"""

from __future__ import annotations

import struct
import typing
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import CorruptFileError, RejectedInputError
from .tensor import Array

MAGIC = b"HSNF"
VERSION = 1
MAX_DIMENSIONS = 4
HEADER = struct.Struct("<4sHBB")
Precision = typing.Literal[32, 64]
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS: dict[int, int] = {32: 0, 64: 1}


def header_size(ndim: int) -> int:
    return HEADER.size + 4 * ndim


def encode_feature(values: npt.ArrayLike, precision: Precision = 64) -> bytes:
    array = np.asarray(values)
    if array.ndim == 0:
        raise RejectedInputError("cannot store a zero-dimensional payload")
    if array.ndim > MAX_DIMENSIONS:
        raise RejectedInputError(
            f"at most {MAX_DIMENSIONS} dimensions are supported, not {array.ndim}"
        )
    if precision not in _TAGS:
        raise RejectedInputError(f"precision must be 32 or 64, not {precision!r}")
    tag = _TAGS[precision]
    header = HEADER.pack(MAGIC, VERSION, tag, array.ndim)
    extents = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPES[tag]).tobytes()
    return header + extents + payload


def decode_feature(data: bytes, source: str = "<bytes>") -> Array:
    if len(data) < HEADER.size:
        raise CorruptFileError(f"{source}: truncated header")
    magic, version, tag, ndim = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptFileError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise CorruptFileError(f"{source}: unsupported version {version}")
    if tag not in _DTYPES:
        raise CorruptFileError(f"{source}: unknown precision tag {tag}")
    if not 1 <= ndim <= MAX_DIMENSIONS:
        raise CorruptFileError(f"{source}: invalid dimension count {ndim}")
    if len(data) < header_size(ndim):
        raise CorruptFileError(f"{source}: truncated extents")

    extents = struct.unpack_from(f"<{ndim}I", data, HEADER.size)
    dtype = _DTYPES[tag]
    expected = int(np.prod(extents)) * dtype.itemsize
    payload = data[header_size(ndim) :]
    if len(payload) != expected:
        raise CorruptFileError(
            f"{source}: payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(extents)
    return values.astype(np.float64)


def write_feature(path: Path, values: npt.ArrayLike, precision: Precision = 64) -> None:
    path.write_bytes(encode_feature(values, precision))


def read_feature(path: Path) -> Array:
    return decode_feature(path.read_bytes(), str(path))


def segment_boundaries(
    frames: int, segments: int, granularity: int = 1
) -> list[tuple[int, int]]:
    """Half-open frame ranges of the ``granularity * segments`` segments.

    Range ``i`` is ``[floor(i*N/S), floor((i+1)*N/S))`` with ``S = G*T``; when
    ``N < S`` a range that would be empty is widened to one frame, so frames
    repeat instead.
    """
    if frames < 1 or segments < 1:
        raise RejectedInputError(
            f"need at least one frame and segment, got N={frames}, T={segments}"
        )
    if granularity not in (1, 2, 3):
        raise RejectedInputError(f"granularity must be 1, 2 or 3, not {granularity}")
    count = granularity * segments
    ranges = []
    for i in range(count):
        start = i * frames // count
        ranges.append((start, max((i + 1) * frames // count, start + 1)))
    return ranges

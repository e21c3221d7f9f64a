import struct
from pathlib import Path

import numpy as np
import pytest

from hsnvad.errors import CorruptFileError, RejectedInputError
from hsnvad.features import (
    decode_feature,
    encode_feature,
    header_size,
    read_feature,
    segment_boundaries,
    write_feature,
)


@pytest.mark.parametrize("precision", (32, 64))
def test_file_round_trip(tmp_path: Path, precision: int) -> None:
    values = np.random.default_rng(0).normal(size=(4, 3, 2)).astype(np.float32)
    path = tmp_path / "x.hsnf"
    write_feature(path, values, precision)  # type: ignore[arg-type]
    loaded = read_feature(path)
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded, values.astype(np.float64))


def test_header_layout() -> None:
    assert header_size(3) == 20
    data = encode_feature(np.zeros((2, 5, 1)), precision=32)
    assert data[:4] == b"HSNF"
    assert data[4:8] == bytes([1, 0, 0, 3])
    assert struct.unpack("<3I", data[8:20]) == (2, 5, 1)
    assert len(data) == 20 + 10 * 4


@pytest.mark.parametrize("shape", ((), (1, 1, 1, 1, 1)))
def test_rejects_dimension_count(shape: tuple[int, ...]) -> None:
    with pytest.raises(RejectedInputError, match="dimension"):
        encode_feature(np.zeros(shape))


def test_rejects_precision() -> None:
    with pytest.raises(RejectedInputError, match="precision must be 32 or 64"):
        encode_feature(np.zeros(3), precision=16)  # type: ignore[arg-type]


@pytest.mark.parametrize(
    ("data", "message"),
    (
        (b"HSN", "truncated header"),
        (b"XXXX\x01\x00\x01\x01\x01\x00\x00\x00", "bad magic"),
        (b"HSNF\x02\x00\x01\x01\x01\x00\x00\x00", "unsupported version"),
        (b"HSNF\x01\x00\x05\x01\x01\x00\x00\x00", "unknown precision tag"),
        (b"HSNF\x01\x00\x01\x00", "invalid dimension count"),
        (b"HSNF\x01\x00\x01\x05", "invalid dimension count"),
        (b"HSNF\x01\x00\x01\x02\x01\x00\x00\x00", "truncated extents"),
        (b"HSNF\x01\x00\x01\x01\x02\x00\x00\x00" + bytes(8), "payload has 8 bytes"),
    ),
)
def test_corrupt_containers(data: bytes, message: str) -> None:
    with pytest.raises(CorruptFileError, match=message):
        decode_feature(data)


def test_trailing_bytes_are_corrupt() -> None:
    data = encode_feature(np.ones(2)) + b"\x00"
    with pytest.raises(CorruptFileError, match="expected 16"):
        decode_feature(data)


def test_segment_boundaries_repeat_frames() -> None:
    assert segment_boundaries(2, 4, 1) == [(0, 1), (0, 1), (1, 2), (1, 2)]


def test_segment_boundaries_floor_split() -> None:
    assert segment_boundaries(7, 2) == [(0, 3), (3, 7)]


def test_segment_boundaries_even_split() -> None:
    ranges = segment_boundaries(12, 2, 3)
    assert ranges == [(0, 2), (2, 4), (4, 6), (6, 8), (8, 10), (10, 12)]


@pytest.mark.parametrize("frames", (7, 32, 100, 257))
@pytest.mark.parametrize("granularity", (1, 2, 3))
def test_segment_boundaries_partition(frames: int, granularity: int) -> None:
    ranges = segment_boundaries(frames, 8, granularity)
    assert len(ranges) == 8 * granularity
    assert ranges[0][0] == 0
    assert ranges[-1][1] == frames
    assert all(end > start for start, end in ranges)
    if frames >= 8 * granularity:
        assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))
    covered = set()
    for start, end in ranges:
        covered.update(range(start, end))
    assert covered == set(range(frames))


@pytest.mark.parametrize(
    ("frames", "segments", "granularity", "message"),
    (
        (0, 4, 1, "at least one frame"),
        (8, 0, 1, "at least one frame"),
        (8, 4, 4, "granularity must be 1, 2 or 3"),
    ),
)
def test_segment_boundaries_errors(
    frames: int, segments: int, granularity: int, message: str
) -> None:
    with pytest.raises(RejectedInputError, match=message):
        segment_boundaries(frames, segments, granularity)

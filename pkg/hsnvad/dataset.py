"""Dataset manifests and validated per-video feature collections.

A manifest is a YAML document::

    format: 1
    segments: 8
    videos:
      - id: train_anomaly_000
        label: anomaly            # normal | anomaly
        category: scene
        split: train              # train | test
        frames: 32
        scene: [a_g1.hsnf, a_g2.hsnf, a_g3.hsnf]
        tracklets: a_tracklets.hsnf
        annotations: a_frames.txt # one 0/1 per line, optional
        span: [10, 20]            # optional ground truth from the generator
        planted_tracklet: 2       # optional ground truth from the generator

Paths are relative to the manifest's directory.
"""

from __future__ import annotations

import logging
import typing
from pathlib import Path

import numpy as np
import numpy.typing as npt
import yaml

from .errors import DatasetError
from .features import read_feature
from .human import TrackletMap, tracklet_map
from .lint import ListOf, OneOf, Schema, lint

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = 1
MANIFEST_NAME = "manifest.yaml"
Label = typing.Literal["normal", "anomaly"]
Split = typing.Literal["train", "test"]

MANIFEST_SCHEMA: Schema = {
    "format": int,
    "segments": int,
    "selected": int,
    "videos": ListOf(dict),
}
RECORD_SCHEMA: Schema = {
    "id": str,
    "label": OneOf(("normal", "anomaly")),
    "category": str,
    "split": OneOf(("train", "test")),
    "frames": int,
    "scene": ListOf(str, 3),
    "tracklets": str,
    "tracklet_ids": ListOf(int),
    "annotations": str,
    "span": ListOf(int, 2),
    "planted_tracklet": int,
}


class VideoRecord(typing.NamedTuple):
    id: str
    label: Label
    category: str
    frames: int
    scene: tuple[str, str, str]
    tracklets: str
    split: Split = "train"
    annotations: str | None = None
    tracklet_ids: tuple[int, ...] | None = None
    span: tuple[int, int] | None = None
    planted_tracklet: int | None = None


class Manifest(typing.NamedTuple):
    segments: int
    videos: tuple[VideoRecord, ...]
    selected: int | None = None


class VideoFeatures(typing.NamedTuple):
    id: str
    label: Label
    category: str
    frames: int
    scene: tuple[npt.NDArray[np.float64], ...]  # G=1, 2, 3: T, 2T, 3T x n
    tracklets: TrackletMap
    annotations: npt.NDArray[np.int8] | None
    split: Split = "train"

    @property
    def segments(self) -> int:
        return self.scene[0].shape[0]

    @property
    def channels(self) -> int:
        return self.scene[0].shape[1]

    @property
    def is_anomaly(self) -> bool:
        return self.label == "anomaly"

    def frame_labels(self) -> npt.NDArray[np.int8]:
        if self.annotations is not None:
            return self.annotations
        return np.zeros(self.frames, dtype=np.int8)


class Dataset(typing.NamedTuple):
    videos: tuple[VideoFeatures, ...]
    segments: int
    channels: int

    def subset(self, indices: typing.Iterable[int]) -> Dataset:
        return self._replace(videos=tuple(self.videos[i] for i in indices))

    def split(self, name: Split) -> Dataset:
        return self._replace(videos=tuple(v for v in self.videos if v.split == name))

    def evaluation_split(self) -> Dataset:
        """The test videos, or every video when the dataset has no test split."""
        test = self.split("test")
        return test if test.videos else self

    @property
    def anomalies(self) -> tuple[VideoFeatures, ...]:
        return tuple(v for v in self.videos if v.is_anomaly)

    @property
    def normals(self) -> tuple[VideoFeatures, ...]:
        return tuple(v for v in self.videos if not v.is_anomaly)


def _record(entry: dict[str, typing.Any], position: int) -> VideoRecord:
    issue = lint(
        entry,
        RECORD_SCHEMA,
        required=("id", "label", "frames", "scene", "tracklets"),
    )
    if issue:
        raise DatasetError(f"video #{position}: {issue}")
    if entry["frames"] < 1:
        raise DatasetError(f"video {entry['id']!r}: frame count must be positive")
    return VideoRecord(
        id=entry["id"],
        label=entry["label"],
        category=entry.get("category", entry["label"]),
        frames=entry["frames"],
        scene=tuple(entry["scene"]),  # type: ignore[arg-type]
        tracklets=entry["tracklets"],
        split=entry.get("split", "train"),
        annotations=entry.get("annotations"),
        tracklet_ids=tuple(entry["tracklet_ids"]) if "tracklet_ids" in entry else None,
        span=(entry["span"][0], entry["span"][1]) if "span" in entry else None,
        planted_tracklet=entry.get("planted_tracklet"),
    )


def load_manifest(path: Path) -> Manifest:
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise DatasetError(f"{path}: not a YAML document ({e})") from None
    issue = lint(document, MANIFEST_SCHEMA, required=("segments", "videos"))
    if issue:
        raise DatasetError(f"{path}: {issue}")
    if document.get("format", MANIFEST_FORMAT) != MANIFEST_FORMAT:
        raise DatasetError(f"{path}: unsupported manifest format {document['format']}")
    if document["segments"] < 1:
        raise DatasetError(f"{path}: segments must be positive")
    videos = tuple(
        _record(entry, position) for position, entry in enumerate(document["videos"])
    )
    return Manifest(document["segments"], videos, document.get("selected"))


def dump_manifest(manifest: Manifest, path: Path) -> None:
    videos = []
    for record in manifest.videos:
        entry: dict[str, typing.Any] = {}
        for key, value in record._asdict().items():
            if value is None:
                continue
            entry[key] = list(value) if isinstance(value, tuple) else value
        videos.append(entry)
    document: dict[str, typing.Any] = {
        "format": MANIFEST_FORMAT,
        "segments": manifest.segments,
    }
    if manifest.selected is not None:
        document["selected"] = manifest.selected
    document["videos"] = videos
    path.write_text(yaml.safe_dump(document, sort_keys=False))


def read_annotations(path: Path) -> npt.NDArray[np.int8]:
    lines = path.read_text().split()
    if any(line not in ("0", "1") for line in lines):
        raise DatasetError(f"{path}: annotations must be one 0 or 1 per line")
    return np.array([int(line) for line in lines], dtype=np.int8)


def write_annotations(path: Path, labels: npt.ArrayLike) -> None:
    path.write_text("".join(f"{int(label)}\n" for label in np.asarray(labels)))


def _load_video(record: VideoRecord, root: Path, segments: int) -> VideoFeatures:
    def fail(file: str, problem: str) -> DatasetError:
        return DatasetError(f"video {record.id!r}: {file}: {problem}")

    maps = []
    for granularity, file in enumerate(record.scene, start=1):
        path = root / file
        if not path.is_file():
            raise fail(file, "file not found")
        values = read_feature(path)
        if values.ndim != 2 or values.shape[0] != granularity * segments:
            raise fail(
                file,
                f"scene map has shape {values.shape}, expected "
                f"({granularity * segments}, n)",
            )
        maps.append(values)
    channels = maps[0].shape[1]
    for file, values in zip(record.scene, maps):
        if values.shape[1] != channels:
            raise fail(file, f"has {values.shape[1]} channels, expected {channels}")

    path = root / record.tracklets
    if not path.is_file():
        raise fail(record.tracklets, "file not found")
    features = read_feature(path)
    if (
        features.ndim != 3
        or features.shape[0] != segments
        or features.shape[2] != channels
    ):
        raise fail(
            record.tracklets,
            f"tracklet map has shape {features.shape}, expected "
            f"({segments}, k, {channels})",
        )
    try:
        tracklets = tracklet_map(features, record.tracklet_ids)
    except ValueError as e:
        raise fail(record.tracklets, str(e)) from None

    annotations = None
    if record.annotations is not None:
        path = root / record.annotations
        if not path.is_file():
            raise fail(record.annotations, "file not found")
        annotations = read_annotations(path)
        if annotations.size != record.frames:
            raise fail(
                record.annotations,
                f"has {annotations.size} lines, expected {record.frames}",
            )
    elif record.split == "test" and record.label == "anomaly":
        raise DatasetError(f"video {record.id!r}: test anomaly lacks annotations")

    return VideoFeatures(
        id=record.id,
        label=record.label,
        category=record.category,
        frames=record.frames,
        scene=tuple(maps),
        tracklets=tracklets,
        annotations=annotations,
        split=record.split,
    )


def load_dataset(path: Path) -> Dataset:
    """Load and validate every video of a manifest (file or its directory)."""
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    manifest = load_manifest(path)
    videos = tuple(
        _load_video(record, path.parent, manifest.segments)
        for record in manifest.videos
    )

    channels = videos[0].channels if videos else 0
    for video in videos:
        if video.channels != channels:
            raise DatasetError(
                f"video {video.id!r}: {video.scene[0].shape[1]} channels, "
                f"other videos have {channels}"
            )
    seen = set()
    for video in videos:
        if video.id in seen:
            raise DatasetError(f"duplicate video id: {video.id!r}")
        seen.add(video.id)

    logger.info(
        "loaded %d videos (%d anomaly) from %s, T=%d, n=%d",
        len(videos),
        sum(v.is_anomaly for v in videos),
        path,
        manifest.segments,
        channels,
    )
    return Dataset(videos, manifest.segments, channels)

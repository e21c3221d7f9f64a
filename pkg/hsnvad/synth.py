"""Synthetic feature datasets with planted scene and human anomalies.

Every video draws per-frame latents; its scene maps at G=1, 2, 3 mean-pool
those latents over :func:`segment_boundaries`, so the granularities stay
coherent. Tracklets are independent noise per segment. Anomalies add a
magnitude ``mu`` along a fixed unit direction inside one contiguous span:
``scene`` to the frame latents, ``human`` to one tracklet.
"""

from __future__ import annotations

import logging
import typing
from pathlib import Path

import numpy as np
import yaml

from .dataset import (
    MANIFEST_NAME,
    Label,
    Manifest,
    Split,
    VideoRecord,
    dump_manifest,
    write_annotations,
)
from .errors import ConfigError
from .features import Precision, segment_boundaries, write_feature
from .lint import ListOf, OneOf, Schema, lint
from .tensor import Array

logger = logging.getLogger(__name__)

Kind = typing.Literal["scene", "human", "mixed", "alternate"]


class SynthSpec(typing.NamedTuple):
    normal: int = 10
    anomaly: int = 10
    test_normal: int = 0
    test_anomaly: int = 0
    segments: int = 8
    frames_per_segment: int = 4
    channels: int = 16
    tracklets: int = 4
    selected: int = 2
    kind: Kind = "scene"
    duration: tuple[float, float] = (0.1, 0.5)
    magnitude: float = 4.0
    noise: float = 1.0
    seed: int = 0
    precision: Precision = 64

    def check(self) -> None:
        low, high = self.duration
        if not 0.0 < low <= high <= 1.0:
            raise ConfigError(f"duration range must lie in (0, 1], not {self.duration}")
        if self.magnitude <= 0.0 or self.noise < 0.0:
            raise ConfigError("magnitude must be positive and noise non-negative")
        for name in ("segments", "frames_per_segment", "channels", "selected"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("normal", "anomaly", "test_normal", "test_anomaly", "tracklets"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


SPEC_SCHEMA: Schema = {
    "normal": int,
    "anomaly": int,
    "test_normal": int,
    "test_anomaly": int,
    "segments": int,
    "frames_per_segment": int,
    "channels": int,
    "tracklets": int,
    "selected": int,
    "kind": OneOf(typing.get_args(Kind)),
    "duration": ListOf(float, 2),
    "magnitude": float,
    "noise": float,
    "seed": int,
    "precision": OneOf(("32", "64")),
}


def parse_synth_spec(document: typing.Any) -> SynthSpec:
    if isinstance(document, dict) and "precision" in document:
        document = {**document, "precision": str(document["precision"])}
    issue = lint(document, SPEC_SCHEMA)
    if issue:
        raise ConfigError(issue)
    fields: dict[str, typing.Any] = dict(document)
    for key, value in fields.items():
        if SPEC_SCHEMA[key] is float:
            fields[key] = float(value)
    if "duration" in fields:
        low, high = fields["duration"]
        fields["duration"] = (float(low), float(high))
    if "precision" in fields:
        fields["precision"] = int(fields["precision"])
    spec = SynthSpec(**fields)
    spec.check()
    return spec


def load_synth_spec(path: Path) -> SynthSpec:
    if not path.is_file():
        raise ConfigError(f"dataset spec not found: {path}")
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not a YAML document ({e})") from None
    return parse_synth_spec(document or {})


def pool_segments(latents: Array, segments: int, granularity: int) -> Array:
    ranges = segment_boundaries(latents.shape[0], segments, granularity)
    return np.stack([latents[start:end].mean(axis=0) for start, end in ranges])


def _unit(rng: np.random.Generator, channels: int) -> Array:
    direction = rng.normal(size=channels)
    return typing.cast(Array, direction / np.linalg.norm(direction))


class _Planted(typing.NamedTuple):
    category: str
    span: tuple[int, int] | None
    tracklet: int | None


def _plant_kind(spec: SynthSpec, position: int) -> str:
    if spec.kind == "alternate":
        return "scene" if position % 2 == 0 else "human"
    return spec.kind


def synthesize_dataset(spec: SynthSpec, out_dir: Path) -> Path:
    """Write feature files, annotations and the manifest; return its path."""
    spec.check()
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    scene_direction = _unit(rng, spec.channels)
    human_direction = _unit(rng, spec.channels)
    frames = spec.segments * spec.frames_per_segment
    fine = segment_boundaries(frames, spec.segments, 1)

    layout: list[tuple[Split, Label, int]] = [
        ("train", "normal", spec.normal),
        ("train", "anomaly", spec.anomaly),
        ("test", "normal", spec.test_normal),
        ("test", "anomaly", spec.test_anomaly),
    ]
    records = []
    for split, label, count in layout:
        for position in range(count):
            video_id = f"{split}_{label}_{position:03d}"
            latents = rng.normal(0.0, spec.noise, (frames, spec.channels))
            tracklets = rng.normal(
                0.0, spec.noise, (spec.segments, spec.tracklets, spec.channels)
            )
            labels = np.zeros(frames, dtype=np.int8)
            planted = _Planted(label, None, None)

            if label == "anomaly":
                kind = _plant_kind(spec, position)
                low, high = spec.duration
                length = max(1, round(rng.uniform(low, high) * frames))
                start = int(rng.integers(0, frames - length + 1))
                end = start + length
                labels[start:end] = 1
                tracklet = None
                if kind in ("scene", "mixed"):
                    latents[start:end] += spec.magnitude * scene_direction
                if kind in ("human", "mixed") and spec.tracklets > 0:
                    tracklet = int(rng.integers(spec.tracklets))
                    for segment, (first, last) in enumerate(fine):
                        overlap = max(0, min(end, last) - max(start, first))
                        tracklets[segment, tracklet] += (
                            spec.magnitude * overlap / (last - first) * human_direction
                        )
                planted = _Planted(kind, (start, end), tracklet)

            scene_files = []
            for granularity in (1, 2, 3):
                file = f"{video_id}_g{granularity}.hsnf"
                write_feature(
                    out_dir / file,
                    pool_segments(latents, spec.segments, granularity),
                    spec.precision,
                )
                scene_files.append(file)
            tracklet_file = f"{video_id}_tracklets.hsnf"
            write_feature(out_dir / tracklet_file, tracklets, spec.precision)
            annotation_file = f"{video_id}_frames.txt"
            write_annotations(out_dir / annotation_file, labels)

            records.append(
                VideoRecord(
                    id=video_id,
                    label=label,
                    category=planted.category,
                    frames=frames,
                    scene=typing.cast(tuple[str, str, str], tuple(scene_files)),
                    tracklets=tracklet_file,
                    split=split,
                    annotations=annotation_file,
                    span=planted.span,
                    planted_tracklet=planted.tracklet,
                )
            )

    path = out_dir / MANIFEST_NAME
    dump_manifest(Manifest(spec.segments, tuple(records), spec.selected), path)
    logger.info("synthesized %d videos into %s", len(records), out_dir)
    return path

import typing
from pathlib import Path

import numpy as np
import pytest
import yaml

from hsnvad.dataset import (
    MANIFEST_NAME,
    Dataset,
    load_dataset,
    load_manifest,
    read_annotations,
)
from hsnvad.errors import DatasetError
from hsnvad.features import write_feature


def edit_manifest(
    root: Path, change: typing.Callable[[dict[str, typing.Any]], None]
) -> None:
    path = root / MANIFEST_NAME
    document = yaml.safe_load(path.read_text())
    change(document)
    path.write_text(yaml.safe_dump(document, sort_keys=False))


def test_load_synthesized(tiny_dataset: Dataset) -> None:
    assert len(tiny_dataset.videos) == 10
    assert tiny_dataset.segments == 4
    assert tiny_dataset.channels == 4
    video = tiny_dataset.videos[0]
    assert [m.shape for m in video.scene] == [(4, 4), (8, 4), (12, 4)]
    assert video.tracklets.features.shape == (4, 3, 4)
    assert video.frame_labels().shape == (12,)


def test_splits(tiny_dataset: Dataset) -> None:
    train, test = tiny_dataset.split("train"), tiny_dataset.split("test")
    assert (len(train.videos), len(test.videos)) == (6, 4)
    assert [v.id for v in tiny_dataset.evaluation_split().videos] == [
        v.id for v in test.videos
    ]
    assert len(train.evaluation_split().videos) == 6
    assert all(v.split == "test" for v in test.videos)
    assert len(test.anomalies) == len(test.normals) == 2


def test_empty_manifest(tmp_path: Path) -> None:
    (tmp_path / MANIFEST_NAME).write_text("segments: 4\nvideos: []\n")
    dataset = load_dataset(tmp_path)
    assert dataset.videos == ()
    assert dataset.channels == 0


def test_manifest_not_found(tmp_path: Path) -> None:
    with pytest.raises(DatasetError, match="manifest not found"):
        load_dataset(tmp_path)


@pytest.mark.parametrize(
    ("text", "message"),
    (
        ("- 1\n", "document must be a mapping"),
        ("videos: []\n", "missing field: 'segments'"),
        ("segments: 4\nvideos: []\nextra: 1\n", "unknown field: 'extra'"),
        ("segments: four\nvideos: []\n", "field 'segments' has incorrect type"),
        ("format: 2\nsegments: 4\nvideos: []\n", "unsupported manifest format"),
        ("segments: 0\nvideos: []\n", "segments must be positive"),
        ("segments: [\n", "not a YAML document"),
    ),
)
def test_manifest_lint(tmp_path: Path, text: str, message: str) -> None:
    path = tmp_path / MANIFEST_NAME
    path.write_text(text)
    with pytest.raises(DatasetError, match=message):
        load_manifest(path)


def test_record_lint(tiny_data: Path) -> None:
    def change(document: dict[str, typing.Any]) -> None:
        document["videos"][2]["label"] = "weird"

    edit_manifest(tiny_data, change)
    with pytest.raises(DatasetError, match="video #2: field 'label' has invalid"):
        load_dataset(tiny_data)


def test_wrong_scene_length(tiny_data: Path, tiny_dataset: Dataset) -> None:
    video = tiny_dataset.videos[1]
    write_feature(tiny_data / f"{video.id}_g2.hsnf", np.zeros((7, 4)))
    with pytest.raises(DatasetError, match=r"expected \(8, n\)"):
        load_dataset(tiny_data)


def test_mixed_channel_counts(tiny_data: Path, tiny_dataset: Dataset) -> None:
    video = tiny_dataset.videos[3]
    for granularity in (1, 2, 3):
        write_feature(
            tiny_data / f"{video.id}_g{granularity}.hsnf",
            np.zeros((4 * granularity, 5)),
        )
    write_feature(tiny_data / f"{video.id}_tracklets.hsnf", np.zeros((4, 3, 5)))
    with pytest.raises(DatasetError, match="5 channels, other videos have 4"):
        load_dataset(tiny_data)


def test_channel_mismatch_inside_video(
    tiny_data: Path, tiny_dataset: Dataset
) -> None:
    video = tiny_dataset.videos[0]
    write_feature(tiny_data / f"{video.id}_g3.hsnf", np.zeros((12, 5)))
    with pytest.raises(DatasetError, match="has 5 channels, expected 4"):
        load_dataset(tiny_data)


def test_tracklet_shape(tiny_data: Path, tiny_dataset: Dataset) -> None:
    video = tiny_dataset.videos[0]
    write_feature(tiny_data / f"{video.id}_tracklets.hsnf", np.zeros((3, 2, 4)))
    with pytest.raises(DatasetError, match="tracklet map has shape"):
        load_dataset(tiny_data)


def test_missing_feature_file(tiny_data: Path, tiny_dataset: Dataset) -> None:
    (tiny_data / f"{tiny_dataset.videos[4].id}_tracklets.hsnf").unlink()
    with pytest.raises(DatasetError, match="file not found"):
        load_dataset(tiny_data)


def test_test_anomaly_needs_annotations(tiny_data: Path) -> None:
    def change(document: dict[str, typing.Any]) -> None:
        for entry in document["videos"]:
            entry.pop("annotations")

    edit_manifest(tiny_data, change)
    with pytest.raises(DatasetError, match="test anomaly lacks annotations"):
        load_dataset(tiny_data)


def test_training_videos_need_no_annotations(tiny_data: Path) -> None:
    def change(document: dict[str, typing.Any]) -> None:
        document["videos"] = [e for e in document["videos"] if e["split"] == "train"]
        for entry in document["videos"]:
            entry.pop("annotations")

    edit_manifest(tiny_data, change)
    dataset = load_dataset(tiny_data)
    assert all(v.annotations is None for v in dataset.videos)
    assert not dataset.anomalies[0].frame_labels().any()


def test_annotation_count(tiny_data: Path, tiny_dataset: Dataset) -> None:
    path = tiny_data / f"{tiny_dataset.videos[5].id}_frames.txt"
    path.write_text("0\n1\n")
    with pytest.raises(DatasetError, match="has 2 lines, expected 12"):
        load_dataset(tiny_data)


def test_annotation_values(tmp_path: Path) -> None:
    path = tmp_path / "frames.txt"
    path.write_text("0\n1\n1\n")
    assert read_annotations(path).tolist() == [0, 1, 1]
    path.write_text("0\n2\n")
    with pytest.raises(DatasetError, match="one 0 or 1 per line"):
        read_annotations(path)


def test_duplicate_ids(tiny_data: Path) -> None:
    def change(document: dict[str, typing.Any]) -> None:
        document["videos"][1]["id"] = document["videos"][0]["id"]

    edit_manifest(tiny_data, change)
    with pytest.raises(DatasetError, match="duplicate video id"):
        load_dataset(tiny_data)

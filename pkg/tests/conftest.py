from pathlib import Path

import pytest

from hsnvad.dataset import Dataset, load_dataset
from hsnvad.params import HyperParams
from hsnvad.synth import SynthSpec, synthesize_dataset

TINY_SPEC = SynthSpec(
    normal=3,
    anomaly=3,
    test_normal=2,
    test_anomaly=2,
    segments=4,
    frames_per_segment=3,
    channels=4,
    tracklets=3,
    selected=2,
    kind="mixed",
)
TINY_HYPER = HyperParams(
    segments=4, channels=4, conv_channels=4, hidden=4, selected=2, ranker_width=4
)


@pytest.fixture
def tiny_data(tmp_path: Path) -> Path:
    return synthesize_dataset(TINY_SPEC, tmp_path / "data").parent


@pytest.fixture
def tiny_dataset(tiny_data: Path) -> Dataset:
    return load_dataset(tiny_data)

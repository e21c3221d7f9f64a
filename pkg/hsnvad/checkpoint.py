"""Checkpoints: a YAML index plus one ``HSNF`` payload per parameter tensor."""

from __future__ import annotations

import logging
import typing
from pathlib import Path

import yaml

from .errors import RejectedInputError
from .features import read_feature, write_feature
from .model import HsnModel
from .params import HyperParams
from .train import TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
INDEX_NAME = "checkpoint.yaml"


def save_checkpoint(model: HsnModel, config: TrainConfig, directory: Path) -> Path:
    """Write the checkpoint under ``directory`` and return the index path."""
    tensor_dir = directory / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    index: dict[str, dict[str, typing.Any]] = {}
    for name, tensor in model.named_tensors().items():
        file = f"tensors/{name}.hsnf"
        write_feature(directory / file, tensor.values, precision=64)
        index[name] = {"file": file, "shape": list(tensor.shape)}

    train = config._asdict()
    train["betas"] = list(config.betas)
    document = {
        "format": CHECKPOINT_FORMAT,
        "updates": model.updates,
        "hyper": model.hyper._asdict(),
        "train": train,
        "tensors": index,
    }
    path = directory / INDEX_NAME
    path.write_text(yaml.safe_dump(document, sort_keys=False))
    logger.info("saved %d tensors to %s", len(index), path)
    return path


def load_checkpoint(path: Path) -> tuple[HsnModel, TrainConfig]:
    if path.is_dir():
        path = path / INDEX_NAME
    if not path.is_file():
        raise RejectedInputError(f"checkpoint not found: {path}")
    document = yaml.safe_load(path.read_text())
    if not isinstance(document, dict) or document.get("format") != CHECKPOINT_FORMAT:
        raise RejectedInputError(
            f"{path}: not a version {CHECKPOINT_FORMAT} checkpoint"
        )

    try:
        hyper = HyperParams(**document["hyper"])
        train = dict(document["train"])
        train["betas"] = tuple(train["betas"])
        config = TrainConfig(**train)
    except (KeyError, TypeError) as e:
        raise RejectedInputError(f"{path}: malformed checkpoint ({e})") from None

    model = HsnModel(hyper)
    index = document.get("tensors", {})
    expected = model.named_tensors()
    for name in index:
        if name not in expected:
            raise RejectedInputError(f"{path}: unexpected tensor {name!r}")
    for name, tensor in expected.items():
        if name not in index:
            raise RejectedInputError(f"{path}: missing tensor {name!r}")
        values = read_feature(path.parent / index[name]["file"])
        if values.shape != tensor.shape:
            raise RejectedInputError(
                f"{path}: tensor {name!r} has shape {values.shape}, "
                f"model expects {tensor.shape}"
            )
        tensor.values[...] = values
    model.updates = int(document.get("updates", 0))
    return model, config

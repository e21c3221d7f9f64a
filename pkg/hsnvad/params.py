from __future__ import annotations

import math
import typing

import numpy as np

from .errors import RejectedInputError
from .tensor import Tensor, affine

SubnetMode = typing.Literal["both", "scene", "human"]
CouplerMode = typing.Literal["sls", "sls+vls"]


class HyperParams(typing.NamedTuple):
    segments: int = 32
    channels: int = 0  # 0: taken from the dataset
    conv_channels: int = 512
    hidden: int = 512
    selected: int = 3
    ranker_width: int = 64
    subnets: SubnetMode = "both"
    coupler: CouplerMode = "sls+vls"
    mgtm: bool = True
    tsrm: bool = True

    def check(self) -> None:
        for name in (
            "segments",
            "channels",
            "conv_channels",
            "hidden",
            "selected",
            "ranker_width",
        ):
            if getattr(self, name) < 1:
                raise RejectedInputError(
                    f"{name} must be positive, not {getattr(self, name)}"
                )


class DenseParams(typing.NamedTuple):
    weight: Tensor
    bias: Tensor


class ConvParams(typing.NamedTuple):
    weight: Tensor  # k x C_in x C_out
    bias: Tensor


class LstmParams(typing.NamedTuple):
    input_weight: Tensor
    hidden_weight: Tensor
    bias: Tensor


class RankerParams(typing.NamedTuple):
    hidden: DenseParams
    intermediate: DenseParams
    output: DenseParams


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)


def init_dense(rng: np.random.Generator, inputs: int, outputs: int) -> DenseParams:
    return DenseParams(
        _uniform(rng, (inputs, outputs), inputs), _uniform(rng, (outputs,), inputs)
    )


def init_conv(
    rng: np.random.Generator, kernel: int, inputs: int, outputs: int
) -> ConvParams:
    fan_in = kernel * inputs
    return ConvParams(
        _uniform(rng, (kernel, inputs, outputs), fan_in),
        _uniform(rng, (outputs,), fan_in),
    )


def init_lstm(rng: np.random.Generator, inputs: int, hidden: int) -> LstmParams:
    fan_in = inputs + hidden
    return LstmParams(
        _uniform(rng, (inputs, 4 * hidden), fan_in),
        _uniform(rng, (hidden, 4 * hidden), fan_in),
        _uniform(rng, (4 * hidden,), fan_in),
    )


def init_ranker(rng: np.random.Generator, inputs: int, width: int) -> RankerParams:
    return RankerParams(
        init_dense(rng, inputs, width),
        init_dense(rng, width, width),
        init_dense(rng, width, 1),
    )


def rank(features: Tensor, params: RankerParams) -> tuple[Tensor, Tensor]:
    """Score every row of ``features``; returns (scores ``... x 1``, intermediate)."""
    hidden = affine(features, *params.hidden, activation="relu")
    intermediate = affine(hidden, *params.intermediate, activation="relu")
    scores = affine(intermediate, *params.output, activation="sigmoid")
    return scores, intermediate


def named_tensors(record: typing.Any, prefix: str = "") -> dict[str, Tensor]:
    """Flatten nested parameter records into dotted names, skipping ``None``."""
    if isinstance(record, Tensor):
        return {prefix: record}
    if record is None:
        return {}
    if isinstance(record, tuple) and hasattr(record, "_fields"):
        items = zip(record._fields, record)
    elif isinstance(record, tuple):
        items = zip((str(i) for i in range(len(record))), record)
    else:
        raise RuntimeError(f"unknown parameter record: {record!r}")

    found: dict[str, Tensor] = {}
    for name, value in items:
        found.update(named_tensors(value, f"{prefix}.{name}" if prefix else name))
    return found

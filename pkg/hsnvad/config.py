"""Run configuration: defaults < config file < ``--set`` overrides < flags.

A config file is one flat YAML mapping; every key is optional::

    segments: 8
    channels: 0          # 0: taken from the dataset
    subnets: both        # both | scene | human
    loss: self-rectifying
    lr: 0.001
    betas: [0.9, 0.999]
    data: data/
    out: runs/first
"""

from __future__ import annotations

import contextlib
import typing
from pathlib import Path

import yaml

from .errors import ConfigError
from .lint import ListOf, OneOf, Schema, lint
from .params import CouplerMode, HyperParams, SubnetMode
from .train import LossChoice, Schedule, TrainConfig

PATH_KEYS = ("data", "out", "ckpt")

CONFIG_SCHEMA: Schema = {
    "segments": int,
    "channels": int,
    "conv_channels": int,
    "hidden": int,
    "selected": int,
    "ranker_width": int,
    "subnets": OneOf(typing.get_args(SubnetMode)),
    "coupler": OneOf(typing.get_args(CouplerMode)),
    "mgtm": bool,
    "tsrm": bool,
    "lambda1": float,
    "lambda2": float,
    "lr": float,
    "betas": ListOf(float, 2),
    "steps": int,
    "seed": int,
    "schedule": OneOf(typing.get_args(Schedule)),
    "loss": OneOf(typing.get_args(LossChoice)),
    "batch": int,
    "normalize_context": bool,
    "holdout": float,
    "smoothness": float,
    "sparsity": float,
    "log_every": int,
    "data": str,
    "out": str,
    "ckpt": str,
}


class RunConfig(typing.NamedTuple):
    hyper: HyperParams = HyperParams()
    train: TrainConfig = TrainConfig()
    data: Path | None = None
    out: Path | None = None
    ckpt: Path | None = None


def _exponent(key: typing.Any, value: typing.Any) -> typing.Any:
    # YAML 1.1 reads exponents without a dot, such as 1e-3, as strings
    if isinstance(value, str) and CONFIG_SCHEMA.get(key) is float:
        with contextlib.suppress(ValueError):
            return float(value)
    return value


def load_config(path: Path) -> dict[str, typing.Any]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not a YAML document ({e})") from None
    document = {} if document is None else document
    if isinstance(document, dict):
        document = {key: _exponent(key, value) for key, value in document.items()}
    issue = lint(document, CONFIG_SCHEMA)
    if issue:
        raise ConfigError(f"{path}: {issue}")
    return typing.cast(dict[str, typing.Any], document)


def parse_override(text: str) -> tuple[str, typing.Any]:
    """``key=value`` with the value read as a YAML scalar or flow list."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, not {text!r}")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError:
        parsed = value
    parsed = _exponent(key, parsed)
    issue = lint({key: parsed}, CONFIG_SCHEMA)
    if issue:
        raise ConfigError(f"--set {text}: {issue}")
    return key, parsed


def build_config(*layers: typing.Mapping[str, typing.Any]) -> RunConfig:
    """Merge ``layers`` in order, later keys winning, onto the defaults."""
    merged: dict[str, typing.Any] = {}
    for layer in layers:
        merged.update(layer)
    issue = lint(merged, CONFIG_SCHEMA)
    if issue:
        raise ConfigError(issue)

    hyper_fields: dict[str, typing.Any] = {}
    train_fields: dict[str, typing.Any] = {}
    for key, value in merged.items():
        if CONFIG_SCHEMA[key] is float:
            value = float(value)
        if key == "betas":
            value = (float(value[0]), float(value[1]))
        if key in HyperParams._fields:
            hyper_fields[key] = value
        elif key in TrainConfig._fields:
            train_fields[key] = value

    hyper = HyperParams()._replace(**hyper_fields)
    train = TrainConfig()._replace(**train_fields)
    for name in ("segments", "conv_channels", "hidden", "selected", "ranker_width"):
        if getattr(hyper, name) < 1:
            raise ConfigError(f"{name} must be positive, not {getattr(hyper, name)}")
    if hyper.channels < 0:
        raise ConfigError(f"channels must be non-negative, not {hyper.channels}")
    if train.log_every < 1:
        raise ConfigError(f"log_every must be positive, not {train.log_every}")
    try:
        train.check()
    except ValueError as e:
        raise ConfigError(str(e)) from None

    paths = {key: Path(merged[key]) for key in PATH_KEYS if key in merged}
    return RunConfig(hyper, train, **paths)


def effective_config(run: RunConfig) -> dict[str, typing.Any]:
    """The flat document that reproduces ``run`` when loaded back."""
    document: dict[str, typing.Any] = {
        **run.hyper._asdict(),
        **run.train._asdict(),
    }
    document["betas"] = list(run.train.betas)
    for key in PATH_KEYS:
        value = getattr(run, key)
        if value is not None:
            document[key] = str(value)
    return document


def dump_config(run: RunConfig) -> str:
    return yaml.safe_dump(effective_config(run), sort_keys=False)

"""MIL bag training: Adam updates over (anomaly, normal) video pairs."""

from __future__ import annotations

import logging
import math
import typing

import numpy as np

from .dataset import Dataset, VideoFeatures
from .errors import RejectedInputError
from .loss import classical_ranking_loss, self_rectifying_loss
from .model import Group, Head, HsnModel
from .params import HyperParams
from .tensor import Array, Tape, Tensor

logger = logging.getLogger(__name__)

Schedule = typing.Literal["staged", "joint"]
LossChoice = typing.Literal["self-rectifying", "classical-ranking"]
BagPool = typing.Literal["all", "fit", "holdout"]
Pair = tuple[VideoFeatures, VideoFeatures]

# staged share of the step budget: scene, human, coupler
STAGED_WEIGHTS = (2, 2, 1)


class TrainConfig(typing.NamedTuple):
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    steps: int = 1000
    seed: int = 0
    schedule: Schedule = "staged"
    loss: LossChoice = "self-rectifying"
    batch: int = 1
    normalize_context: bool = False
    holdout: float = 0.25  # share of each class kept from the staged subnets
    smoothness: float = 0.0
    sparsity: float = 0.0
    log_every: int = 100

    def check(self) -> None:
        if self.lr < 0.0 or self.steps < 1 or self.batch < 1:
            raise RejectedInputError(
                f"need lr >= 0, steps >= 1 and batch >= 1, got lr={self.lr}, "
                f"steps={self.steps}, batch={self.batch}"
            )
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise RejectedInputError("loss weights must be non-negative")
        if not 0.0 <= self.holdout < 1.0:
            raise RejectedInputError(
                f"holdout must be a fraction in [0, 1), not {self.holdout}"
            )
        if not all(0.0 <= beta < 1.0 for beta in self.betas):
            raise RejectedInputError(f"decay pair must lie in [0, 1): {self.betas}")


class Phase(typing.NamedTuple):
    name: str
    groups: tuple[Group, ...]
    head: Head
    steps: int
    bags: BagPool = "all"


class Bags(typing.NamedTuple):
    anomalies: tuple[VideoFeatures, ...]
    normals: tuple[VideoFeatures, ...]


class TrainResult(typing.NamedTuple):
    model: HsnModel
    losses: list[float]
    phases: list[Phase]


class Adam:
    def __init__(
        self,
        tensors: dict[str, Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        epsilon: float = 1e-8,
    ) -> None:
        self.tensors = tensors
        self.lr = lr
        self.betas = betas
        self.epsilon = epsilon
        self.count = 0
        self.first: dict[str, Array] = {
            name: np.zeros_like(t.values) for name, t in tensors.items()
        }
        self.second: dict[str, Array] = {
            name: np.zeros_like(t.values) for name, t in tensors.items()
        }

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.grad = None

    def step(self) -> None:
        self.count += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1**self.count
        correction2 = 1.0 - beta2**self.count
        for name, tensor in self.tensors.items():
            if tensor.grad is None:
                continue
            first = self.first[name]
            second = self.second[name]
            first *= beta1
            first += (1.0 - beta1) * tensor.grad
            second *= beta2
            second += (1.0 - beta2) * tensor.grad * tensor.grad
            tensor.values -= (
                self.lr
                * (first / correction1)
                / (np.sqrt(second / correction2) + self.epsilon)
            )


def pair_loss(
    model: HsnModel,
    anomaly: VideoFeatures,
    normal: VideoFeatures,
    config: TrainConfig,
    head: Head,
) -> Tensor:
    d_a = model.forward(anomaly, head).score
    d_n = model.forward(normal, head).score
    match config.loss:
        case "self-rectifying":
            return self_rectifying_loss(
                d_a, d_n, config.lambda1, config.lambda2, config.normalize_context
            )
        case "classical-ranking":
            return classical_ranking_loss(
                d_a, d_n, config.smoothness, config.sparsity
            )
    raise RejectedInputError(f"unknown loss: {config.loss!r}")


def train_step(
    model: HsnModel,
    pairs: typing.Sequence[Pair],
    config: TrainConfig,
    optimizer: Adam,
    head: Head | None = None,
) -> float:
    """One optimizer update on the loss averaged over ``pairs``."""
    if not pairs:
        raise RejectedInputError("a training step needs at least one pair")
    head = head or model.default_head()
    for anomaly, normal in pairs:
        model.check(anomaly)
        model.check(normal)

    with Tape() as tape:
        loss = pair_loss(model, *pairs[0], config, head)
        for anomaly, normal in pairs[1:]:
            loss = loss + pair_loss(model, anomaly, normal, config, head)
        if len(pairs) > 1:
            loss = loss * (1.0 / len(pairs))
    if loss.requires_grad:
        optimizer.zero_grad()
        tape.backward(loss)
        optimizer.step()
        model.updates += 1
    return loss.item()


def plan_phases(hyper: HyperParams, config: TrainConfig) -> list[Phase]:
    """Phases in order, the step budget split by ``STAGED_WEIGHTS`` when staged.

    With a positive ``holdout`` the staged subnets fit one part of the bags and
    the coupler learns on the part they never saw.
    """
    weights: tuple[int, ...] = (1,)
    match hyper.subnets:
        case "scene":
            plan = [Phase("scene", ("scene",), "scene", 0)]
        case "human":
            plan = [Phase("human", ("human",), "tracklet", 0)]
        case _ if config.schedule == "joint":
            plan = [Phase("joint", ("scene", "human", "coupler"), "coupled", 0)]
        case _:
            fit: BagPool = "fit" if config.holdout > 0.0 else "all"
            held: BagPool = "holdout" if config.holdout > 0.0 else "all"
            plan = [
                Phase("scene", ("scene",), "scene", 0, fit),
                Phase("human", ("human",), "tracklet", 0, fit),
                Phase("coupler", ("coupler",), "coupled", 0, held),
            ]
            weights = STAGED_WEIGHTS
    ends = [
        config.steps * sum(weights[: i + 1]) // sum(weights) for i in range(len(plan))
    ]
    return [
        phase._replace(steps=end - start)
        for phase, start, end in zip(plan, [0, *ends[:-1]], ends)
    ]


def hold_out(
    videos: typing.Sequence[VideoFeatures], fraction: float, rng: np.random.Generator
) -> tuple[tuple[VideoFeatures, ...], tuple[VideoFeatures, ...]]:
    """Split ``videos`` into (fit, held) keeping manifest order within each part.

    Both parts are the whole sequence when there is nothing to hold out or a
    part would be empty.
    """
    count = min(len(videos) - 1, max(1, round(fraction * len(videos))))
    if fraction <= 0.0 or count < 1:
        return tuple(videos), tuple(videos)
    held = set(rng.permutation(len(videos))[:count].tolist())
    return (
        tuple(v for i, v in enumerate(videos) if i not in held),
        tuple(v for i, v in enumerate(videos) if i in held),
    )


def bag_pools(dataset: Dataset, config: TrainConfig) -> dict[BagPool, Bags]:
    rng = np.random.default_rng([config.seed, 2])
    fit_a, held_a = hold_out(dataset.anomalies, config.holdout, rng)
    fit_n, held_n = hold_out(dataset.normals, config.holdout, rng)
    return {
        "all": Bags(dataset.anomalies, dataset.normals),
        "fit": Bags(fit_a, fit_n),
        "holdout": Bags(held_a, held_n),
    }


def train(
    hyper: HyperParams,
    config: TrainConfig,
    dataset: Dataset,
    model: HsnModel | None = None,
) -> TrainResult:
    config.check()
    anomalies, normals = dataset.anomalies, dataset.normals
    if not anomalies or not normals:
        raise RejectedInputError(
            f"training needs both classes, got {len(anomalies)} anomaly and "
            f"{len(normals)} normal videos"
        )
    if dataset.segments != hyper.segments:
        raise RejectedInputError(
            f"dataset has T={dataset.segments} segments, model expects "
            f"T={hyper.segments}"
        )
    if hyper.channels == 0:
        hyper = hyper._replace(channels=dataset.channels)
    model = model or HsnModel(hyper, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    phases = plan_phases(hyper, config)
    pools = bag_pools(dataset, config)
    logger.info("training %s with %s loss, seed %d", hyper, config.loss, config.seed)
    if any(phase.bags == "holdout" for phase in phases):
        held = pools["holdout"]
        logger.info(
            "coupler bags: %d anomaly and %d normal videos held out",
            len(held.anomalies),
            len(held.normals),
        )

    losses: list[float] = []
    for number, phase in enumerate(phases, start=1):
        tensors = model.trainable(phase.groups)
        optimizer = Adam(tensors, config.lr, config.betas)
        bags = pools[phase.bags]
        logger.info(
            "phase %d/%d %s: %d steps on head %s, %d tensors",
            number,
            len(phases),
            phase.name,
            phase.steps,
            phase.head,
            len(tensors),
        )
        for step in range(phase.steps):
            pairs = [
                (
                    bags.anomalies[rng.integers(len(bags.anomalies))],
                    bags.normals[rng.integers(len(bags.normals))],
                )
                for _ in range(config.batch)
            ]
            loss = train_step(model, pairs, config, optimizer, phase.head)
            if not math.isfinite(loss):
                raise RuntimeError(f"loss diverged at {phase.name} step {step}")
            losses.append(loss)
            logger.debug("%s step %d loss %.6f", phase.name, step, loss)
            if (step + 1) % config.log_every == 0 or step + 1 == phase.steps:
                window = losses[-min(config.log_every, step + 1) :]
                logger.info(
                    "%s step %d/%d mean loss %.6f",
                    phase.name,
                    step + 1,
                    phase.steps,
                    sum(window) / len(window),
                )

    model.trainable(("scene", "human", "coupler"))
    return TrainResult(model, losses, phases)

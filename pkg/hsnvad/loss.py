"""Self-rectifying MIL loss and the classical ranking baseline.

Every loss takes the anomaly bag ``D_a`` and the normal bag ``D_n`` as
``T`` or ``T x 1`` tensors of segment scores.
"""

from __future__ import annotations

import typing

import numpy as np

from .errors import RejectedInputError
from .tensor import (
    Array,
    Tensor,
    absolute,
    activate,
    average,
    matmul,
    pool,
    reshape,
    square,
    total,
)


class BagPair(typing.NamedTuple):
    anomaly: Tensor
    normal: Tensor


class PseudoLabels(typing.NamedTuple):
    reference: float  # D_ref
    anomaly: Array  # P_ya
    normal: Array  # P_yn


def bag_pair(anomaly: Tensor, normal: Tensor) -> BagPair:
    if anomaly.values.size < 1 or anomaly.values.size != normal.values.size:
        raise RejectedInputError(
            f"bags must have equal length T >= 1, not {anomaly.shape} and "
            f"{normal.shape}"
        )
    return BagPair(reshape(anomaly, (-1,)), reshape(normal, (-1,)))


def context_loss(
    anomaly: Tensor, normal: Tensor, lambda1: float, normalize: bool = False
) -> Tensor:
    """``lambda1 * max(0, 1 - sum(D_a) + sum(D_n))``; means when ``normalize``."""
    pair = bag_pair(anomaly, normal)
    reduce = average if normalize else total
    return lambda1 * activate(1.0 - reduce(pair.anomaly) + reduce(pair.normal), "relu")


def pseudo_labels(anomaly: Tensor | Array) -> PseudoLabels:
    """Label segments above the max/min midpoint ``D_ref`` as anomalous."""
    values = (anomaly.values if isinstance(anomaly, Tensor) else anomaly).reshape(-1)
    if values.size < 1:
        raise RejectedInputError("pseudo labels need at least one segment")
    reference = float((values.max() + values.min()) / 2.0)
    return PseudoLabels(
        reference,
        (values > reference).astype(np.float64),
        np.zeros_like(values),
    )


def instance_loss(
    anomaly: Tensor, normal: Tensor, labels: PseudoLabels, lambda2: float
) -> Tensor:
    """``lambda2 * |Err(Correct) - Err(Noisy)|`` with both errors as MSE."""
    pair = bag_pair(anomaly, normal)
    if labels.anomaly.size != pair.anomaly.values.size:
        raise RejectedInputError(
            f"{labels.anomaly.size} pseudo labels for {pair.anomaly.values.size} "
            "segments"
        )
    correct = average(square(pair.normal - Tensor(labels.normal)))
    noisy = average(square(pair.anomaly - Tensor(labels.anomaly)))
    return lambda2 * absolute(correct - noisy)


def self_rectifying_loss(
    anomaly: Tensor,
    normal: Tensor,
    lambda1: float,
    lambda2: float,
    normalize: bool = False,
) -> Tensor:
    pair = bag_pair(anomaly, normal)
    # labels are recomputed from the current scores and carry no gradient
    labels = pseudo_labels(pair.anomaly)
    return context_loss(*pair, lambda1, normalize) + instance_loss(
        *pair, labels, lambda2
    )


def classical_ranking_loss(
    anomaly: Tensor,
    normal: Tensor,
    smoothness: float = 0.0,
    sparsity: float = 0.0,
) -> Tensor:
    """``max(0, 1 - max(D_a) + max(D_n))`` plus optional temporal priors."""
    pair = bag_pair(anomaly, normal)
    loss = activate(
        1.0 - pool(pair.anomaly, 0, "max") + pool(pair.normal, 0, "max"), "relu"
    )
    segments = pair.anomaly.shape[0]
    if smoothness and segments > 1:
        shift = np.eye(segments - 1, segments, k=1) - np.eye(segments - 1, segments)
        steps = matmul(Tensor(shift), reshape(pair.anomaly, (segments, 1)))
        loss = loss + smoothness * total(square(steps))
    if sparsity:
        loss = loss + sparsity * total(pair.anomaly)
    return loss

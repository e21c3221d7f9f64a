"""Soft-selection coupler weighting the two subnets' scores."""

from __future__ import annotations

import typing

import numpy as np

from .errors import RejectedInputError
from .params import DenseParams, HyperParams, init_dense
from .tensor import Tensor, affine, concat, pool, reshape


class SelectionParams(typing.NamedTuple):
    human_latent: DenseParams
    scene_latent: DenseParams
    human_head: DenseParams
    scene_head: DenseParams


class CouplerParams(typing.NamedTuple):
    segment: SelectionParams
    video: SelectionParams | None  # None: segment-level selection only


class Attention(typing.NamedTuple):
    human: Tensor
    scene: Tensor


class Coupling(typing.NamedTuple):
    human: Tensor  # S_HsN
    scene: Tensor  # S_SsN
    score: Tensor  # D


def init_selection(width: int, rng: np.random.Generator) -> SelectionParams:
    return SelectionParams(
        init_dense(rng, width, width),
        init_dense(rng, width, width),
        init_dense(rng, 2 * width, 1),
        init_dense(rng, 2 * width, 1),
    )


def init_coupler(hyper: HyperParams, rng: np.random.Generator) -> CouplerParams:
    segment = init_selection(hyper.ranker_width, rng)
    video = None
    if hyper.coupler == "sls+vls":
        video = init_selection(hyper.ranker_width, rng)
    return CouplerParams(segment, video)


def _select(human: Tensor, scene: Tensor, params: SelectionParams) -> Attention:
    latent = concat(
        [
            affine(human, *params.human_latent, activation="relu"),
            affine(scene, *params.scene_latent, activation="relu"),
        ],
        axis=-1,
    )
    return Attention(
        affine(latent, *params.human_head, activation="sigmoid"),
        affine(latent, *params.scene_head, activation="sigmoid"),
    )


def max_over_tracklets(tracklet_repr: Tensor) -> Tensor:
    """``F_T^M``: max-pool of ``F_T`` over the tracklet axis."""
    return pool(tracklet_repr, 1, "max")


def segment_level_selection(
    tracklet_repr: Tensor, scene_repr: Tensor, params: SelectionParams
) -> Attention:
    if tracklet_repr.ndim != 3 or tracklet_repr.shape[2] != scene_repr.shape[-1]:
        raise RejectedInputError(
            f"coupler width mismatch: F_T {tracklet_repr.shape}, F_S {scene_repr.shape}"
        )
    return _select(max_over_tracklets(tracklet_repr), scene_repr, params)


def video_level_selection(
    tracklet_max: Tensor, scene_repr: Tensor, params: SelectionParams
) -> Attention:
    width = scene_repr.shape[-1]
    if tracklet_max.shape[-1] != width:
        raise RejectedInputError(
            f"coupler width mismatch: F_T^M {tracklet_max.shape}, "
            f"F_S {scene_repr.shape}"
        )
    return _select(
        reshape(pool(tracklet_max, 0, "mean"), (1, width)),
        reshape(pool(scene_repr, 0, "mean"), (1, width)),
        params,
    )


def fuse(
    segment: Attention,
    video: Attention | None,
    tracklet_scores: Tensor,
    scene_scores: Tensor,
) -> Coupling:
    """``S = A^S * A^V`` inflated over T; ``D = S_HsN*D_Tr + S_SsN*D_Sc``."""
    human, scene = segment
    if video is not None:
        human = human * video.human
        scene = scene * video.scene
    return Coupling(human, scene, human * tracklet_scores + scene * scene_scores)


def couple(
    tracklet_repr: Tensor,
    scene_repr: Tensor,
    tracklet_scores: Tensor,
    scene_scores: Tensor,
    params: CouplerParams,
) -> Coupling:
    segment = segment_level_selection(tracklet_repr, scene_repr, params.segment)
    video = None
    if params.video is not None:
        video = video_level_selection(
            max_over_tracklets(tracklet_repr), scene_repr, params.video
        )
    return fuse(segment, video, tracklet_scores, scene_scores)

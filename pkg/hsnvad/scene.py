"""Scene subnet: multi-granularity temporal pyramid, LSTM encoding and ranker."""

from __future__ import annotations

import typing

import numpy as np

from .errors import RejectedInputError
from .params import (
    ConvParams,
    HyperParams,
    LstmParams,
    RankerParams,
    init_conv,
    init_lstm,
    init_ranker,
    rank,
)
from .tensor import Array, Tensor, concat, conv1d, lstm, matmul

# (kernel size, dilation) of the two convolutions of every downscaler level
DOWNSCALER_LAYERS = ((5, 4), (3, 8))


class DownscalerParams(typing.NamedTuple):
    first: ConvParams
    second: ConvParams


class MgtmParams(typing.NamedTuple):
    level1: DownscalerParams
    level2: DownscalerParams
    bottleneck1: ConvParams  # applied to the G=2 map
    bottleneck2: ConvParams  # applied to the G=1 map
    lstm: LstmParams


class SceneParams(typing.NamedTuple):
    mgtm: MgtmParams | None
    ranker: RankerParams


def init_scene(hyper: HyperParams, rng: np.random.Generator) -> SceneParams:
    n, n_c, n_h = hyper.channels, hyper.conv_channels, hyper.hidden
    if not hyper.mgtm:
        return SceneParams(None, init_ranker(rng, n, hyper.ranker_width))

    def downscaler(inputs: int) -> DownscalerParams:
        (k1, _), (k2, _) = DOWNSCALER_LAYERS
        return DownscalerParams(
            init_conv(rng, k1, inputs, n_c), init_conv(rng, k2, n_c, n_c)
        )

    mgtm = MgtmParams(
        level1=downscaler(n),
        level2=downscaler(2 * n_c),
        bottleneck1=init_conv(rng, 1, n, n_c),
        bottleneck2=init_conv(rng, 1, n, n_c),
        lstm=init_lstm(rng, 2 * n_c, n_h),
    )
    return SceneParams(mgtm, init_ranker(rng, n_h, hyper.ranker_width))


def pooling_matrix(length: int, target: int) -> Array:
    """Rows average input bins ``[floor(i*L/L_t), floor((i+1)*L/L_t))``."""
    matrix = np.zeros((target, length))
    for i in range(target):
        start, end = i * length // target, (i + 1) * length // target
        matrix[i, start:end] = 1.0 / (end - start)
    return matrix


def temporal_downscale(
    features: Tensor, target_length: int, params: DownscalerParams
) -> Tensor:
    length = features.shape[0]
    if not length > target_length >= 1:
        raise RejectedInputError(
            f"downscaling needs L > L_t >= 1, got L={length}, L_t={target_length}"
        )
    x = features
    for conv, (_, dilation) in zip(params, DOWNSCALER_LAYERS):
        x = conv1d(x, conv.weight, conv.bias, dilation, activation="relu")
    return matmul(Tensor(pooling_matrix(length, target_length)), x)


def bottleneck(features: Tensor, params: ConvParams) -> Tensor:
    return conv1d(features, params.weight, params.bias, activation="relu")


def mgtm_forward(
    f_t: Tensor, f_2t: Tensor, f_3t: Tensor, params: MgtmParams
) -> Tensor:
    """Fuse the G=3, 2, 1 maps into a ``T x 2n_c`` pyramid and encode it."""
    segments = f_t.shape[0]
    if (
        f_t.ndim != 2
        or f_2t.shape != (2 * segments, f_t.shape[1])
        or f_3t.shape != (3 * segments, f_t.shape[1])
    ):
        raise RejectedInputError(
            f"scene maps must be T x n, 2T x n, 3T x n, not {f_t.shape}, "
            f"{f_2t.shape}, {f_3t.shape}"
        )
    level1 = concat(
        [
            temporal_downscale(f_3t, 2 * segments, params.level1),
            bottleneck(f_2t, params.bottleneck1),
        ],
        axis=1,
    )
    level2 = concat(
        [
            temporal_downscale(level1, segments, params.level2),
            bottleneck(f_t, params.bottleneck2),
        ],
        axis=1,
    )
    return lstm(level2, *params.lstm)


def scene_rank(encoded: Tensor, params: RankerParams) -> tuple[Tensor, Tensor]:
    """Returns ``D_Sc`` (``T x 1``) and the intermediate representation ``F_S``."""
    return rank(encoded, params)


def scene_forward(
    maps: tuple[Tensor, Tensor, Tensor], params: SceneParams
) -> tuple[Tensor, Tensor]:
    f_t, f_2t, f_3t = maps
    if params.mgtm is None:
        return scene_rank(f_t, params.ranker)
    return scene_rank(mgtm_forward(f_t, f_2t, f_3t, params.mgtm), params.ranker)

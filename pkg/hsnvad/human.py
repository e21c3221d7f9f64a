"""Human subnet: tracklet selection by feature magnitude, relation model, ranker."""

from __future__ import annotations

import typing

import numpy as np
import numpy.typing as npt

from .errors import RejectedInputError
from .params import (
    HyperParams,
    LstmParams,
    RankerParams,
    init_lstm,
    init_ranker,
    rank,
)
from .tensor import Array, Tensor, lstm, pool, reshape

PAD = -1


class TrackletMap(typing.NamedTuple):
    features: Array  # T x k x n, absent entries are zero vectors
    identifiers: tuple[int, ...]
    mask: npt.NDArray[np.bool_]  # T x k

    @property
    def count(self) -> int:
        return self.features.shape[1]


def tracklet_map(
    features: npt.ArrayLike, identifiers: typing.Sequence[int] | None = None
) -> TrackletMap:
    values = np.asarray(features, dtype=np.float64)
    if values.ndim != 3:
        raise RejectedInputError(f"tracklet map must be T x k x n, not {values.shape}")
    if identifiers is None:
        identifiers = range(values.shape[1])
    identifiers = tuple(identifiers)
    if len(identifiers) != values.shape[1]:
        raise RejectedInputError(
            f"{len(identifiers)} identifiers for {values.shape[1]} tracklets"
        )
    return TrackletMap(values, identifiers, np.any(values != 0.0, axis=2))


class Selection(typing.NamedTuple):
    features: Array  # T x k^s x n, ascending feature magnitude
    indices: tuple[int, ...]  # original tracklet index per slot, PAD for padding


class HumanParams(typing.NamedTuple):
    relation: LstmParams | None
    ranker: RankerParams


def init_human(hyper: HyperParams, rng: np.random.Generator) -> HumanParams:
    if not hyper.tsrm:
        return HumanParams(None, init_ranker(rng, hyper.channels, hyper.ranker_width))
    return HumanParams(
        init_lstm(rng, hyper.channels, hyper.hidden),
        init_ranker(rng, hyper.hidden, hyper.ranker_width),
    )


def feature_magnitude(features: Array) -> Array:
    """Per tracklet, the sum over segments of the L2 norms of its features."""
    return typing.cast(Array, np.linalg.norm(features, axis=2).sum(axis=0))


def select_tracklets(
    features: Array, selected: int, present: npt.NDArray[np.bool_] | None = None
) -> Selection:
    """Keep the ``selected`` largest-magnitude tracklets, ordered ascending.

    Ties prefer the smaller tracklet index. A tracklet absent from every
    segment of ``present`` (a ``T x k`` mask) is never kept. Missing
    tracklets are zero pads; having minimal magnitude they lead the order.
    """
    if selected < 1:
        raise RejectedInputError(f"k^s must be >= 1, not {selected}")
    segments, count, channels = features.shape
    magnitude = feature_magnitude(features)
    candidates = list(range(count))
    if present is not None:
        candidates = [int(j) for j in np.flatnonzero(present.any(axis=0))]
    kept = sorted(candidates, key=lambda j: (-magnitude[j], j))[:selected]
    kept.sort(key=lambda j: (magnitude[j], j))

    padding = selected - len(kept)
    indices = (PAD,) * padding + tuple(kept)
    chosen = np.zeros((segments, selected, channels))
    if kept:
        chosen[:, padding:] = features[:, kept]
    return Selection(chosen, indices)


def relation_model(selected: Tensor, params: LstmParams) -> Tensor:
    """Runs the LSTM across the tracklet axis, one sequence per segment."""
    return lstm(selected, *params)


def tracklet_rank(encoded: Tensor, params: RankerParams) -> tuple[Tensor, Tensor]:
    """Returns ``D_Tr`` (``T x 1``, max over tracklets) and ``F_T``."""
    scores, intermediate = rank(encoded, params)
    segments, tracklets = encoded.shape[:2]
    per_tracklet = reshape(scores, (segments, tracklets))
    return reshape(pool(per_tracklet, 1, "max"), (segments, 1)), intermediate


def human_forward(
    tracklets: TrackletMap, params: HumanParams, selected: int
) -> tuple[Tensor, Tensor]:
    if params.relation is None:
        features = tracklets.features
        if tracklets.count == 0:
            features = np.zeros((features.shape[0], 1, features.shape[2]))
        return tracklet_rank(Tensor(features), params.ranker)

    selection = select_tracklets(tracklets.features, selected, tracklets.mask)
    encoded = relation_model(Tensor(selection.features), params.relation)
    return tracklet_rank(encoded, params.ranker)

import math

import numpy as np
import pytest

from hsnvad.errors import RejectedInputError
from hsnvad.human import (
    PAD,
    feature_magnitude,
    human_forward,
    init_human,
    relation_model,
    select_tracklets,
    tracklet_map,
    tracklet_rank,
)
from hsnvad.params import DenseParams, HyperParams, RankerParams, named_tensors
from hsnvad.tensor import Array, Tensor

HYPER = HyperParams(
    segments=4, channels=3, conv_channels=4, hidden=5, selected=2, ranker_width=6
)


def with_magnitudes(magnitudes: list[float], segments: int = 2) -> Array:
    """Tracklets whose per-segment norm is ``m / segments`` along one axis."""
    features = np.zeros((segments, len(magnitudes), 3))
    for j, magnitude in enumerate(magnitudes):
        features[:, j, j % 3] = magnitude / segments
    return features


def identity_ranker(bias: float) -> RankerParams:
    one, zero = Tensor([[1.0]]), Tensor([0.0])
    return RankerParams(
        DenseParams(one, zero), DenseParams(one, zero), DenseParams(one, Tensor([bias]))
    )


def test_feature_magnitude_of_missing_tracklet() -> None:
    assert feature_magnitude(np.zeros((4, 2, 3))).tolist() == [0.0, 0.0]


def test_feature_magnitude_sums_norms() -> None:
    features = np.array([[[3.0, 4.0]], [[0.0, 2.0]]])
    assert feature_magnitude(features).tolist() == [7.0]


@pytest.mark.parametrize("scale", (-2.0, 0.5, 3.0))
def test_feature_magnitude_is_homogeneous(scale: float) -> None:
    features = np.random.default_rng(0).normal(size=(5, 3, 4))
    assert np.allclose(
        feature_magnitude(scale * features), abs(scale) * feature_magnitude(features)
    )


def test_select_largest_in_ascending_order() -> None:
    selection = select_tracklets(with_magnitudes([3.0, 1.0, 5.0]), 2)
    assert selection.indices == (0, 2)
    assert feature_magnitude(selection.features).tolist() == [3.0, 5.0]


def test_select_ties_prefer_lower_index() -> None:
    assert select_tracklets(with_magnitudes([2.0, 2.0, 2.0]), 2).indices == (0, 1)


def test_select_pads_missing_tracklets() -> None:
    selection = select_tracklets(with_magnitudes([4.0]), 3)
    assert selection.indices == (PAD, PAD, 0)
    assert not selection.features[:, :2].any()
    assert selection.features.shape == (2, 3, 3)


def test_select_skips_absent_tracklets() -> None:
    features = np.zeros((2, 3, 2))
    features[1, 2] = [0.5, 0.0]
    tracklets = tracklet_map(features)
    selection = select_tracklets(tracklets.features, 2, tracklets.mask)
    assert selection.indices == (PAD, 2)
    assert select_tracklets(features, 2).indices == (0, 2)


def test_select_from_empty_map() -> None:
    selection = select_tracklets(np.zeros((2, 0, 3)), 2)
    assert selection.indices == (PAD, PAD)
    assert not selection.features.any()


def test_select_rejects_zero_slots() -> None:
    with pytest.raises(RejectedInputError, match="k\\^s must be >= 1"):
        select_tracklets(with_magnitudes([1.0]), 0)


@pytest.mark.parametrize("seed", range(5))
def test_selection_ignores_tracklet_order(seed: int) -> None:
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(4, 6, 3))
    order = rng.permutation(6)
    first = select_tracklets(features, 3)
    second = select_tracklets(features[:, order], 3)
    assert np.array_equal(first.features, second.features)
    assert [int(order[j]) for j in second.indices] == list(first.indices)


def test_relation_model_shape() -> None:
    human = init_human(HYPER, np.random.default_rng(0))
    assert human.relation is not None
    selected = Tensor(np.random.default_rng(1).normal(size=(4, 2, 3)))
    assert relation_model(selected, human.relation).shape == (4, 2, 5)


def test_relation_model_zero_parameters() -> None:
    human = init_human(HYPER, np.random.default_rng(0))
    assert human.relation is not None
    for tensor in named_tensors(human.relation).values():
        tensor.values[...] = 0.0
    selected = Tensor(np.random.default_rng(1).normal(size=(4, 2, 3)))
    assert not relation_model(selected, human.relation).values.any()


def test_tracklet_rank_zero_parameters() -> None:
    human = init_human(HYPER, np.random.default_rng(0))
    for tensor in named_tensors(human.ranker).values():
        tensor.values[...] = 0.0
    d_tr, f_t = tracklet_rank(Tensor(np.ones((4, 2, 5))), human.ranker)
    assert d_tr.shape == (4, 1)
    assert f_t.shape == (4, 2, 6)
    assert np.all(d_tr.values == 0.5)


def test_tracklet_rank_takes_the_max() -> None:
    scores = np.array([[0.2, 0.9, 0.5], [0.7, 0.1, 0.3]])
    encoded = np.log(scores / (1.0 - scores)) + 5.0
    d_tr, _ = tracklet_rank(Tensor(encoded[..., None]), identity_ranker(-5.0))
    assert np.allclose(d_tr.values.reshape(-1), [0.9, 0.7], rtol=0, atol=1e-12)


def test_human_forward_without_tracklets() -> None:
    human = init_human(HYPER, np.random.default_rng(2))
    d_tr, f_t = human_forward(tracklet_map(np.zeros((4, 0, 3))), human, 2)
    assert d_tr.shape == (4, 1)
    assert f_t.shape == (4, 2, 6)
    assert np.all(d_tr.values == d_tr.values[0, 0])


def test_human_forward_scores_are_probabilities() -> None:
    human = init_human(HYPER, np.random.default_rng(3))
    tracklets = tracklet_map(np.random.default_rng(4).normal(size=(4, 5, 3)))
    d_tr, f_t = human_forward(tracklets, human, 2)
    assert d_tr.shape == (4, 1)
    assert f_t.shape == (4, 2, 6)
    assert np.all((d_tr.values >= 0) & (d_tr.values <= 1))


def test_human_forward_without_relation_model() -> None:
    human = init_human(HYPER._replace(tsrm=False), np.random.default_rng(0))
    assert human.relation is None
    assert human.ranker.hidden.weight.shape == (3, 6)
    tracklets = tracklet_map(np.random.default_rng(1).normal(size=(4, 5, 3)))
    d_tr, f_t = human_forward(tracklets, human, 2)
    assert d_tr.shape == (4, 1)
    assert f_t.shape == (4, 5, 6)

    d_tr, f_t = human_forward(tracklet_map(np.zeros((4, 0, 3))), human, 2)
    assert d_tr.shape == (4, 1)
    assert f_t.shape == (4, 1, 6)


def test_tracklet_map_mask() -> None:
    features = np.zeros((2, 3, 2))
    features[0, 1] = [1.0, 0.0]
    features[1, 2] = [0.0, -math.pi]
    tracklets = tracklet_map(features, [7, 8, 9])
    assert tracklets.count == 3
    assert tracklets.identifiers == (7, 8, 9)
    assert tracklets.mask.tolist() == [[False, True, False], [False, False, True]]


def test_tracklet_map_errors() -> None:
    with pytest.raises(RejectedInputError, match="T x k x n"):
        tracklet_map(np.zeros((2, 3)))
    with pytest.raises(RejectedInputError, match="2 identifiers for 3 tracklets"):
        tracklet_map(np.zeros((2, 3, 1)), [1, 2])

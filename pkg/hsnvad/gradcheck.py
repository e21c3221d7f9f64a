"""Central-difference gradient checks for every primitive and composite block."""

from __future__ import annotations

import logging
import typing

import numpy as np

from .coupler import (
    Attention,
    fuse,
    init_selection,
    segment_level_selection,
    video_level_selection,
)
from .dataset import VideoFeatures
from .errors import RejectedInputError
from .human import init_human, relation_model, tracklet_map, tracklet_rank
from .loss import (
    classical_ranking_loss,
    context_loss,
    instance_loss,
    pseudo_labels,
    self_rectifying_loss,
)
from .model import HsnModel
from .params import HyperParams, init_ranker, named_tensors
from .scene import init_scene, mgtm_forward, scene_rank
from .tensor import (
    Tensor,
    Tape,
    absolute,
    activate,
    affine,
    concat,
    conv1d,
    inference,
    lstm,
    matmul,
    pool,
    reshape,
    square,
    total,
)

logger = logging.getLogger(__name__)

Builder = typing.Callable[[], Tensor]
Setup = typing.Callable[[np.random.Generator], tuple[Builder, list[Tensor]]]

EPSILON = 1e-5
TOLERANCE = 1e-4

# widths of the composite checks: T, n, n_c, n_h, k^s, m
TINY = HyperParams(
    segments=2, channels=3, conv_channels=2, hidden=3, selected=2, ranker_width=4
)
# free score bags kept away from hinge corners and the pseudo-label midpoint
ANOMALY_BAG = (0.1, 0.9, 0.3, 0.7)
NORMAL_BAG = (0.4, 0.3, 0.5, 0.2)


class CheckResult(typing.NamedTuple):
    name: str
    error: float
    passed: bool


def grad_check(
    build: Builder, params: typing.Sequence[Tensor], epsilon: float = EPSILON
) -> float:
    """Max over parameter entries of ``|analytic - numeric| / max(1e-8, |numeric|)``."""
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = True
    try:
        with Tape() as tape:
            loss = build()
        tape.backward(loss)
        analytic = [
            np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params
        ]

        worst = 0.0
        with inference():
            for p, grad in zip(params, analytic):
                for i in range(p.values.size):
                    original = p.values.flat[i]
                    p.values.flat[i] = original + epsilon
                    up = build().item()
                    p.values.flat[i] = original - epsilon
                    down = build().item()
                    p.values.flat[i] = original
                    numeric = (up - down) / (2.0 * epsilon)
                    error = abs(grad.flat[i] - numeric) / max(1e-8, abs(numeric))
                    worst = max(worst, error)
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag
            p.grad = None
    return worst


def _away(rng: np.random.Generator, *shape: int) -> Tensor:
    """Entries in ``[-1, -0.2] u [0.2, 1]``, away from kinks at zero."""
    magnitude = rng.uniform(0.2, 1.0, shape)
    return Tensor(np.where(rng.random(shape) < 0.5, -magnitude, magnitude))


def _normal(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(0.0, 0.5, shape))


class _Projection:
    """A fixed random linear functional, turning any output into a scalar."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng
        self.weights: dict[tuple[int, ...], Tensor] = {}

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape not in self.weights:
            self.weights[x.shape] = Tensor(self.rng.normal(size=x.shape))
        return total(x * self.weights[x.shape])


SUITE: dict[str, Setup] = {}


def check(name: str) -> typing.Callable[[Setup], Setup]:
    def register(setup: Setup) -> Setup:
        SUITE[name] = setup
        return setup

    return register


@check("add")
def _add(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    a, b, project = _normal(rng, 3, 4), _normal(rng, 4), _Projection(rng)
    return lambda: project(a + b), [a, b]


@check("subtract")
def _subtract(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    a, b, project = _normal(rng, 3, 1), _normal(rng, 3, 4), _Projection(rng)
    return lambda: project(a - b), [a, b]


@check("multiply")
def _multiply(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    a, b, project = _normal(rng, 3, 4), _normal(rng, 3, 1), _Projection(rng)
    return lambda: project(a * b), [a, b]


@check("negate")
def _negate(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 5), _Projection(rng)
    return lambda: project(-x), [x]


@check("absolute")
def _absolute(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _away(rng, 2, 3), _Projection(rng)
    return lambda: project(absolute(x)), [x]


@check("square")
def _square(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 2, 3), _Projection(rng)
    return lambda: project(square(x)), [x]


@check("activate/relu")
def _relu(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _away(rng, 4, 3), _Projection(rng)
    return lambda: project(activate(x, "relu")), [x]


@check("activate/sigmoid")
def _sigmoid(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 4, 3), _Projection(rng)
    return lambda: project(activate(x, "sigmoid")), [x]


@check("activate/tanh")
def _tanh(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 4, 3), _Projection(rng)
    return lambda: project(activate(x, "tanh")), [x]


@check("affine")
def _affine(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, w, b = _normal(rng, 2, 3, 4), _normal(rng, 4, 5), _normal(rng, 5)
    project = _Projection(rng)
    return lambda: project(affine(x, w, b, activation="sigmoid")), [x, w, b]


@check("matmul")
def _matmul(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    a, b, project = _normal(rng, 3, 4), _normal(rng, 4, 2), _Projection(rng)
    return lambda: project(matmul(a, b)), [a, b]


@check("conv1d")
def _conv1d(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, w, b = _normal(rng, 7, 3), _normal(rng, 3, 3, 2), _normal(rng, 2)
    project = _Projection(rng)
    return (
        lambda: project(conv1d(x, w, b, dilation=2, activation="sigmoid")),
        [x, w, b],
    )


@check("lstm")
def _lstm(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x = _normal(rng, 3, 4)
    wx, wh, b = _normal(rng, 4, 12), _normal(rng, 3, 12), _normal(rng, 12)
    project = _Projection(rng)
    return lambda: project(lstm(x, wx, wh, b)), [x, wx, wh, b]


@check("lstm/batched")
def _lstm_batched(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x = _normal(rng, 2, 3, 2)
    wx, wh, b = _normal(rng, 2, 8), _normal(rng, 2, 8), _normal(rng, 8)
    project = _Projection(rng)
    return lambda: project(lstm(x, wx, wh, b)), [x, wx, wh, b]


@check("pool/max")
def _pool_max(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = Tensor(rng.permutation(12).reshape(3, 4) * 0.1), _Projection(rng)
    return lambda: project(pool(x, 1, "max")), [x]


@check("pool/mean")
def _pool_mean(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 3, 4), _Projection(rng)
    return lambda: project(pool(x, 0, "mean")), [x]


@check("pool/sum")
def _pool_sum(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 2, 3, 2), _Projection(rng)
    return lambda: project(pool(x, 2, "sum")), [x]


@check("concat")
def _concat(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    a, b, project = _normal(rng, 2, 1), _normal(rng, 2, 2), _Projection(rng)
    return lambda: project(concat([a, b], axis=1)), [a, b]


@check("reshape")
def _reshape(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    x, project = _normal(rng, 2, 6), _Projection(rng)
    return lambda: project(reshape(x, (3, 4))), [x]


@check("mgtm_forward")
def _mgtm(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    scene = init_scene(TINY, rng)
    assert scene.mgtm is not None
    mgtm = scene.mgtm
    t, n = TINY.segments, TINY.channels
    maps = [_normal(rng, t, n), _normal(rng, 2 * t, n), _normal(rng, 3 * t, n)]
    project = _Projection(rng)
    return (
        lambda: project(mgtm_forward(*maps, mgtm)),
        maps + list(named_tensors(mgtm).values()),
    )


@check("scene_rank")
def _scene_rank(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    ranker = init_ranker(rng, TINY.hidden, TINY.ranker_width)
    encoded, project = _normal(rng, TINY.segments, TINY.hidden), _Projection(rng)

    def build() -> Tensor:
        scores, intermediate = scene_rank(encoded, ranker)
        return project(scores) + project(intermediate)

    return build, [encoded] + list(named_tensors(ranker).values())


@check("relation_model+tracklet_rank")
def _human(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    human = init_human(TINY, rng)
    assert human.relation is not None
    relation = human.relation
    selected = _normal(rng, TINY.segments, TINY.selected, TINY.channels)
    project = _Projection(rng)

    def build() -> Tensor:
        scores, intermediate = tracklet_rank(
            relation_model(selected, relation), human.ranker
        )
        return project(scores) + project(intermediate)

    return build, [selected] + list(named_tensors(human).values())


@check("segment_level_selection")
def _segment_selection(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    m = TINY.ranker_width
    params = init_selection(m, rng)
    f_t = _normal(rng, TINY.segments, TINY.selected, m)
    f_s, project = _normal(rng, TINY.segments, m), _Projection(rng)

    def build() -> Tensor:
        attention = segment_level_selection(f_t, f_s, params)
        return project(attention.human) + project(attention.scene)

    return build, [f_t, f_s] + list(named_tensors(params).values())


@check("video_level_selection")
def _video_selection(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    m = TINY.ranker_width
    params = init_selection(m, rng)
    f_tm, f_s = _normal(rng, TINY.segments, m), _normal(rng, TINY.segments, m)
    project = _Projection(rng)

    def build() -> Tensor:
        attention = video_level_selection(f_tm, f_s, params)
        return project(attention.human) + project(attention.scene)

    return build, [f_tm, f_s] + list(named_tensors(params).values())


@check("fuse")
def _fuse(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    t = TINY.segments

    def unit(*shape: int) -> Tensor:
        return Tensor(rng.uniform(0.1, 0.9, shape))

    segment = Attention(unit(t, 1), unit(t, 1))
    video = Attention(unit(1, 1), unit(1, 1))
    d_tr, d_sc, project = unit(t, 1), unit(t, 1), _Projection(rng)

    def build() -> Tensor:
        coupling = fuse(segment, video, d_tr, d_sc)
        return project(coupling.score) + project(coupling.human * coupling.scene)

    return build, [*segment, *video, d_tr, d_sc]


@check("hsn_model")
def _model(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    model = HsnModel(TINY, seed=int(rng.integers(1 << 16)))
    params = list(model.named_tensors().values())
    # all-positive point: relus stay open and no path cancels another
    for p in params:
        if p.values.ndim == 1:
            p.values[...] = rng.uniform(0.05, 0.2, p.shape)
        else:
            fan_in = int(np.prod(p.shape[:-1]))
            p.values[...] = rng.uniform(0.5, 1.5, p.shape) / fan_in
    t, n = TINY.segments, TINY.channels
    video = VideoFeatures(
        id="gradcheck",
        label="anomaly",
        category="anomaly",
        frames=4 * t,
        scene=tuple(rng.uniform(0.1, 1.0, (g * t, n)) for g in (1, 2, 3)),
        tracklets=tracklet_map(rng.uniform(0.1, 1.0, (t, 3, n))),
        annotations=None,
    )
    weights = Tensor(rng.uniform(0.5, 1.5, (t, 1)))
    return lambda: total(model.forward(video).score * weights), params


def _bags() -> tuple[Tensor, Tensor]:
    return Tensor(ANOMALY_BAG), Tensor(NORMAL_BAG)


@check("context_loss")
def _context_loss(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    anomaly, normal = _bags()
    return lambda: context_loss(anomaly, normal, 0.7), [anomaly, normal]


@check("instance_loss")
def _instance_loss(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    anomaly, normal = _bags()
    return (
        lambda: instance_loss(anomaly, normal, pseudo_labels(anomaly), 1.3),
        [anomaly, normal],
    )


@check("self_rectifying_loss")
def _self_rectifying(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    anomaly, normal = _bags()
    return lambda: self_rectifying_loss(anomaly, normal, 1.0, 1.0), [anomaly, normal]


@check("classical_ranking_loss")
def _classical(rng: np.random.Generator) -> tuple[Builder, list[Tensor]]:
    anomaly, normal = _bags()
    return (
        lambda: classical_ranking_loss(anomaly, normal, smoothness=0.5, sparsity=0.5),
        [anomaly, normal],
    )


def run_suite(
    names: typing.Iterable[str] | None = None,
    epsilon: float = EPSILON,
    tolerance: float = TOLERANCE,
    seed: int = 0,
) -> list[CheckResult]:
    results = []
    for name in SUITE if names is None else names:
        if name not in SUITE:
            raise RejectedInputError(f"unknown gradient check: {name!r}")
        rng = np.random.default_rng([seed, list(SUITE).index(name)])
        build, params = SUITE[name](rng)
        error = grad_check(build, params, epsilon)
        results.append(CheckResult(name, error, error < tolerance))
        logger.debug("%s: max relative error %.3e", name, error)
    return results

from __future__ import annotations

import typing

import numpy as np

from .coupler import CouplerParams, couple, init_coupler
from .dataset import VideoFeatures
from .errors import RejectedInputError
from .human import HumanParams, human_forward, init_human
from .params import HyperParams, named_tensors
from .scene import SceneParams, init_scene, scene_forward
from .tensor import Tensor, inference

Head = typing.Literal["scene", "tracklet", "coupled"]
Group = typing.Literal["scene", "human", "coupler"]


class ScoreBundle(typing.NamedTuple):
    """Per-segment scores of one video, every present entry ``T x 1``."""

    score: Tensor  # D
    tracklet: Tensor | None = None  # D_Tr
    scene: Tensor | None = None  # D_Sc
    human_selection: Tensor | None = None  # S_HsN
    scene_selection: Tensor | None = None  # S_SsN


class HsnModel:
    """Learnable parameters of the scene subnet, human subnet and coupler."""

    def __init__(self, hyper: HyperParams, seed: int = 0) -> None:
        hyper.check()
        self.hyper = hyper
        self.updates = 0
        rng = np.random.default_rng([seed, 0])
        self.scene: SceneParams | None = None
        self.human: HumanParams | None = None
        self.coupler: CouplerParams | None = None
        if hyper.subnets in ("both", "scene"):
            self.scene = init_scene(hyper, rng)
        if hyper.subnets in ("both", "human"):
            self.human = init_human(hyper, rng)
        if hyper.subnets == "both":
            self.coupler = init_coupler(hyper, rng)

    def groups(self) -> dict[Group, dict[str, Tensor]]:
        found: dict[Group, dict[str, Tensor]] = {}
        if self.scene is not None:
            found["scene"] = named_tensors(self.scene, "scene")
        if self.human is not None:
            found["human"] = named_tensors(self.human, "human")
        if self.coupler is not None:
            found["coupler"] = named_tensors(self.coupler, "coupler")
        return found

    def named_tensors(self) -> dict[str, Tensor]:
        found: dict[str, Tensor] = {}
        for tensors in self.groups().values():
            found.update(tensors)
        return found

    def trainable(self, groups: typing.Collection[Group]) -> dict[str, Tensor]:
        """Flag only ``groups`` as requiring gradients and return their tensors."""
        selected: dict[str, Tensor] = {}
        for group, tensors in self.groups().items():
            for name, tensor in tensors.items():
                tensor.requires_grad = group in groups
                if tensor.requires_grad:
                    selected[name] = tensor
        return selected

    def default_head(self) -> Head:
        match self.hyper.subnets:
            case "scene":
                return "scene"
            case "human":
                return "tracklet"
        return "coupled"

    def check(self, video: VideoFeatures) -> None:
        if video.segments != self.hyper.segments or (
            video.channels != self.hyper.channels
        ):
            raise RejectedInputError(
                f"video {video.id!r} is T={video.segments}, n={video.channels}; "
                f"model expects T={self.hyper.segments}, n={self.hyper.channels}"
            )

    def forward(self, video: VideoFeatures, head: Head | None = None) -> ScoreBundle:
        """Compute the scores ``head`` needs (all of them for the coupled head)."""
        self.check(video)
        head = head or self.default_head()
        scene = tracklet = None

        if head in ("scene", "coupled"):
            if self.scene is None:
                raise RejectedInputError("model has no scene subnet")
            maps = typing.cast(
                tuple[Tensor, Tensor, Tensor], tuple(Tensor(m) for m in video.scene)
            )
            scene = scene_forward(maps, self.scene)
        if head in ("tracklet", "coupled"):
            if self.human is None:
                raise RejectedInputError("model has no human subnet")
            tracklet = human_forward(video.tracklets, self.human, self.hyper.selected)

        if head == "scene" and scene is not None:
            return ScoreBundle(scene[0], scene=scene[0])
        if head == "tracklet" and tracklet is not None:
            return ScoreBundle(tracklet[0], tracklet=tracklet[0])

        if self.coupler is None or scene is None or tracklet is None:
            raise RejectedInputError("coupled scores need both subnets and the coupler")
        d_tr, f_t = tracklet
        d_sc, f_s = scene
        coupling = couple(f_t, f_s, d_tr, d_sc, self.coupler)
        return ScoreBundle(
            coupling.score,
            tracklet=d_tr,
            scene=d_sc,
            human_selection=coupling.human,
            scene_selection=coupling.scene,
        )

    def scores(self, video: VideoFeatures) -> ScoreBundle:
        with inference():
            return self.forward(video)

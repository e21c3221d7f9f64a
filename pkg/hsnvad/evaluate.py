"""Frame-level ROC AUC, per-category AUC, k-fold mean AUC and loss comparison.

Segment scores become frame scores by piecewise-constant expansion over
:func:`segment_boundaries`; a frame covered by several segments (``N < T``)
takes the score of the first one.
"""

from __future__ import annotations

import concurrent.futures
import logging
import typing
from pathlib import Path

import numpy as np
import numpy.typing as npt
import yaml
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import StratifiedKFold

from .dataset import Dataset
from .errors import DatasetError, RejectedInputError, UndefinedMetricError
from .features import segment_boundaries
from .model import HsnModel
from .params import HyperParams
from .tensor import Array
from .train import LossChoice, TrainConfig, train

logger = logging.getLogger(__name__)


class EvalReport(typing.NamedTuple):
    auc: float
    categories: dict[str, float]
    frames: int
    videos: int
    scores: dict[str, Array]  # video id -> frame scores
    labels: dict[str, npt.NDArray[np.int8]]
    folds: list[float] | None = None
    mean_auc: float | None = None


class SelectionSummary(typing.NamedTuple):
    human: float  # mean S_HsN
    scene: float  # mean S_SsN
    segments: int


class LossComparison(typing.NamedTuple):
    self_rectifying: float
    classical_ranking: float

    @property
    def delta(self) -> float:
        return self.self_rectifying - self.classical_ranking


def expand_to_frames(scores: npt.ArrayLike, frames: int) -> Array:
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    expanded = np.full(frames, np.nan)
    for score, (start, end) in zip(
        values, segment_boundaries(frames, values.size, 1)
    ):
        window = expanded[start:end]
        window[np.isnan(window)] = score
    return expanded


def roc_auc(scores: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Probability that a positive outranks a negative; ties count one half."""
    y = np.asarray(labels).reshape(-1)
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise RejectedInputError(f"{x.size} scores for {y.size} labels")
    if np.unique(y).size != 2:
        raise UndefinedMetricError(
            f"AUC needs both classes, labels hold only {np.unique(y).tolist()}"
        )
    return float(roc_auc_score(y, x))


def _require_annotations(dataset: Dataset) -> None:
    # an unannotated anomaly would otherwise count as all-normal frames
    missing = [v.id for v in dataset.anomalies if v.annotations is None]
    if missing:
        raise DatasetError(
            "frame-level AUC needs annotations for every anomaly video, missing: "
            + ", ".join(missing)
        )


def evaluate(model: HsnModel, dataset: Dataset) -> EvalReport:
    _require_annotations(dataset)
    scores: dict[str, Array] = {}
    labels: dict[str, npt.NDArray[np.int8]] = {}
    for video in dataset.videos:
        segment_scores = model.scores(video).score.values
        scores[video.id] = expand_to_frames(segment_scores, video.frames)
        labels[video.id] = video.frame_labels()

    def pooled(ids: typing.Iterable[str]) -> float:
        ids = list(ids)
        return roc_auc(
            np.concatenate([scores[i] for i in ids]),
            np.concatenate([labels[i] for i in ids]),
        )

    overall = pooled(scores)
    normals = [v.id for v in dataset.normals]
    categories = {}
    for category in sorted({v.category for v in dataset.anomalies}):
        anomalies = [v.id for v in dataset.anomalies if v.category == category]
        categories[category] = pooled(anomalies + normals)

    frames = sum(v.frames for v in dataset.videos)
    logger.info(
        "frame-level AUC %.4f over %d frames of %d videos",
        overall,
        frames,
        len(dataset.videos),
    )
    return EvalReport(
        auc=overall,
        categories=categories,
        frames=frames,
        videos=len(dataset.videos),
        scores=scores,
        labels=labels,
    )


def fold_assignment(dataset: Dataset, folds: int, seed: int) -> list[int]:
    """Fold index per video, stratified by label (and category when possible)."""
    if folds < 2:
        raise RejectedInputError(f"k-fold needs k >= 2, not {folds}")
    anomalies, normals = len(dataset.anomalies), len(dataset.normals)
    if min(anomalies, normals) < folds:
        raise RejectedInputError(
            f"{folds}-fold split needs {folds} videos per class, got "
            f"{anomalies} anomaly and {normals} normal"
        )
    strata = [f"{v.label}/{v.category}" for v in dataset.videos]
    if min(strata.count(s) for s in set(strata)) < folds:
        strata = [v.label for v in dataset.videos]

    assignment = [0] * len(dataset.videos)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for fold, (_, held_out) in enumerate(
        splitter.split(np.zeros((len(strata), 1)), strata)
    ):
        for index in held_out:
            assignment[index] = fold
    return assignment


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _run_fold(
    hyper: HyperParams,
    config: TrainConfig,
    dataset: Dataset,
    assignment: list[int],
    fold: int,
) -> float:
    held_out = [i for i, f in enumerate(assignment) if f == fold]
    rest = [i for i, f in enumerate(assignment) if f != fold]
    config = config._replace(seed=fold_seed(config.seed, fold))
    result = train(hyper, config, dataset.subset(rest))
    report = evaluate(result.model, dataset.subset(held_out))
    logger.info("fold %d: %d held out, AUC %.4f", fold, len(held_out), report.auc)
    return report.auc


def kfold(
    hyper: HyperParams,
    config: TrainConfig,
    dataset: Dataset,
    folds: int = 5,
    workers: int = 1,
) -> tuple[list[float], float]:
    """Train on k-1 folds and evaluate on the held-out one; returns (AUCs, mean)."""
    _require_annotations(dataset)
    assignment = fold_assignment(dataset, folds, config.seed)
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_fold, hyper, config, dataset, assignment, fold)
                for fold in range(folds)
            ]
            aucs = [future.result() for future in futures]
    else:
        aucs = [
            _run_fold(hyper, config, dataset, assignment, fold)
            for fold in range(folds)
        ]
    mean = sum(aucs) / len(aucs)
    logger.info("%d-fold mean AUC %.4f", folds, mean)
    return aucs, mean


def selection_summary(model: HsnModel, dataset: Dataset) -> SelectionSummary:
    """Mean selection factors over segments overlapping an annotated anomaly."""
    human: list[float] = []
    scene: list[float] = []
    for video in dataset.anomalies:
        bundle = model.scores(video)
        if bundle.human_selection is None or bundle.scene_selection is None:
            raise RejectedInputError("selection factors need the coupled model")
        labels = video.frame_labels()
        ranges = segment_boundaries(video.frames, video.segments, 1)
        for i, (start, end) in enumerate(ranges):
            if labels[start:end].any():
                human.append(float(bundle.human_selection.values.reshape(-1)[i]))
                scene.append(float(bundle.scene_selection.values.reshape(-1)[i]))
    if not human:
        raise RejectedInputError("no annotated anomalous segments to summarize")
    return SelectionSummary(
        float(np.mean(human)), float(np.mean(scene)), len(human)
    )


def compare_loss(
    hyper: HyperParams, config: TrainConfig, dataset: Dataset
) -> LossComparison:
    """Train twin models differing only in the loss and evaluate both."""
    training, held_out = dataset.split("train"), dataset.evaluation_split()
    aucs = {}
    for loss in typing.get_args(LossChoice):
        result = train(hyper, config._replace(loss=loss), training)
        aucs[loss] = evaluate(result.model, held_out).auc
        logger.info("%s loss: AUC %.4f", loss, aucs[loss])
    return LossComparison(aucs["self-rectifying"], aucs["classical-ranking"])


def report_document(report: EvalReport) -> dict[str, typing.Any]:
    document: dict[str, typing.Any] = {
        "auc": report.auc,
        "frames": report.frames,
        "videos": report.videos,
        "categories": dict(report.categories),
    }
    if report.folds is not None:
        document["folds"] = list(report.folds)
        document["mean_auc"] = report.mean_auc
    return document


def dump_report(
    report: EvalReport,
    path: Path,
    extra: typing.Mapping[str, typing.Any] | None = None,
) -> None:
    document = report_document(report)
    document.update(extra or {})
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(document, sort_keys=False))


def dump_scores(report: EvalReport, directory: Path) -> list[Path]:
    """One ``<video id>.txt`` per video holding one frame score per line."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for video_id, scores in report.scores.items():
        path = directory / f"{video_id}.txt"
        path.write_text("".join(f"{score!r}\n" for score in scores.tolist()))
        written.append(path)
    return written

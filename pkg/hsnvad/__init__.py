from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import Dataset, load_dataset
from .evaluate import EvalReport, evaluate, kfold, roc_auc
from .model import HsnModel
from .params import HyperParams
from .synth import SynthSpec, synthesize_dataset
from .train import TrainConfig, train

__all__ = [
    "Dataset",
    "EvalReport",
    "HsnModel",
    "HyperParams",
    "SynthSpec",
    "TrainConfig",
    "evaluate",
    "kfold",
    "load_checkpoint",
    "load_dataset",
    "roc_auc",
    "save_checkpoint",
    "synthesize_dataset",
    "train",
]

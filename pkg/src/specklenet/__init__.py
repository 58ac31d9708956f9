"""Lightweight depthwise-separable CNN for speckle-based material classification, in numpy."""
from specklenet.metrics import ConfusionMatrix, benchmark, confusion, grouped_equivalence_check, report
from specklenet.model import (
    Model,
    ModelSpec,
    canonical_spec,
    forward,
    init_model,
    parameter_count,
    predict,
    reduced_spec,
)
from specklenet.pipeline import Dataset, preprocess
from specklenet.taxonomy import Granularity, classify_with_preset, load_taxonomy
from specklenet.trainer import TrainingConfig, evaluate, train
from specklenet.weights import load_weights, save_weights

__all__ = [
    "ConfusionMatrix",
    "Dataset",
    "Granularity",
    "Model",
    "ModelSpec",
    "TrainingConfig",
    "benchmark",
    "canonical_spec",
    "classify_with_preset",
    "confusion",
    "evaluate",
    "forward",
    "grouped_equivalence_check",
    "init_model",
    "load_taxonomy",
    "load_weights",
    "parameter_count",
    "predict",
    "preprocess",
    "reduced_spec",
    "report",
    "save_weights",
    "train",
]
__version__ = "0.1.0"

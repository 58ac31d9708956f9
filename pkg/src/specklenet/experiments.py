"""Desk-scale experiments on synthetic speckle data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from specklenet.metrics import MetricReport, confusion, report
from specklenet.model import ModelSpec, canonical_spec, forward_batch, init_model
from specklenet.pipeline import Dataset, load_dataset, load_manifest
from specklenet.speckle import write_synthetic_dataset
from specklenet.taxonomy import Taxonomy, load_taxonomy
from specklenet.trainer import TrainingConfig, TrainingHistory, train

log = logging.getLogger(__name__)


@dataclass
class SyntheticSplits:
    train: Dataset
    val: Dataset
    test: Dataset
    n_classes: int


def make_synthetic_splits(root, n_classes: int = 8, per_class=(100, 20, 20), resolution: int = 128,
                          seed: int = 42, taxonomy: Taxonomy | None = None) -> SyntheticSplits:
    """Write a synthetic dataset under ``root`` and load it back through the manifest path."""
    taxonomy = taxonomy or load_taxonomy()
    names = [c.name for c in taxonomy.classes[:n_classes]]
    counts = dict(zip(("train", "val", "test"), per_class))
    write_synthetic_dataset(root, names, counts, resolution=resolution, seed=seed)
    root = Path(root)
    splits = {s: load_dataset(load_manifest(root / f"{s}.txt", taxonomy), size=resolution)
              for s in ("train", "val", "test")}
    return SyntheticSplits(splits["train"], splits["val"], splits["test"], n_classes)


def predict_labels(model, ds: Dataset, batch_size: int = 64) -> np.ndarray:
    out = [np.argmax(forward_batch(model, ds.images[i:i + batch_size]), axis=1)
           for i in range(0, len(ds), batch_size)]
    return np.concatenate(out)


@dataclass
class RunResult:
    history: TrainingHistory
    test_accuracy: float
    test_report: MetricReport
    predictions: np.ndarray = field(repr=False)


def train_and_test(splits: SyntheticSplits, config: TrainingConfig, spec: ModelSpec | None = None,
                   init_seed: int = 0, permute_labels: bool = False, on_epoch=None) -> RunResult:
    """Train on train/val, score on test against the true labels.

    With ``permute_labels`` the train and validation labels are shuffled
    across samples first, which removes any image-label signal.
    """
    spec = spec or canonical_spec()
    train_set, val_set = splits.train, splits.val
    if permute_labels:
        rng = np.random.default_rng(config.seed + 1)
        train_set = Dataset(train_set.images, rng.permutation(train_set.labels))
        val_set = Dataset(val_set.images, rng.permutation(val_set.labels))
    model = init_model(spec, init_seed)
    best, history = train(model, train_set, val_set, config, on_epoch=on_epoch)
    preds = predict_labels(best, splits.test)
    rep = subset_report(preds, splits.test.labels, splits.n_classes)
    return RunResult(history, rep.accuracy, rep, preds)


def subset_report(preds, labels, n: int) -> MetricReport:
    """Metrics over classes ``0..n-1`` of a wider classifier.

    Predictions of any other class go to one extra column so they still
    count against recall; the extra bucket is left out of the averages.
    """
    preds = np.minimum(np.asarray(preds), n)
    full = report(confusion(preds, labels, n + 1))
    f1 = full.f1[:n]
    support = full.support[:n]
    return MetricReport(full.accuracy, full.precision[:n], full.recall[:n], f1, support,
                        float(f1.mean()), float(np.dot(f1, support) / support.sum()))

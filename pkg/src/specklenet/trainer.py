"""Adam training loop with early stopping and best-epoch checkpointing."""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from specklenet import layers as L
from specklenet.errors import DataError, NumericError, ShapeError
from specklenet.model import Model, backward, forward_batch
from specklenet.pipeline import Dataset, flip_batch
from specklenet.weights import save_weights

log = logging.getLogger(__name__)


class Schedule(str, enum.Enum):
    CONSTANT = "constant"
    REDUCE_ON_PLATEAU = "reduce_on_plateau"


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-3
    lr_schedule: Schedule = Schedule.REDUCE_ON_PLATEAU
    lr_factor: float = 0.5
    lr_patience: int = 10
    batch_size: int = 64
    max_epochs: int = 500
    early_stop_patience: int = 50
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    augment: bool = True
    dtype: str = "float32"
    eval_batch_size: int = 64

    def __post_init__(self):
        self.lr_schedule = Schedule(self.lr_schedule)
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie strictly between 0 and 1")
        if self.early_stop_patience < 1 or self.lr_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_schedule"] = self.lr_schedule.value
        return d


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              config: TrainingConfig, lr: float | None = None):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    lr = config.learning_rate if lr is None else lr
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    state.t += 1
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, parameter has {p.shape}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m, v = state.m[key], state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype, copy=False)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = -math.inf
    stopped_early: bool = False

    def val_accuracies(self) -> list[float]:
        return [r.val_acc for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss),
                            repr(r.val_acc), repr(r.lr)])

    @classmethod
    def read_csv(cls, path) -> "TrainingHistory":
        hist = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                hist._add(EpochRecord(int(row["epoch"]), *(float(row[k]) for k in
                                      ("train_loss", "train_acc", "val_loss", "val_acc", "lr"))))
        return hist

    def _add(self, record: EpochRecord) -> bool:
        self.records.append(record)
        if record.val_acc > self.best_val_accuracy:  # ties do not count as improvement
            self.best_val_accuracy = record.val_acc
            self.best_epoch = record.epoch
            return True
        return False


def apply_lr_schedule(history: TrainingHistory, config: TrainingConfig) -> float:
    """Learning rate for the epoch after ``history``.

    Reduce-on-plateau multiplies the rate by ``lr_factor`` each time
    ``lr_patience`` consecutive epochs pass without a new best validation
    accuracy, then starts counting again.
    """
    lr = config.learning_rate
    if config.lr_schedule is Schedule.CONSTANT:
        return lr
    best = -math.inf
    waited = 0
    for acc in history.val_accuracies():
        if acc > best:
            best, waited = acc, 0
            continue
        waited += 1
        if waited >= config.lr_patience:
            lr *= config.lr_factor
            waited = 0
    return lr


def evaluate(model: Model, dataset: Dataset, batch_size: int = 64) -> tuple[float, float]:
    """Mean cross-entropy and accuracy, no augmentation."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.images[start:start + batch_size]
        y = dataset.labels[start:start + batch_size]
        probs = forward_batch(model, x)
        total_loss += float(np.sum(L.cross_entropy(probs, y), dtype=np.float64))
        correct += int(np.sum(np.argmax(probs, axis=1) == y))
    return total_loss / len(dataset), correct / len(dataset)


def _check_split(name: str, ds: Dataset, num_classes: int) -> None:
    if len(ds) == 0:
        raise DataError(f"{name} split is empty")
    if ds.labels.min() < 0 or ds.labels.max() >= num_classes:
        raise DataError(f"{name} split has labels outside [0, {num_classes})")


def train(
    model: Model,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainingConfig,
    evaluate_fn: Callable[[Model, Dataset], tuple[float, float]] | None = None,
    checkpoint_path=None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Model, TrainingHistory]:
    """Train a copy of ``model``; return the best-validation-accuracy weights and the history.

    ``evaluate_fn`` replaces :func:`evaluate` for the validation pass. With
    ``checkpoint_path`` the best weights are written there on every
    improvement and the history CSV next to it after every epoch.
    """
    num_classes = model.spec.num_classes
    _check_split("train", train_set, num_classes)
    _check_split("val", val_set, num_classes)
    dtype = np.dtype(config.dtype)
    work = model.astype(dtype)
    train_x = np.asarray(train_set.images, dtype=dtype)
    train_y = np.asarray(train_set.labels, dtype=np.intp)
    if evaluate_fn is None:
        def evaluate_fn(m, ds):
            return evaluate(m, ds, config.eval_batch_size)

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history = TrainingHistory()
    best_params = {k: v.copy() for k, v in work.params.items()}
    waited = 0
    n = len(train_y)
    for epoch in range(1, config.max_epochs + 1):
        lr = apply_lr_schedule(history, config)
        order = rng.permutation(n)
        flips = rng.random((n, 2)) < 0.5 if config.augment else None
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x = train_x[idx]
            if flips is not None:
                x = flip_batch(x, flips[idx])
            y = train_y[idx]
            cache: list = []
            probs = forward_batch(work, x, cache)
            losses = L.cross_entropy(probs, y)
            loss_sum += float(np.sum(losses, dtype=np.float64))
            correct += int(np.sum(np.argmax(probs, axis=1) == y))
            grads = backward(work, cache, L.softmax_cross_entropy_grad(probs, y) / len(idx))
            grads.pop("input")
            adam_step(work.params, grads, state, config, lr)
        if not math.isfinite(loss_sum):
            raise NumericError(f"training loss became non-finite in epoch {epoch}")
        val_loss, val_acc = evaluate_fn(work, val_set)
        record = EpochRecord(epoch, loss_sum / n, correct / n, float(val_loss), float(val_acc), lr)
        improved = history._add(record)
        if improved:
            waited = 0
            best_params = {k: v.copy() for k, v in work.params.items()}
            if checkpoint_path is not None:
                save_weights(Model(work.spec, best_params), checkpoint_path)
        else:
            waited += 1
        if checkpoint_path is not None:
            history.write_csv(history_path(checkpoint_path))
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f lr %.2e",
                 epoch, record.train_loss, record.train_acc, record.val_loss, record.val_acc, lr)
        if on_epoch is not None:
            on_epoch(record)
        if waited >= config.early_stop_patience:
            history.stopped_early = True
            break
    return Model(work.spec, best_params), history


def history_path(weights_path) -> Path:
    p = Path(weights_path)
    return p.with_name(p.name + ".history.csv")

"""Confusion matrices, per-class metrics, grouping and the latency benchmark."""
from __future__ import annotations

import csv
import io
import json
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from specklenet.errors import DataError, ShapeError
from specklenet.reference import PUBLISHED_IMAGES_PER_SECOND, PUBLISHED_SECONDS_PER_SAMPLE
from specklenet.taxonomy import Granularity, Taxonomy


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got shape {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        self.counts = c.astype(np.int64)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


def confusion(preds, labels, n: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise ShapeError(f"{len(preds)} predictions for {len(labels)} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"{name} outside [0, {n})")
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_f1: float
    weighted_f1: float

    def to_dict(self, class_names: list[str] | None = None) -> dict:
        names = class_names or [str(i) for i in range(len(self.f1))]
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {"class": names[i], "precision": float(self.precision[i]), "recall": float(self.recall[i]),
                 "f1": float(self.f1[i]), "support": int(self.support[i])}
                for i in range(len(self.f1))
            ],
        }


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def report(cm: ConfusionMatrix) -> MetricReport:
    """Per-class precision/recall/F1; any metric with a zero denominator is 0."""
    if cm.total < 1:
        raise DataError("cannot report on an empty confusion matrix")
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    support = cm.counts.sum(axis=1)
    precision = _safe_div(tp, c.sum(axis=0))
    recall = _safe_div(tp, c.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return MetricReport(
        accuracy=float(tp.sum() / cm.total),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_f1=float(f1.mean()),
        weighted_f1=float(np.dot(f1, support) / support.sum()),
    )


def aggregate_confusion(cm: ConfusionMatrix, mapping, n_groups: int) -> ConfusionMatrix:
    """Sum counts over blocks given by ``mapping[class] -> group``."""
    mapping = np.asarray(mapping, dtype=np.int64)
    if mapping.shape != (cm.n,):
        raise ShapeError(f"mapping covers {mapping.size} classes, matrix has {cm.n}")
    onehot = np.zeros((cm.n, n_groups), dtype=np.int64)
    onehot[np.arange(cm.n), mapping] = 1
    return ConfusionMatrix(onehot.T @ cm.counts @ onehot)


def group_confusion(cm: ConfusionMatrix, taxonomy: Taxonomy, granularity) -> ConfusionMatrix:
    if cm.n != len(taxonomy):
        raise ShapeError(f"matrix has {cm.n} classes, taxonomy has {len(taxonomy)}")
    g = Granularity(granularity)
    return aggregate_confusion(cm, taxonomy.group_map(g), len(taxonomy.families(g)))


@dataclass
class EquivalenceResult:
    ok: bool
    diff: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.ok


def grouped_equivalence_check(preds, labels, taxonomy: Taxonomy, granularity) -> EquivalenceResult:
    """Group-then-count must equal count-then-group; on mismatch ``diff`` holds the difference."""
    g = Granularity(granularity)
    mapping = taxonomy.group_map(g)
    k = len(taxonomy.families(g))
    via_matrix = group_confusion(confusion(preds, labels, len(taxonomy)), taxonomy, g).counts
    via_labels = confusion(mapping[np.asarray(preds, dtype=np.int64)],
                           mapping[np.asarray(labels, dtype=np.int64)], k).counts
    if np.array_equal(via_matrix, via_labels):
        return EquivalenceResult(True)
    return EquivalenceResult(False, via_matrix - via_labels)


@dataclass
class BenchResult:
    seconds_per_sample: float
    images_per_second: float
    samples: int
    warmup: int

    def lines(self) -> list[str]:
        return [
            f"samples: {self.samples} (after {self.warmup} warmup)",
            f"seconds per sample: {self.seconds_per_sample:.6f}",
            f"images per second: {self.images_per_second:.2f}",
            f"published reference (hardware-dependent, not comparable across machines): "
            f"{PUBLISHED_SECONDS_PER_SAMPLE} s/sample, {PUBLISHED_IMAGES_PER_SECOND} images/s",
        ]

    def to_dict(self) -> dict:
        return {
            "seconds_per_sample": self.seconds_per_sample,
            "images_per_second": self.images_per_second,
            "samples": self.samples,
            "warmup": self.warmup,
            "reference_seconds_per_sample": PUBLISHED_SECONDS_PER_SAMPLE,
            "reference_images_per_second": PUBLISHED_IMAGES_PER_SECOND,
            "reference_note": "hardware-dependent",
        }


def benchmark(model, images, warmup: int = 1, threads: int | None = 1) -> BenchResult:
    """Time single-image forward passes.

    The first ``warmup`` images are run untimed; the rest are timed one at
    a time. ``threads=1`` pins BLAS to one thread, ``None`` leaves it alone.
    """
    from specklenet.model import forward

    if warmup < 1:
        raise ValueError(f"warmup must be >= 1, got {warmup}")
    images = list(images)
    if len(images) <= warmup:
        raise DataError(f"need more than {warmup} images, got {len(images)}")
    if threads is not None:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(limits=threads)
    else:
        limiter = nullcontext()
    with limiter:
        for img in images[:warmup]:
            forward(model, img)
        timed = images[warmup:]
        start = time.perf_counter()
        for img in timed:
            forward(model, img)
        elapsed = time.perf_counter() - start
    per = elapsed / len(timed)
    return BenchResult(per, 1.0 / per, len(timed), warmup)


def _writable(path: Path) -> Path:
    path = Path(path)
    if not path.parent.is_dir():
        raise DataError(f"cannot write {path}: directory {path.parent} does not exist")
    return path


def report_csv(rep: MetricReport, cm: ConfusionMatrix, class_names: list[str] | None = None) -> str:
    """One row per true class: counts by predicted class, then metrics; summary rows follow."""
    names = class_names or [str(i) for i in range(cm.n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class"] + [f"pred_{i}" for i in range(cm.n)] + ["support", "precision", "recall", "f1"])
    for i in range(cm.n):
        w.writerow([names[i]] + [int(v) for v in cm.counts[i]] +
                   [int(rep.support[i]), repr(float(rep.precision[i])), repr(float(rep.recall[i])),
                    repr(float(rep.f1[i]))])
    for key in ("accuracy", "macro_f1", "weighted_f1"):
        w.writerow([f"#{key}", repr(getattr(rep, key))])
    return buf.getvalue()


def export_report(rep: MetricReport, cm: ConfusionMatrix, path, fmt: str = "json",
                  class_names: list[str] | None = None) -> None:
    path = _writable(path)
    fmt = fmt.lower()
    if fmt == "json":
        doc = rep.to_dict(class_names)
        doc["confusion"] = cm.counts.tolist()
        text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    elif fmt == "csv":
        text = report_csv(rep, cm, class_names)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    n = sum(1 for h in rows[0] if h.startswith("pred_"))
    body = [r for r in rows[1:] if r and not r[0].startswith("#")]
    return ConfusionMatrix(np.array([[int(v) for v in r[1:1 + n]] for r in body], dtype=np.int64))


def confusion_text(cm: ConfusionMatrix, labels: list[str] | None = None) -> str:
    labels = labels or [str(i) for i in range(cm.n)]
    width = max(len(str(cm.counts.max())), 3)
    lab = max(len(s) for s in labels)
    head = " " * lab + " | " + " ".join(f"{i:>{width}}" for i in range(cm.n))
    lines = [head, "-" * len(head)]
    for i in range(cm.n):
        lines.append(f"{labels[i]:>{lab}} | " + " ".join(f"{v:>{width}}" for v in cm.counts[i]))
    return "\n".join(lines) + "\n"


def render_confusion_plot(cm: ConfusionMatrix, path, labels: list[str] | None = None) -> Path:
    """Heatmap PNG, or a text grid when ``path`` ends in ``.txt`` or matplotlib is missing."""
    path = _writable(path)
    if path.suffix.lower() != ".txt":
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            path = path.with_suffix(".txt")
        else:
            labels = labels or [str(i) for i in range(cm.n)]
            size = max(4.0, 0.18 * cm.n + 2)
            fig, ax = plt.subplots(figsize=(size, size))
            ax.imshow(cm.counts, cmap="Blues", interpolation="nearest")
            ax.set_xticks(range(cm.n), labels, rotation=90, fontsize=max(4, 10 - cm.n // 10))
            ax.set_yticks(range(cm.n), labels, fontsize=max(4, 10 - cm.n // 10))
            ax.set_xlabel("predicted")
            ax.set_ylabel("true")
            if cm.n <= 12:
                for (i, j), v in np.ndenumerate(cm.counts):
                    ax.text(j, i, str(v), ha="center", va="center", fontsize=8)
            fig.tight_layout()
            # fixed metadata keeps repeated renders byte-identical
            fig.savefig(path, dpi=100, metadata={"Software": None})
            plt.close(fig)
            return path
    path.write_text(confusion_text(cm, labels))
    return path

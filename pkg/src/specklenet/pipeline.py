"""Image preprocessing, flip augmentation and dataset manifests.

The chain applied to every capture is green channel -> bilinear resize
(on the 8-bit plane, computed in float64) -> divide by 255.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from specklenet.errors import ImageFormatError, ManifestError, ShapeError
from specklenet.imageio import RawImage, read_pnm

INPUT_SIZE = 512


def extract_green(img: RawImage) -> np.ndarray:
    """``(h, w, 1)`` float64 plane in [0, 255]: green of RGB, or the single gray channel."""
    if img.channels == 3:
        return img.pixels[:, :, 1:2].astype(np.float64)
    if img.channels == 1:
        return img.pixels.astype(np.float64)
    raise ImageFormatError(f"cannot extract green from a {img.channels}-channel image")


def normalize(t: np.ndarray) -> np.ndarray:
    return np.asarray(t, dtype=np.float64) / 255.0


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: output sample d sits at input coordinate (d + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(t: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected (h, w, c), got shape {t.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    if t.shape[:2] == (out_h, out_w):
        return t.copy()
    lo, hi, f = _axis_weights(t.shape[0], out_h)
    f = f[:, None, None]
    rows = t[lo] * (1 - f) + t[hi] * f
    lo, hi, f = _axis_weights(t.shape[1], out_w)
    f = f[None, :, None]
    return rows[:, lo] * (1 - f) + rows[:, hi] * f


def preprocess(img: RawImage, size: int = INPUT_SIZE) -> np.ndarray:
    """Full chain to a ``(size, size, 1)`` tensor in [0, 1]."""
    return normalize(resize_bilinear(extract_green(img), size, size))


def hflip(t: np.ndarray) -> np.ndarray:
    return t[..., :, ::-1, :]


def vflip(t: np.ndarray) -> np.ndarray:
    return t[..., ::-1, :, :]


def augment_flips(t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent horizontal and vertical flips, each with probability 0.5."""
    do_h, do_v = rng.random(2) < 0.5
    if do_h:
        t = hflip(t)
    if do_v:
        t = vflip(t)
    return np.ascontiguousarray(t)


def flip_batch(x: np.ndarray, flips: np.ndarray) -> np.ndarray:
    """Flip ``(N, H, W, C)`` images per row of the boolean ``(N, 2)`` mask (horizontal, vertical)."""
    out = x.copy()
    h = flips[:, 0]
    v = flips[:, 1]
    out[h] = out[h][:, :, ::-1]
    out[v] = out[v][:, ::-1]
    return out


@dataclass
class Dataset:
    """Preprocessed images ``(N, H, W, 1)`` with integer labels ``(N,)``."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ShapeError(f"images {self.images.shape} and labels {self.labels.shape} disagree")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx])


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass
class ManifestEntry:
    path: str
    class_id: int
    class_name: str
    line: int


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    split: Split | None = None

    def __len__(self) -> int:
        return len(self.entries)


def _guess_split(path: Path) -> Split | None:
    stem = path.stem.lower()
    for split in Split:
        if stem == split.value or stem.startswith(split.value + "_") or stem.endswith("_" + split.value):
            return split
    return None


def load_manifest(path, taxonomy, root=None, split: Split | str | None = None) -> DatasetManifest:
    """Parse ``<relative path>\\t<class name>`` lines; blank lines and ``#`` comments are skipped.

    Paths are relative to ``root``, by default the manifest's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc.strerror})") from None
    manifest = DatasetManifest(Path(root) if root is not None else path.parent,
                               split=Split(split) if split is not None else _guess_split(path))
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ManifestError(f"{path}:{lineno}: expected '<path>\\t<class name>', got {raw!r}")
        rel, name = parts[0].strip(), parts[1].strip()
        if rel in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path {rel!r} (first on line {seen[rel]})")
        try:
            cid = taxonomy.index_of(name)
        except KeyError:
            raise ManifestError(f"{path}:{lineno}: unknown class name {name!r}") from None
        seen[rel] = lineno
        manifest.entries.append(ManifestEntry(rel, cid, name, lineno))
    if not manifest.entries:
        raise ManifestError(f"{path}: manifest has no entries")
    return manifest


def load_image(manifest: DatasetManifest, entry: ManifestEntry) -> RawImage:
    return read_pnm(manifest.root / entry.path)


def iter_dataset(manifest: DatasetManifest, size: int = INPUT_SIZE) -> Iterator[tuple[np.ndarray, int]]:
    for entry in manifest.entries:
        yield preprocess(load_image(manifest, entry), size), entry.class_id


def load_dataset(manifest: DatasetManifest, size: int = INPUT_SIZE, dtype=np.float32) -> Dataset:
    images = np.empty((len(manifest), size, size, 1), dtype=dtype)
    labels = np.empty(len(manifest), dtype=np.intp)
    for i, (t, cid) in enumerate(iter_dataset(manifest, size)):
        images[i] = t
        labels[i] = cid
    return Dataset(images, labels)

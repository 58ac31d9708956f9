"""Synthetic speckle images and a dataset emitter built on them.

Each image is the intensity of a smoothed complex Gaussian field,
``I = a**2 + b**2`` with ``a`` and ``b`` independent white-noise planes
low-pass filtered by an anisotropic, rotated Gaussian. The filter is
applied as a multiplication in the Fourier domain, so boundaries wrap.
This reproduces the exponential intensity statistics and a tunable grain
size; it does not model any optical system.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from specklenet.imageio import RawImage, write_pnm

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SpeckleParams:
    correlation_length: float = 2.0  # Gaussian sigma in pixels along the minor axis
    anisotropy: float = 1.0  # major/minor sigma ratio
    orientation: float = 0.0  # radians, direction of the major axis
    mean_intensity: float = 0.25  # in (0, 1], fraction of full scale
    seed: int = 42

    def __post_init__(self):
        if not self.correlation_length > 0:
            raise ValueError(f"correlation_length must be > 0, got {self.correlation_length}")
        if not self.anisotropy >= 1:
            raise ValueError(f"anisotropy must be >= 1, got {self.anisotropy}")
        if not 0 < self.mean_intensity <= 1:
            raise ValueError(f"mean_intensity must be in (0, 1], got {self.mean_intensity}")


def _transfer_function(h: int, w: int, p: SpeckleParams) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    c, s = math.cos(p.orientation), math.sin(p.orientation)
    fu = c * fx + s * fy  # frequency along the major axis
    fv = -s * fx + c * fy
    sig_u = p.correlation_length * p.anisotropy
    sig_v = p.correlation_length
    return np.exp(-2 * math.pi ** 2 * ((sig_u * fu) ** 2 + (sig_v * fv) ** 2))


def speckle_intensity(params: SpeckleParams, h: int, w: int) -> np.ndarray:
    """Unquantized intensity field with mean ``params.mean_intensity``."""
    rng = np.random.default_rng(params.seed)
    noise = rng.standard_normal((2, h, w))
    tf = _transfer_function(h, w, params)
    a, b = np.fft.ifft2(np.fft.fft2(noise) * tf).real
    intensity = a * a + b * b
    return intensity * (params.mean_intensity / intensity.mean())


def synth_speckle(params: SpeckleParams, h: int, w: int, channels: int = 1) -> RawImage:
    """8-bit speckle image; with ``channels=3`` the pattern sits in green."""
    if h < 1 or w < 1:
        raise ValueError(f"image size must be positive, got {h}x{w}")
    level = np.clip(np.rint(speckle_intensity(params, h, w) * 255), 0, 255).astype(np.uint8)
    if channels == 1:
        return RawImage(level[:, :, None])
    if channels == 3:
        rgb = np.zeros((h, w, 3), dtype=np.uint8)
        rgb[:, :, 1] = level
        rgb[:, :, 0] = level // 8  # stray light in the other planes
        rgb[:, :, 2] = level // 16
        return RawImage(rgb)
    raise ValueError(f"channels must be 1 or 3, got {channels}")


def autocorrelation_halfwidth(image: np.ndarray) -> float:
    """Lag (pixels, linearly interpolated) where the horizontal autocorrelation falls to 0.5."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[:, :, 0]
    z = img - img.mean()
    spec = np.abs(np.fft.fft(z, axis=1)) ** 2
    ac = np.fft.ifft(spec, axis=1).real.sum(axis=0)
    ac = ac / ac[0]
    below = np.nonzero(ac[: len(ac) // 2] < 0.5)[0]
    if len(below) == 0:
        return float(len(ac) // 2)
    k = int(below[0])
    return float(k - 1 + (ac[k - 1] - 0.5) / (ac[k - 1] - ac[k]))


def class_lengths(n_classes: int, shortest: float = 1.0, longest: float = 6.0) -> list[float]:
    """Geometric ladder of correlation lengths, one per class."""
    if n_classes == 1:
        return [shortest]
    return [float(x) for x in np.geomspace(shortest, longest, n_classes)]


def image_seed(seed: int, class_id: int, split: str, index: int) -> int:
    ss = np.random.SeedSequence([seed, class_id, SPLITS.index(split), index])
    return int(ss.generate_state(1)[0])


def write_synthetic_dataset(
    out_dir,
    class_names: list[str],
    counts: dict[str, int],
    resolution: int = 128,
    seed: int = 42,
    lengths: list[float] | None = None,
    channels: int = 1,
    mean_intensity: float = 0.25,
) -> dict:
    """Write ``out_dir/<class>/<split>_<i>.pgm|ppm``, one manifest per split and ``params.json``.

    Classes differ only in correlation length. Returns the ``params.json`` content.
    """
    out = Path(out_dir)
    lengths = lengths if lengths is not None else class_lengths(len(class_names))
    if len(lengths) != len(class_names):
        raise ValueError(f"{len(lengths)} lengths for {len(class_names)} classes")
    ext = ".pgm" if channels == 1 else ".ppm"
    manifests: dict[str, list[str]] = {split: [] for split in SPLITS}
    records = []
    for cid, (name, length) in enumerate(zip(class_names, lengths)):
        (out / name).mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            for i in range(counts.get(split, 0)):
                params = SpeckleParams(correlation_length=length, mean_intensity=mean_intensity,
                                       seed=image_seed(seed, cid, split, i))
                rel = f"{name}/{split}_{i:04d}{ext}"
                write_pnm(out / rel, synth_speckle(params, resolution, resolution, channels))
                manifests[split].append(f"{rel}\t{name}")
                records.append({"path": rel, "class_name": name, "split": split, **asdict(params)})
    for split, lines in manifests.items():
        if lines:
            (out / f"{split}.txt").write_text("\n".join(lines) + "\n")
    meta = {"resolution": resolution, "seed": seed, "channels": channels,
            "classes": [{"name": n, "correlation_length": l} for n, l in zip(class_names, lengths)],
            "images": records}
    (out / "params.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return meta

"""Material classes, their nine- and five-family groupings, and cutter presets."""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from specklenet.errors import ShapeError, TaxonomyError

NUM_CLASSES = 59
NUM_FAMILIES9 = 9
NUM_FAMILIES5 = 5
TAXONOMY_ENV = "SPECKLENET_TAXONOMY"


class Granularity(str, enum.Enum):
    FINE = "fine"
    NINE = "nine"
    FIVE = "five"


@dataclass(frozen=True)
class MaterialClass:
    id: int
    name: str
    family9: str
    family5: str
    hazardous: bool


@dataclass(frozen=True)
class Preset:
    power_percent: float
    speed_mm_per_s: float
    frequency_hz: float
    allowed: bool


class Taxonomy:
    """Validated, immutable class list with family lookups.

    Family indices follow order of first appearance in the class list.
    """

    def __init__(self, classes: list[MaterialClass], presets: dict[str, Preset], version: str = "",
                 expected_counts: tuple[int, int, int] | None = (NUM_CLASSES, NUM_FAMILIES9, NUM_FAMILIES5)):
        self.classes = tuple(classes)
        self.presets = dict(presets)
        self.version = version
        _validate(self.classes, self.presets, expected_counts)
        self._by_name = {c.name: c.id for c in self.classes}
        self._families = {
            Granularity.FINE: [c.name for c in self.classes],
            Granularity.NINE: list(dict.fromkeys(c.family9 for c in self.classes)),
            Granularity.FIVE: list(dict.fromkeys(c.family5 for c in self.classes)),
        }
        self._maps = {
            Granularity.FINE: np.arange(len(self.classes)),
            Granularity.NINE: np.array([self._families[Granularity.NINE].index(c.family9) for c in self.classes]),
            Granularity.FIVE: np.array([self._families[Granularity.FIVE].index(c.family5) for c in self.classes]),
        }

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        return self._by_name[name]

    def families(self, granularity) -> list[str]:
        return list(self._families[Granularity(granularity)])

    def group_map(self, granularity) -> np.ndarray:
        """Class id -> family index at ``granularity``."""
        return self._maps[Granularity(granularity)].copy()

    def family_of(self, class_id: int, granularity) -> str:
        g = Granularity(granularity)
        cls = self._class(class_id)
        if g is Granularity.FINE:
            return cls.name
        return cls.family9 if g is Granularity.NINE else cls.family5

    def preset_for(self, class_id: int) -> Preset:
        return self.presets[self._class(class_id).family5]

    def group_probabilities(self, probs: np.ndarray, granularity) -> np.ndarray:
        """Sum class probabilities within each family."""
        probs = np.asarray(probs)
        if probs.shape[-1] != len(self):
            raise ShapeError(f"probability vector has {probs.shape[-1]} entries, taxonomy has {len(self)}")
        g = Granularity(granularity)
        out = np.zeros(probs.shape[:-1] + (len(self._families[g]),), dtype=probs.dtype)
        for cid, fam in enumerate(self._maps[g]):
            out[..., fam] += probs[..., cid]
        return out

    def _class(self, class_id: int) -> MaterialClass:
        if not 0 <= class_id < len(self.classes):
            raise IndexError(f"class id {class_id} out of range [0, {len(self.classes)})")
        return self.classes[class_id]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "classes": [vars(c).copy() for c in self.classes],
            "presets": {k: vars(p).copy() for k, p in self.presets.items()},
        }


def _validate(classes, presets, expected_counts) -> None:
    if expected_counts is not None:
        n, n9, n5 = expected_counts
        if len(classes) != n:
            raise TaxonomyError(f"class count: expected {n} classes, found {len(classes)}")
    if [c.id for c in classes] != list(range(len(classes))):
        raise TaxonomyError("class ids: ids must be dense 0..n-1 in listed order")
    names = [c.name for c in classes]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise TaxonomyError(f"duplicate class names: {dupes}")
    coarse: dict[str, str] = {}
    for c in classes:
        prev = coarse.setdefault(c.family9, c.family5)
        if prev != c.family5:
            raise TaxonomyError(
                f"family coarsening: nine-family {c.family9!r} straddles five-families {prev!r} and {c.family5!r}"
            )
    if expected_counts is not None:
        fams9 = {c.family9 for c in classes}
        fams5 = {c.family5 for c in classes}
        if len(fams9) != n9 or len(fams5) != n5:
            raise TaxonomyError(f"family count: expected {n9}/{n5} families, found {len(fams9)}/{len(fams5)}")
    missing = sorted({c.family5 for c in classes} - set(presets))
    if missing:
        raise TaxonomyError(f"missing preset for five-families {missing}")
    for name, p in presets.items():
        if not (0 < p.power_percent <= 100 and p.speed_mm_per_s > 0 and p.frequency_hz > 0):
            raise TaxonomyError(f"preset {name!r} has out-of-range values {p}")
    for c in classes:
        if c.hazardous and presets[c.family5].allowed:
            raise TaxonomyError(f"hazardous class {c.name!r} resolves to an allowed preset ({c.family5!r})")


def taxonomy_from_dict(doc: dict, **kwargs) -> Taxonomy:
    try:
        classes = [MaterialClass(int(c["id"]), str(c["name"]), str(c["family9"]), str(c["family5"]),
                                 bool(c["hazardous"])) for c in doc["classes"]]
        presets = {k: Preset(float(v["power_percent"]), float(v["speed_mm_per_s"]),
                             float(v["frequency_hz"]), bool(v["allowed"])) for k, v in doc["presets"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise TaxonomyError(f"malformed taxonomy document: {exc!r}") from None
    return Taxonomy(classes, presets, str(doc.get("version", "")), **kwargs)


def default_taxonomy_path():
    env = os.environ.get(TAXONOMY_ENV)
    if env:
        return Path(env)
    return resources.files("specklenet") / "data" / "taxonomy.json"


def load_taxonomy(path=None) -> Taxonomy:
    """Load and validate a taxonomy JSON; ``None`` picks ``$SPECKLENET_TAXONOMY`` or the shipped file."""
    src = default_taxonomy_path() if path is None else Path(path)
    try:
        doc = json.loads(src.read_text())
    except OSError as exc:
        raise TaxonomyError(f"{src}: cannot read taxonomy ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"{src}: invalid JSON ({exc})") from None
    return taxonomy_from_dict(doc)


@dataclass(frozen=True)
class Decision:
    class_id: int
    class_name: str
    confidence: float
    family9: str
    family5: str
    preset: Preset
    allowed: bool
    refusal_reason: str | None

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "class_id": self.class_id,
            "confidence": self.confidence,
            "family9": self.family9,
            "family5": self.family5,
            "preset": vars(self.preset).copy(),
            "allowed": self.allowed,
            "refusal_reason": self.refusal_reason,
        }


def classify_with_preset(model, image, taxonomy: Taxonomy) -> Decision:
    from specklenet.model import predict

    if model.spec.num_classes != len(taxonomy):
        raise ShapeError(f"model predicts {model.spec.num_classes} classes, taxonomy has {len(taxonomy)}")
    cid, conf = predict(model, image)
    cls = taxonomy.classes[cid]
    preset = taxonomy.preset_for(cid)
    allowed = preset.allowed and not cls.hazardous
    reason = None
    if cls.hazardous:
        reason = "hazardous_material"
    elif not preset.allowed:
        reason = "preset_disallowed"
    return Decision(cid, cls.name, conf, cls.family9, cls.family5, preset, allowed, reason)

"""Dataset handles: synthetic generation, annotated-directory ingest, export and splitting."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .faces import (
    DEFAULT_SIZE,
    LEFT_OUTER,
    RIGHT_OUTER,
    FaceParams,
    LandmarkSet,
    face_landmarks,
    render_face,
    sample_face_params,
)

log = logging.getLogger(__name__)

ANNOTATION_FILE = "annotations.json"


class DatasetError(ValueError):
    """Raised when a dataset cannot be built; ``diagnostics`` lists per-record problems."""

    def __init__(self, message, diagnostics=()):
        self.diagnostics = list(diagnostics)
        if self.diagnostics:
            message = message + "\n  " + "\n  ".join(self.diagnostics)
        super().__init__(message)


@dataclass(frozen=True)
class Record:
    image_id: str
    source: FaceParams | Path
    landmarks: LandmarkSet


@dataclass
class DatasetHandle:
    records: list[Record]
    split: str = "all"
    provenance: str = "synthetic"
    size: tuple[int, int] = DEFAULT_SIZE
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._cache: np.ndarray | None = None
        for r in self.records:
            if r.landmarks.names != self.records[0].landmarks.names:
                raise DatasetError(f"record {r.image_id} uses a different schema")

    def __len__(self):
        return len(self.records)

    @property
    def names(self) -> tuple[str, ...]:
        return self.records[0].landmarks.names

    def image(self, i: int) -> np.ndarray:
        if self._cache is not None:
            return self._cache[i].astype(np.float64)
        src = self.records[i].source
        if isinstance(src, FaceParams):
            return render_face(src, self.size)[0]
        return load_png(src)

    def image_array(self) -> np.ndarray:
        """All images stacked as ``uint8`` (rendered or read once, then cached)."""
        if self._cache is None:
            self._cache = np.stack([np.rint(self.image(i)).astype(np.uint8) for i in range(len(self))])
        return self._cache

    def landmark_array(self) -> np.ndarray:
        return np.stack([r.landmarks.coords for r in self.records])

    def subset(self, indices, split: str | None = None) -> "DatasetHandle":
        sub = DatasetHandle(
            [self.records[i] for i in indices],
            split=split or self.split,
            provenance=self.provenance,
            size=self.size,
        )
        if self._cache is not None:
            sub._cache = self._cache[np.asarray(indices, dtype=int)]
        return sub


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def synthetic_dataset(n: int, seed: int = 0, size=DEFAULT_SIZE, split: str = "all") -> DatasetHandle:
    face_seeds = np.random.SeedSequence(int(seed)).generate_state(int(n))
    records = []
    for i, s in enumerate(face_seeds):
        params = sample_face_params(int(s))
        records.append(Record(f"syn{seed}_{i:05d}", params, face_landmarks(params)))
    return DatasetHandle(records, split=split, provenance="synthetic", size=tuple(size))


def _round2(x: float) -> float:
    return float(f"{x:.2f}")


def export_dataset(handle: DatasetHandle, path) -> Path:
    """Write PNG images plus ``annotations.json`` (sorted keys, 2-decimal coordinates)."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i, rec in enumerate(handle.records):
        rel = f"images/{rec.image_id}.png"
        img = np.clip(np.rint(handle.image(i)), 0, 255).astype(np.uint8)
        Image.fromarray(img).save(root / rel, optimize=False)
        records.append({"image": rel, "landmarks": [[_round2(x), _round2(y)] for x, y in rec.landmarks.coords]})
    doc = {"schema": list(handle.names), "records": records}
    out = root / ANNOTATION_FILE
    out.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return out


def load_annotated_dataset(path, strict: bool = False, split: str = "all") -> DatasetHandle:
    """Read a directory holding images and one ``annotations.json``.

    Invalid records are skipped with a diagnostic (or raise when ``strict``).
    A schema that lacks the outer-eye-corner pair, or an empty result, is a
    hard failure.
    """
    root = Path(path)
    ann = root / ANNOTATION_FILE if root.is_dir() else root
    if ann.is_dir() or not ann.exists():
        candidates = sorted(root.glob("*.json")) if root.is_dir() else []
        if len(candidates) != 1:
            raise DatasetError(f"no annotation file found in {root}")
        ann = candidates[0]
    base = ann.parent
    try:
        doc = json.loads(ann.read_text())
        schema = tuple(str(n) for n in doc["schema"])
        raw_records = list(doc["records"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed annotation file {ann}: {exc}") from exc
    missing = {LEFT_OUTER, RIGHT_OUTER} - set(schema)
    if missing:
        raise DatasetError(f"schema in {ann} lacks normalisation points {sorted(missing)}")

    diagnostics, records, size = [], [], None
    for j, entry in enumerate(raw_records):
        try:
            rel = entry["image"]
            coords = np.asarray(entry["landmarks"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            diagnostics.append(f"record {j}: malformed entry ({exc})")
            continue
        img_path = base / rel
        if not img_path.is_file():
            diagnostics.append(f"record {j}: missing image file {rel}")
            continue
        if coords.shape != (len(schema), 2) or not np.isfinite(coords).all():
            diagnostics.append(f"record {j} ({rel}): expected {len(schema)} finite (x, y) pairs, got shape {coords.shape}")
            continue
        with Image.open(img_path) as im:
            wh = im.size
        if size is None:
            size = (wh[1], wh[0])
        elif (wh[1], wh[0]) != size:
            diagnostics.append(f"record {j} ({rel}): size {wh[1]}x{wh[0]} differs from {size[0]}x{size[1]}")
            continue
        records.append(Record(Path(rel).stem, img_path, LandmarkSet(coords, schema)))

    if diagnostics and strict:
        raise DatasetError(f"{len(diagnostics)} invalid record(s) in {ann}", diagnostics)
    if not records:
        raise DatasetError(f"no valid records in {ann}", diagnostics)
    for d in diagnostics:
        log.warning("%s: %s", ann, d)
    return DatasetHandle(records, split=split, provenance="ingested", size=size, diagnostics=diagnostics)


def split_dataset(handle: DatasetHandle, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle deterministically and cut into disjoint train/val/test handles."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n = len(handle)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise ValueError(f"ratios {ratios} leave an empty split for {n} records")
    order = np.random.default_rng(seed).permutation(n)
    cuts = (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :])
    return tuple(handle.subset(idx, name) for idx, name in zip(cuts, ("train", "val", "test")))

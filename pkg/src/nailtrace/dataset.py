"""Dataset directory IO.

Layout: ``manifest.json``, ``images/{id}.png`` (8-bit RGB),
``fgbg/{id}.png`` and ``classes/{id}.png`` (8-bit gray), and
``fields/{id}.ntfd`` — raw little-endian float32 with a 16-byte header:
magic ``NTFD``, then H, W, channels as u32.  Round-trips are lossless.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .synthetic import ImageSample, generate_sample, scene_for_index

FIELD_MAGIC = b"NTFD"

# train/val/test shares mirroring a 941/254/243 split
SPLIT_FRACTIONS = {"train": 941 / 1438, "val": 254 / 1438, "test": 243 / 1438}


def write_field(path: str | Path, field: np.ndarray) -> None:
    h, w, c = field.shape
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(struct.pack("<III", h, w, c))
        f.write(np.ascontiguousarray(field, dtype="<f4").tobytes())


def read_field(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != FIELD_MAGIC:
            raise IOError(f"{path}: bad field-file magic")
        h, w, c = struct.unpack("<III", f.read(12))
        buf = f.read(4 * h * w * c)
        if len(buf) != 4 * h * w * c:
            raise IOError(f"{path}: truncated field payload")
        return np.frombuffer(buf, dtype="<f4").reshape(h, w, c).copy()


@dataclass
class SceneRecord:
    id: str
    split: str
    seed: int
    nail_count: int
    directions: dict[int, tuple[float, float]]


@dataclass
class Manifest:
    root: Path
    scenes: list[SceneRecord]
    fg_fraction: float

    def ids(self, split: str) -> list[str]:
        return [s.id for s in self.scenes if s.split == split]

    def record(self, scene_id: str) -> SceneRecord:
        for s in self.scenes:
            if s.id == scene_id:
                return s
        raise KeyError(scene_id)


def _split_for_index(i: int, total: int) -> str:
    n_train = round(SPLIT_FRACTIONS["train"] * total)
    n_val = round(SPLIT_FRACTIONS["val"] * total)
    if i < n_train:
        return "train"
    if i < n_train + n_val:
        return "val"
    return "test"


def write_dataset(out_dir: str | Path, count: int, base_seed: int, **scene_overrides) -> Manifest:
    """Generate ``count`` scenes and persist them with a split manifest."""
    root = Path(out_dir)
    for sub in ("images", "fgbg", "classes", "fields"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    scenes: list[SceneRecord] = []
    fg_total = 0.0
    for i in range(count):
        spec = scene_for_index(i, base_seed, **scene_overrides)
        sample = generate_sample(spec)
        sid = f"{i:06d}"
        save_sample(root, sid, sample)
        fg_total += sample.fg_fraction()
        scenes.append(
            SceneRecord(
                id=sid,
                split=_split_for_index(i, count),
                seed=spec.rng_seed,
                nail_count=spec.nail_count,
                directions=sample.nail_directions,
            )
        )

    manifest = Manifest(root=root, scenes=scenes, fg_fraction=fg_total / max(count, 1))
    doc = {
        "fg_fraction": manifest.fg_fraction,
        "scenes": [
            {
                "id": s.id,
                "split": s.split,
                "seed": s.seed,
                "nail_count": s.nail_count,
                "directions": {str(k): list(v) for k, v in s.directions.items()},
            }
            for s in scenes
        ],
    }
    (root / "manifest.json").write_text(json.dumps(doc, indent=1))
    return manifest


def save_sample(root: Path, sid: str, sample: ImageSample) -> None:
    Image.fromarray(sample.image, mode="RGB").save(root / "images" / f"{sid}.png")
    Image.fromarray(sample.fgbg, mode="L").save(root / "fgbg" / f"{sid}.png")
    Image.fromarray(sample.classes, mode="L").save(root / "classes" / f"{sid}.png")
    write_field(root / "fields" / f"{sid}.ntfd", sample.field)


def read_dataset(root: str | Path) -> Manifest:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise IOError(f"{path}: manifest not found")
    doc = json.loads(path.read_text())
    scenes = [
        SceneRecord(
            id=s["id"],
            split=s["split"],
            seed=s["seed"],
            nail_count=s["nail_count"],
            directions={int(k): tuple(v) for k, v in s.get("directions", {}).items()},
        )
        for s in doc["scenes"]
    ]
    return Manifest(root=root, scenes=scenes, fg_fraction=doc.get("fg_fraction", 0.0))


def load_sample(root: str | Path, sid: str, directions: dict | None = None) -> ImageSample:
    root = Path(root)
    try:
        image = np.asarray(Image.open(root / "images" / f"{sid}.png").convert("RGB"))
        fgbg = np.asarray(Image.open(root / "fgbg" / f"{sid}.png"))
        classes = np.asarray(Image.open(root / "classes" / f"{sid}.png"))
        field = read_field(root / "fields" / f"{sid}.ntfd")
    except (OSError, SyntaxError) as exc:
        raise IOError(f"failed to load sample {sid} from {root}: {exc}") from exc
    return ImageSample(
        image=image.copy(),
        fgbg=fgbg.copy(),
        classes=classes.copy(),
        field=field,
        nail_directions=dict(directions or {}),
    )

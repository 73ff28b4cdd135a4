"""From dense predictions to per-nail instances.

Connected-component labeling is a run-based two-pass algorithm with
union-find: rows are decomposed into foreground runs, runs are unioned
with overlapping runs of the previous row (4-connectivity: column
overlap; 8-connectivity: overlap extended by one column), then labels
are compressed to 1..count.  Per-nail orientation is the fg-softmax
weighted average of the direction field over the component, normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .model import SegOutput

DEFAULT_MIN_AREA = 16  # px at 288x288, scaled with resolution squared
DEFAULT_FG_THRESHOLD = 0.5
DEGENERATE_ORIENTATION = (0.0, -1.0)


class UnionFind:
    """Disjoint-set forest with path halving and union by smaller root."""

    def __init__(self):
        self.parent: list[int] = []

    def make(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra < rb:
            self.parent[rb] = ra
        elif rb < ra:
            self.parent[ra] = rb


def label_components(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label a binary mask; returns (label map with labels 1..count, count)."""
    if connectivity not in (4, 8):
        raise ContractViolation(f"connectivity must be 4 or 8, got {connectivity}")
    mask = np.asarray(mask) > 0
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    uf = UnionFind()
    prev_runs: list[tuple[int, int, int]] = []  # (start, end_exclusive, run_id)

    for y in range(h):
        row = mask[y]
        if not row.any():
            prev_runs = []
            continue
        # run boundaries from the 0/1 difference profile
        d = np.diff(np.concatenate(([0], row.astype(np.int8), [0])))
        starts = np.flatnonzero(d == 1)
        ends = np.flatnonzero(d == -1)
        runs = []
        reach = 1 if connectivity == 8 else 0
        for s, e in zip(starts, ends):
            rid = uf.make()
            for ps, pe, prid in prev_runs:
                if s < pe + reach and ps < e + reach:
                    uf.union(rid, prid)
            runs.append((int(s), int(e), rid))
            labels[y, s:e] = rid + 1
        prev_runs = runs

    if not uf.parent:
        return labels, 0
    # compress provisional run ids to dense labels in first-appearance order
    remap = np.zeros(len(uf.parent) + 1, dtype=np.int32)
    count = 0
    root_label: dict[int, int] = {}
    for rid in range(len(uf.parent)):
        root = uf.find(rid)
        if root not in root_label:
            count += 1
            root_label[root] = count
        remap[rid + 1] = root_label[root]
    return remap[labels], count


@dataclass
class NailInstance:
    id: int
    class_label: int
    rle: list[tuple[int, int, int]]  # (row, start col, length)
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    centroid: tuple[float, float]  # (x, y)
    orientation: tuple[float, float]  # unit base->tip
    area: int
    mean_score: float
    degenerate: bool = False
    frame_size: Optional[tuple[int, int]] = None  # (h, w)

    def pixel_mask(self, shape: Optional[tuple[int, int]] = None) -> np.ndarray:
        shape = shape or self.frame_size
        m = np.zeros(shape, dtype=bool)
        for row, start, length in self.rle:
            m[row, start:start + length] = True
        return m

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.class_label,
            "bbox": list(self.bbox),
            "centroid": list(self.centroid),
            "orientation": list(self.orientation),
            "area": self.area,
            "mean_score": self.mean_score,
            "degenerate": self.degenerate,
            "rle": [list(r) for r in self.rle],
        }

    @classmethod
    def from_json_dict(cls, d: dict, frame_size=None) -> "NailInstance":
        return cls(
            id=d["id"],
            class_label=d["class"],
            rle=[tuple(r) for r in d["rle"]],
            bbox=tuple(d["bbox"]),
            centroid=tuple(d["centroid"]),
            orientation=tuple(d["orientation"]),
            area=d["area"],
            mean_score=d["mean_score"],
            degenerate=d["degenerate"],
            frame_size=frame_size,
        )


def _mask_to_rle(mask: np.ndarray) -> list[tuple[int, int, int]]:
    rle = []
    for y in np.flatnonzero(mask.any(axis=1)):
        row = mask[y].view(np.uint8)
        d = np.diff(np.concatenate(([0], row, [0])).astype(np.int8))
        for s, e in zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)):
            rle.append((int(y), int(s), int(e - s)))
    return rle


def _softmax_np(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def extract_instances(
    output: SegOutput,
    min_area: Optional[int] = None,
    fg_threshold: float = DEFAULT_FG_THRESHOLD,
    connectivity: int = 4,
) -> list[NailInstance]:
    """Split thresholded class predictions into per-nail instances.

    min_area defaults to 16 px at 288x288, scaled with resolution squared.
    """
    fg_prob = _softmax_np(output.fgbg_logits.data[0], axis=0)[1]
    class_map = output.class_logits.data[0].argmax(axis=0) + 1  # labels 1..K
    fld = output.field.data[0]  # 2 x H x W
    h, w = fg_prob.shape
    if min_area is None:
        min_area = max(1, round(DEFAULT_MIN_AREA * (h * w) / (288 * 288)))

    fg_mask = fg_prob >= fg_threshold
    instances: list[NailInstance] = []
    next_id = 1
    for cls in np.unique(class_map[fg_mask]) if fg_mask.any() else []:
        cls_mask = fg_mask & (class_map == cls)
        labels, count = label_components(cls_mask, connectivity)
        for lab in range(1, count + 1):
            comp = labels == lab
            area = int(comp.sum())
            if area < min_area:
                continue
            ys, xs = np.nonzero(comp)
            scores = fg_prob[comp]
            vx = float((scores * fld[0][comp]).sum())
            vy = float((scores * fld[1][comp]).sum())
            norm = float(np.hypot(vx, vy))
            degenerate = norm < 1e-9
            orient = DEGENERATE_ORIENTATION if degenerate else (vx / norm, vy / norm)
            instances.append(
                NailInstance(
                    id=next_id,
                    class_label=int(cls),
                    rle=_mask_to_rle(comp),
                    bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                    centroid=(float(xs.mean()), float(ys.mean())),
                    orientation=orient,
                    area=area,
                    mean_score=float(scores.mean()),
                    degenerate=degenerate,
                    frame_size=(h, w),
                )
            )
            next_id += 1
    return instances


def stretch_mask(instance: NailInstance, length: int) -> np.ndarray:
    """Union tip-side boundary pixels translated 1..length steps along the
    orientation into the instance mask; never removes pixels."""
    if length < 0:
        raise ContractViolation("stretch length must be >= 0")
    mask = instance.pixel_mask()
    if length == 0:
        return mask
    h, w = mask.shape
    ox, oy = instance.orientation
    cx, cy = instance.centroid

    interior = (
        np.roll(mask, 1, 0) & np.roll(mask, -1, 0) & np.roll(mask, 1, 1) & np.roll(mask, -1, 1)
    )
    # roll wraps; frame-edge pixels are boundary by definition
    interior[0, :] = interior[-1, :] = False
    interior[:, 0] = interior[:, -1] = False
    boundary = mask & ~interior
    ys, xs = np.nonzero(boundary)
    tip_side = (xs - cx) * ox + (ys - cy) * oy >= 0
    xs, ys = xs[tip_side], ys[tip_side]

    out = mask.copy()
    for t in range(1, length + 1):
        nx = np.floor(xs + t * ox + 0.5).astype(int)
        ny = np.floor(ys + t * oy + 0.5).astype(int)
        keep = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        out[ny[keep], nx[keep]] = True
    return out

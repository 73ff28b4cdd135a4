"""Evaluation: IoU metrics, orientation error, runtime measurement."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import Manifest, load_sample
from .errors import ContractViolation
from .model import SegModel
from .postprocess import extract_instances
from .synthetic import ImageSample
from .tensor import Tensor


def to_input(image: np.ndarray, dtype=np.float32) -> Tensor:
    """HWC uint8 sRGB -> NCHW tensor in [-1, 1]."""
    x = image.astype(dtype) / 127.5 - 1.0
    return Tensor(np.ascontiguousarray(x.transpose(2, 0, 1)[None]))


def miou(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Mean of foreground and background IoU; empty union counts as 1."""
    if pred_mask.shape != gt_mask.shape:
        raise ContractViolation(f"shape mismatch {pred_mask.shape} vs {gt_mask.shape}")
    pred = np.asarray(pred_mask) > 0
    gt = np.asarray(gt_mask) > 0
    ious = []
    for p, g in ((pred, gt), (~pred, ~gt)):
        union = (p | g).sum()
        ious.append(1.0 if union == 0 else (p & g).sum() / union)
    return float(np.mean(ious))


def angular_error(pred_orientation, gt_direction) -> float:
    """Angle between two unit vectors, degrees in [0, 180]."""
    a = np.asarray(pred_orientation, dtype=np.float64)
    b = np.asarray(gt_direction, dtype=np.float64)
    for v in (a, b):
        if abs(np.linalg.norm(v) - 1.0) > 1e-3:
            raise ContractViolation(f"orientation {v} is not unit norm")
    return float(np.degrees(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))))


@dataclass
class EvalReport:
    binary_miou: float
    per_class_iou: list[float] = field(default_factory=lambda: [1.0] * 10)
    mean_angular_error_deg: float = 0.0
    pixel_accuracy: float = 0.0
    runtime_ms_per_frame: float = 0.0
    num_images: int = 0
    num_instances: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def predict(model: SegModel, image: np.ndarray):
    """Eval-mode forward at the image's own resolution."""
    sized = model.at_input_size(image.shape[:2])
    sized.train_mode(False)
    return sized.forward(to_input(image, dtype=model.dtype))


def evaluate(
    model: SegModel,
    samples: list[ImageSample],
    with_instances: bool = True,
) -> EvalReport:
    """Aggregate segmentation and orientation quality over ``samples``."""
    mious = []
    correct = 0
    total = 0
    inter = np.zeros(10)
    union = np.zeros(10)
    angular = []
    n_inst = 0

    for sample in samples:
        out = predict(model, sample.image)
        pred_fg = out.fgbg_logits.data[0].argmax(axis=0) == 1
        gt_fg = sample.fgbg > 0
        mious.append(miou(pred_fg, gt_fg))
        correct += (pred_fg == gt_fg).sum()
        total += gt_fg.size

        pred_cls = np.where(pred_fg, out.class_logits.data[0].argmax(axis=0) + 1, 0)
        for c in range(1, 11):
            p = pred_cls == c
            g = sample.classes == c
            inter[c - 1] += (p & g).sum()
            union[c - 1] += (p | g).sum()

        if with_instances:
            for inst in extract_instances(out):
                mask = inst.pixel_mask()
                gt_under = sample.classes[mask]
                gt_under = gt_under[gt_under > 0]
                if gt_under.size == 0:
                    continue
                gt_label = int(np.bincount(gt_under).argmax())
                gt_dir = sample.nail_directions.get(gt_label)
                if gt_dir is None:
                    continue
                angular.append(angular_error(inst.orientation, gt_dir))
                n_inst += 1

    per_class = [1.0 if union[i] == 0 else float(inter[i] / union[i]) for i in range(10)]
    return EvalReport(
        binary_miou=float(np.mean(mious)) if mious else 1.0,
        per_class_iou=per_class,
        mean_angular_error_deg=float(np.mean(angular)) if angular else 0.0,
        pixel_accuracy=float(correct / total) if total else 1.0,
        num_images=len(samples),
        num_instances=n_inst,
    )


def load_split(manifest: Manifest, split: str, limit: int | None = None) -> list[ImageSample]:
    ids = manifest.ids(split)
    if limit is not None:
        ids = ids[:limit]
    return [load_sample(manifest.root, sid, manifest.record(sid).directions) for sid in ids]


def measure_runtime(
    model: SegModel,
    image: np.ndarray,
    frames: int = 50,
    warmup: int = 10,
) -> float:
    """Median forward+postprocess wall time in ms, single thread."""
    times = []
    for i in range(warmup + frames):
        t0 = time.perf_counter()
        out = predict(model, image)
        extract_instances(out)
        dt = (time.perf_counter() - t0) * 1000.0
        if i >= warmup:
            times.append(dt)
    return float(np.median(times))

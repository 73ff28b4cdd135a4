"""Procedural nail scenes standing in for a real hand dataset.

Each sample carries the three annotation planes the model trains on: a
foreground/background mask, per-nail class labels (1..10, assigned left
to right), and a dense base-to-tip unit direction field.  Nails are
rotated super-ellipses with a base-to-tip shading ramp and a lighter
distal band at the tip, so both the direction head and the renderer's
edge hiding have something to learn / exercise.  Skin-toned distractor
blobs keep foreground/background from being a pure color threshold.

Everything is driven by a single seed and is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ContractViolation, GenerationError


@dataclass
class ImageSample:
    image: np.ndarray  # H x W x 3 uint8 sRGB
    fgbg: np.ndarray  # H x W uint8 {0, 1}
    classes: np.ndarray  # H x W uint8 {0..10}
    field: np.ndarray  # H x W x 2 float32, unit where fgbg==1, zero elsewhere
    nail_directions: dict[int, tuple[float, float]] = field(default_factory=dict)
    # ground-truth (dx, dy) per class label, for orientation evaluation

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[:2]

    def validate(self) -> None:
        fg = self.fgbg > 0
        if not np.array_equal(self.classes > 0, fg):
            raise AssertionError("classes > 0 must coincide with fgbg == 1")
        norms = np.sqrt((self.field.astype(np.float64) ** 2).sum(axis=2))
        if fg.any() and np.abs(norms[fg] - 1.0).max() > 1e-3:
            raise AssertionError("field not unit-norm on foreground")
        if (~fg).any() and norms[~fg].max() > 0:
            raise AssertionError("field must be zero on background")

    def fg_fraction(self) -> float:
        return float((self.fgbg > 0).mean())


@dataclass
class SceneSpec:
    rng_seed: int = 0
    size: tuple[int, int] = (160, 160)
    nail_count: int = 4
    nail_half_length: tuple[float, float] = (10.0, 16.0)
    nail_half_width: tuple[float, float] = (5.0, 8.0)
    superellipse_exponent: tuple[float, float] = (2.2, 3.2)
    distal_band_px: tuple[float, float] = (2.5, 4.5)
    distractor_count: tuple[int, int] = (1, 4)
    distractor_radius: tuple[float, float] = (8.0, 18.0)
    noise_amplitude: float = 10.0
    lighting_strength: float = 0.12
    placement_retries: int = 200

    def __post_init__(self):
        if not 1 <= self.nail_count <= 10:
            raise ContractViolation(f"nail_count must be in 1..10, got {self.nail_count}")


_SKIN_BASE = np.array([198.0, 156.0, 132.0])
_NAIL_BASE = np.array([226.0, 178.0, 168.0])
_DISTAL_TINT = np.array([246.0, 238.0, 228.0])


def _smooth_noise(rng, h, w, amplitude, cells=8):
    coarse = rng.standard_normal((cells, cells, 3))
    zoomed = ndimage.zoom(coarse, (h / cells, w / cells, 1), order=1)
    return zoomed[:h, :w] * amplitude


def _superellipse_mask(xx, yy, cx, cy, ang, a, b, p):
    dx = xx - cx
    dy = yy - cy
    u = dx * np.cos(ang) + dy * np.sin(ang)  # along base->tip axis
    v = -dx * np.sin(ang) + dy * np.cos(ang)
    r = np.abs(u / a) ** p + np.abs(v / b) ** p
    return r <= 1.0, u


def generate_sample(spec: SceneSpec) -> ImageSample:
    """Render one scene; deterministic for a fixed spec."""
    rng = np.random.default_rng(spec.rng_seed)
    h, w = spec.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    # background: jittered skin tone + low-frequency texture + lighting ramp
    base = _SKIN_BASE + rng.uniform(-14, 14, size=3)
    img = np.broadcast_to(base, (h, w, 3)).astype(np.float64).copy()
    img += _smooth_noise(rng, h, w, spec.noise_amplitude)
    light_dir = rng.uniform(0, 2 * np.pi)
    ramp = (xx * np.cos(light_dir) + yy * np.sin(light_dir)) / max(h, w)
    img *= (1.0 + spec.lighting_strength * (ramp - ramp.mean()))[:, :, None]

    # skin-toned distractor blobs (no distal band, no axial shading)
    n_distract = int(rng.integers(spec.distractor_count[0], spec.distractor_count[1] + 1))
    for _ in range(n_distract):
        r = rng.uniform(*spec.distractor_radius)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        ang = rng.uniform(0, 2 * np.pi)
        col = _SKIN_BASE + rng.uniform(-10, 35, size=3)
        dmask, _ = _superellipse_mask(xx, yy, cx, cy, ang, r, r * rng.uniform(0.5, 1.0), 2.0)
        soft = ndimage.gaussian_filter(dmask.astype(np.float64), 1.5)
        img = img * (1 - 0.7 * soft[:, :, None]) + col * 0.7 * soft[:, :, None]

    # nails: non-overlapping super-ellipses, fully in frame
    fgbg = np.zeros((h, w), dtype=np.uint8)
    classes = np.zeros((h, w), dtype=np.uint8)
    fld = np.zeros((h, w, 2), dtype=np.float32)
    placed = []  # (cx, cy, ang, mask, u)
    attempts = 0
    while len(placed) < spec.nail_count:
        attempts += 1
        if attempts > spec.placement_retries:
            raise GenerationError(
                f"could not place {spec.nail_count} nails after "
                f"{spec.placement_retries} retries (seed {spec.rng_seed})"
            )
        a = rng.uniform(*spec.nail_half_length)
        b = rng.uniform(*spec.nail_half_width)
        p = rng.uniform(*spec.superellipse_exponent)
        ang = rng.uniform(0, 2 * np.pi)
        margin = a + 2
        cx = rng.uniform(margin, w - margin)
        cy = rng.uniform(margin, h - margin)
        mask, u = _superellipse_mask(xx, yy, cx, cy, ang, a, b, p)
        if not mask.any():
            continue
        grown = ndimage.binary_dilation(mask, iterations=2)
        if (fgbg > 0)[grown].any():
            continue
        band = rng.uniform(*spec.distal_band_px)

        col = _NAIL_BASE + rng.uniform(-12, 12, size=3)
        t = np.clip((u / a + 1.0) / 2.0, 0.0, 1.0)  # 0 at base, 1 at tip
        # strong axial ramp: the base->tip brightness cue the direction head learns
        shade = 0.72 + 0.55 * t
        nail_rgb = col[None, None, :] * shade[:, :, None]
        band_mask = mask & (u > a - band)
        nail_rgb = np.where(band_mask[:, :, None], 0.35 * nail_rgb + 0.65 * _DISTAL_TINT, nail_rgb)
        img = np.where(mask[:, :, None], nail_rgb, img)

        fgbg[mask] = 1
        fld[mask] = (np.cos(ang), np.sin(ang))
        placed.append((cx, cy, ang, mask))

    # class identity: left-to-right ordering, like fingers in a frame
    order = np.argsort([pl[0] for pl in placed], kind="stable")
    directions: dict[int, tuple[float, float]] = {}
    for label, idx in enumerate(order, start=1):
        cx, cy, ang, mask = placed[idx]
        classes[mask] = label
        directions[label] = (float(np.cos(ang)), float(np.sin(ang)))

    image = np.clip(img, 0, 255).astype(np.uint8)
    return ImageSample(image=image, fgbg=fgbg, classes=classes, field=fld,
                       nail_directions=directions)


def random_crop(sample: ImageSample, size: tuple[int, int], seed: int) -> ImageSample:
    """Congruent crop of all planes; direction vectors are unaffected."""
    ch, cw = size
    h, w = sample.size
    if ch > h or cw > w:
        raise ContractViolation(f"crop {ch}x{cw} larger than image {h}x{w}")
    rng = np.random.default_rng(seed)
    oy = int(rng.integers(0, h - ch + 1))
    ox = int(rng.integers(0, w - cw + 1))
    return ImageSample(
        image=sample.image[oy:oy + ch, ox:ox + cw].copy(),
        fgbg=sample.fgbg[oy:oy + ch, ox:ox + cw].copy(),
        classes=sample.classes[oy:oy + ch, ox:ox + cw].copy(),
        field=sample.field[oy:oy + ch, ox:ox + cw].copy(),
        nail_directions=dict(sample.nail_directions),
    )


def scene_for_index(index: int, base_seed: int, **overrides) -> SceneSpec:
    """Per-scene spec: derived seed plus a seeded nail-count draw."""
    seed = (base_seed * 1_000_003 + index) & 0xFFFFFFFF
    rng = np.random.default_rng(seed ^ 0x5EED)
    count = int(rng.integers(1, 6))
    spec = SceneSpec(rng_seed=seed, nail_count=count)
    return replace(spec, **overrides) if overrides else spec

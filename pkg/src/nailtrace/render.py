"""Polish compositing: stretch, feather, gloss gradient, linear-light blend.

Per instance the mask is stretched toward the tip (hiding the light
distal edge), feathered with a distance-transform ramp, and filled with
the polish color modulated by a Gaussian brightness band along the
base-to-tip coordinate (a cheap specular-reflection stand-in).  Source-
over compositing happens in linear RGB; sRGB at the edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ContractViolation
from .postprocess import NailInstance, stretch_mask

GLOSS_SIGMA = 0.15  # of the nail's base-to-tip extent


@dataclass
class RenderParams:
    color: tuple[int, int, int] = (178, 40, 68)
    opacity: float = 0.85
    gradient_strength: float = 0.35
    gloss_band_position: float = 0.35
    stretch_px: int = 4  # at 288 px input, scaled with frame edge
    edge_feather_px: float = 1.5

    def __post_init__(self):
        for name in ("opacity", "gradient_strength", "gloss_band_position"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"{name} must be in [0, 1], got {v}")
        if self.stretch_px < 0 or self.edge_feather_px < 0:
            raise ContractViolation("stretch_px and edge_feather_px must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "RenderParams":
        kwargs = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "color" in kwargs:
            kwargs["color"] = tuple(kwargs["color"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "color": list(self.color),
            "opacity": self.opacity,
            "gradient_strength": self.gradient_strength,
            "gloss_band_position": self.gloss_band_position,
            "stretch_px": self.stretch_px,
            "edge_feather_px": self.edge_feather_px,
        }


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64) / 255.0
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    srgb = np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1 / 2.4) - 0.055)
    return np.clip(np.round(srgb * 255.0), 0, 255).astype(np.uint8)


def tip_coordinate(pixels_xy: np.ndarray, instance: NailInstance,
                   mask: np.ndarray | None = None) -> np.ndarray:
    """Normalized projection along the orientation: 0 at base extreme, 1 at tip."""
    if instance.degenerate:
        return np.full(len(pixels_xy), 0.5)
    ox, oy = instance.orientation
    mask = mask if mask is not None else instance.pixel_mask()
    ys, xs = np.nonzero(mask)
    proj_all = xs * ox + ys * oy
    lo, hi = proj_all.min(), proj_all.max()
    proj = pixels_xy[:, 0] * ox + pixels_xy[:, 1] * oy
    if hi - lo < 1e-9:
        return np.full(len(pixels_xy), 0.5)
    return np.clip((proj - lo) / (hi - lo), 0.0, 1.0)


def _feathered_alpha(mask: np.ndarray, feather_px: float) -> np.ndarray:
    if feather_px <= 0:
        return mask.astype(np.float64)
    dist = ndimage.distance_transform_edt(mask)
    return np.clip(dist / feather_px, 0.0, 1.0) * mask


def render_overlay(
    image: np.ndarray,
    instances: list[NailInstance],
    params: RenderParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (overlay RGBA uint8, composited RGB uint8)."""
    h, w = image.shape[:2]
    stretch = round(params.stretch_px * max(h, w) / 288) if params.stretch_px else 0

    color_lin = srgb_to_linear(np.asarray(params.color, dtype=np.float64))
    overlay_rgb = np.zeros((h, w, 3), dtype=np.float64)  # premultiplied linear
    overlay_a = np.zeros((h, w), dtype=np.float64)

    for inst in instances:
        if inst.frame_size != (h, w):
            raise ContractViolation(
                f"instance {inst.id} frame {inst.frame_size} != image {(h, w)}"
            )
        mask = stretch_mask(inst, stretch) if stretch else inst.pixel_mask()
        alpha = _feathered_alpha(mask, params.edge_feather_px) * params.opacity
        ys, xs = np.nonzero(mask)
        t = tip_coordinate(np.stack([xs, ys], axis=1).astype(np.float64), inst, mask=mask)
        gloss = 1.0 + params.gradient_strength * np.exp(
            -0.5 * ((t - params.gloss_band_position) / GLOSS_SIGMA) ** 2
        )
        src = np.clip(color_lin[None, :] * gloss[:, None], 0.0, 1.0)
        a = alpha[ys, xs]
        # source-over within the overlay accumulator (premultiplied)
        overlay_rgb[ys, xs] = src * a[:, None] + overlay_rgb[ys, xs] * (1 - a)[:, None]
        overlay_a[ys, xs] = a + overlay_a[ys, xs] * (1 - a)

    base_lin = srgb_to_linear(image)
    comp_lin = overlay_rgb + base_lin * (1 - overlay_a)[:, :, None]
    composited = linear_to_srgb(comp_lin)

    with np.errstate(invalid="ignore", divide="ignore"):
        straight = np.where(overlay_a[:, :, None] > 0, overlay_rgb / overlay_a[:, :, None], 0.0)
    overlay = np.dstack(
        [linear_to_srgb(straight), np.clip(np.round(overlay_a * 255), 0, 255).astype(np.uint8)]
    )
    if params.opacity == 0:
        composited = image.copy()  # bit-exact identity at zero opacity
    return overlay, composited

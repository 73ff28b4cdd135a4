/** Wire types mirroring the inference service under /api/v1. */

export interface RenderParams {
  color: [number, number, number];
  opacity: number;
  gradient_strength: number;
  gloss_band_position: number;
  stretch_px: number;
  edge_feather_px: number;
}

export const DEFAULT_PARAMS: RenderParams = {
  color: [178, 40, 68],
  opacity: 0.85,
  gradient_strength: 0.35,
  gloss_band_position: 0.35,
  stretch_px: 4,
  edge_feather_px: 1.5,
};

export interface Instance {
  id: number;
  class: number;
  bbox: [number, number, number, number]; // x0, y0, x1, y1 inclusive
  centroid: [number, number]; // (x, y)
  orientation: [number, number]; // unit base->tip
  area: number;
  mean_score: number;
  degenerate: boolean;
  rle: [number, number, number][];
}

export interface SegmentResponse {
  instances: Instance[];
  fgbg_png_b64: string;
  field_summary: { mean_direction: [number, number]; mean_norm: number };
}

export interface RenderResponse {
  composited_png_b64: string;
  overlay_png_b64: string;
}

export function paramsEqual(a: RenderParams, b: RenderParams): boolean {
  return (
    a.color[0] === b.color[0] &&
    a.color[1] === b.color[1] &&
    a.color[2] === b.color[2] &&
    a.opacity === b.opacity &&
    a.gradient_strength === b.gradient_strength &&
    a.gloss_band_position === b.gloss_band_position &&
    a.stretch_px === b.stretch_px &&
    a.edge_feather_px === b.edge_feather_px
  );
}

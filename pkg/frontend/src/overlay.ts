/** Client-side canvas overlays: instance boxes and orientation arrows.
 * Compositing itself happens server-side; the canvas only annotates. */

import type { Instance } from "./types.js";

export interface Arrow {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  /** Two points forming the arrow head. */
  head: [number, number][];
}

export const ARROW_LENGTH_FACTOR = 0.6; // of the bbox diagonal
const HEAD_LENGTH_FACTOR = 0.25;
const HEAD_ANGLE = Math.PI / 7;

/** Arrow from the instance centroid along its unit orientation, with
 * length proportional to the bounding-box diagonal. */
export function arrowForInstance(inst: Instance): Arrow {
  const [x0, y0, x1, y1] = inst.bbox;
  const diag = Math.hypot(x1 - x0 + 1, y1 - y0 + 1);
  const len = ARROW_LENGTH_FACTOR * diag;
  const [cx, cy] = inst.centroid;
  const [ox, oy] = inst.orientation;
  const tx = cx + len * ox;
  const ty = cy + len * oy;
  const headLen = HEAD_LENGTH_FACTOR * len;
  const base = Math.atan2(oy, ox) + Math.PI;
  const head: [number, number][] = [base - HEAD_ANGLE, base + HEAD_ANGLE].map(
    (a) => [tx + headLen * Math.cos(a), ty + headLen * Math.sin(a)] as [number, number],
  );
  return { x1: cx, y1: cy, x2: tx, y2: ty, head };
}

export function drawOverlays(
  ctx: CanvasRenderingContext2D,
  instances: Instance[],
  showBoxes: boolean,
  showArrows: boolean,
): void {
  ctx.lineWidth = 2;
  for (const inst of instances) {
    if (showBoxes) {
      const [x0, y0, x1, y1] = inst.bbox;
      ctx.strokeStyle = "rgba(80, 200, 255, 0.9)";
      ctx.strokeRect(x0 - 0.5, y0 - 0.5, x1 - x0 + 2, y1 - y0 + 2);
      ctx.fillStyle = "rgba(80, 200, 255, 0.9)";
      ctx.font = "12px sans-serif";
      ctx.fillText(`#${inst.class}`, x0, Math.max(10, y0 - 4));
    }
    if (showArrows && !inst.degenerate) {
      const a = arrowForInstance(inst);
      ctx.strokeStyle = "rgba(255, 220, 60, 0.95)";
      ctx.beginPath();
      ctx.moveTo(a.x1, a.y1);
      ctx.lineTo(a.x2, a.y2);
      for (const [hx, hy] of a.head) {
        ctx.moveTo(a.x2, a.y2);
        ctx.lineTo(hx, hy);
      }
      ctx.stroke();
    }
  }
}

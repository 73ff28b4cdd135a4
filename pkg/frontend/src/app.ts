/** DOM wiring for the try-on demo page. */

import { ApiClient } from "./api.js";
import { drawOverlays } from "./overlay.js";
import { RenderScheduler } from "./scheduler.js";
import {
  displayedImage,
  initialState,
  onComposited,
  onImageSelected,
  onParamsChanged,
  onSegmented,
  statusLine,
  UiState,
} from "./state.js";
import type { RenderParams } from "./types.js";

const MAX_EDGE = 640; // service request limit; larger inputs are downscaled

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function hexToRgb(hex: string): [number, number, number] {
  const v = parseInt(hex.replace("#", ""), 16);
  return [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff];
}

/** Decode, downscale to the service limit if needed, re-encode as PNG. */
async function toPngB64(source: Blob | HTMLVideoElement): Promise<string> {
  let w: number;
  let h: number;
  let draw: (ctx: CanvasRenderingContext2D, dw: number, dh: number) => void;
  if (source instanceof Blob) {
    const bitmap = await createImageBitmap(source);
    w = bitmap.width;
    h = bitmap.height;
    draw = (ctx, dw, dh) => ctx.drawImage(bitmap, 0, 0, dw, dh);
  } else {
    w = source.videoWidth;
    h = source.videoHeight;
    draw = (ctx, dw, dh) => ctx.drawImage(source, 0, 0, dw, dh);
  }
  const scale = Math.min(1, MAX_EDGE / Math.max(w, h));
  const canvas = document.createElement("canvas");
  canvas.width = Math.round(w * scale);
  canvas.height = Math.round(h * scale);
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  draw(ctx, canvas.width, canvas.height);
  return canvas.toDataURL("image/png").split(",")[1];
}

function b64ToBlob(b64: string): Blob {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return new Blob([out], { type: "image/png" });
}

export function startApp(): void {
  const api = new ApiClient();
  let state: UiState = initialState();

  const viewport = $<HTMLImageElement>("viewport");
  const overlay = $<HTMLCanvasElement>("overlay");
  const status = $<HTMLSpanElement>("status");
  const chips = $<HTMLDivElement>("chips");
  const banner = $<HTMLDivElement>("banner");
  const video = $<HTMLVideoElement>("webcam");

  function refresh(): void {
    const img = displayedImage(state);
    if (img) viewport.src = `data:image/png;base64,${img}`;
    status.textContent = statusLine(state);
    banner.hidden = state.error === null;
    banner.textContent = state.error ?? "";
    chips.replaceChildren(
      ...state.instances.map((inst) => {
        const chip = document.createElement("span");
        chip.className = "chip";
        const deg = Math.round(
          (Math.atan2(inst.orientation[1], inst.orientation[0]) * 180) / Math.PI,
        );
        chip.textContent = `finger ${inst.class} · ${inst.area}px · ${deg}°`;
        return chip;
      }),
    );
    const ctx = overlay.getContext("2d");
    if (ctx && viewport.naturalWidth > 0) {
      overlay.width = viewport.naturalWidth;
      overlay.height = viewport.naturalHeight;
      ctx.clearRect(0, 0, overlay.width, overlay.height);
      drawOverlays(ctx, state.instances, state.showInstances, state.showArrows);
    }
  }

  function fail(err: unknown): void {
    state = { ...state, error: err instanceof Error ? err.message : String(err) };
    refresh();
  }

  const renderer = new RenderScheduler<RenderParams, string>(
    async (params) => {
      if (state.sourceB64 === null) throw new Error("no source image");
      const res = await api.render(state.sourceB64, params);
      return res.composited_png_b64;
    },
    (composited) => {
      state = onComposited(state, composited);
      refresh();
    },
    fail,
  );

  async function runActions(actions: ("segment" | "render")[]): Promise<void> {
    for (const action of actions) {
      if (action === "segment" && state.sourceB64 !== null) {
        try {
          const res = await api.segment(b64ToBlob(state.sourceB64));
          state = onSegmented(state, res.instances);
          refresh();
        } catch (err) {
          fail(err);
          return;
        }
      } else if (action === "render") {
        if (state.params.opacity === 0) refresh(); // source shown directly
        else renderer.request(state.params);
      }
    }
  }

  async function useImage(b64: string): Promise<void> {
    const { state: next, actions } = onImageSelected(state, b64);
    state = next;
    refresh();
    await runActions(actions);
  }

  function paramsFromControls(): RenderParams {
    return {
      color: hexToRgb($<HTMLInputElement>("color").value),
      opacity: Number($<HTMLInputElement>("opacity").value),
      gradient_strength: Number($<HTMLInputElement>("gradient").value),
      gloss_band_position: Number($<HTMLInputElement>("gloss").value),
      stretch_px: Number($<HTMLInputElement>("stretch").value),
      edge_feather_px: Number($<HTMLInputElement>("feather").value),
    };
  }

  function controlsChanged(): void {
    const { state: next, actions } = onParamsChanged(state, paramsFromControls());
    state = next;
    refresh();
    void runActions(actions);
  }

  $<HTMLInputElement>("file").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void toPngB64(file).then(useImage, fail);
  });

  for (const id of ["color", "opacity", "gradient", "gloss", "stretch", "feather"]) {
    $<HTMLInputElement>(id).addEventListener("input", controlsChanged);
  }
  $<HTMLInputElement>("show-instances").addEventListener("change", (ev) => {
    state = { ...state, showInstances: (ev.target as HTMLInputElement).checked };
    refresh();
  });
  $<HTMLInputElement>("show-arrows").addEventListener("change", (ev) => {
    state = { ...state, showArrows: (ev.target as HTMLInputElement).checked };
    refresh();
  });

  // webcam: stills on demand, no streaming inference
  $<HTMLButtonElement>("webcam-start").addEventListener("click", async () => {
    try {
      video.srcObject = await navigator.mediaDevices.getUserMedia({ video: true });
      await video.play();
      video.hidden = false;
      $<HTMLButtonElement>("shutter").disabled = false;
    } catch (err) {
      fail(err);
    }
  });
  $<HTMLButtonElement>("shutter").addEventListener("click", () => {
    void toPngB64(video).then(useImage, fail);
  });

  $<HTMLButtonElement>("retry").addEventListener("click", () => {
    state = { ...state, error: null };
    refresh();
    if (state.sourceB64 !== null) {
      void runActions(
        state.segmentedFor === state.sourceB64 ? ["render"] : ["segment", "render"],
      );
    }
  });

  refresh();
}

startApp();

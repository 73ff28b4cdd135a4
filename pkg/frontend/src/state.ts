/** UI state and the pure decisions the app makes from it.
 *
 * Segmentation is cached per source image: changing only render
 * parameters (color, opacity, ...) re-renders but never re-segments.
 * Opacity 0 short-circuits to the untouched source image — the service
 * guarantees a byte-exact copy in that case, so skipping the request is
 * both correct and cheaper.
 */

import type { Instance, RenderParams } from "./types.js";
import { DEFAULT_PARAMS } from "./types.js";

export interface UiState {
  /** Base64 PNG of the current source image; null before any selection. */
  sourceB64: string | null;
  /** Identity token for the source the cached segmentation belongs to. */
  segmentedFor: string | null;
  instances: Instance[];
  /** Base64 PNG of the newest applied composite. */
  compositeB64: string | null;
  params: RenderParams;
  showInstances: boolean;
  showArrows: boolean;
  error: string | null;
  busy: boolean;
}

export function initialState(): UiState {
  return {
    sourceB64: null,
    segmentedFor: null,
    instances: [],
    compositeB64: null,
    params: { ...DEFAULT_PARAMS, color: [...DEFAULT_PARAMS.color] },
    showInstances: true,
    showArrows: true,
    error: null,
    busy: false,
  };
}

export type Action = "segment" | "render";

/** New image chosen: invalidate the segmentation cache, keep params. */
export function onImageSelected(state: UiState, sourceB64: string): {
  state: UiState;
  actions: Action[];
} {
  return {
    state: {
      ...state,
      sourceB64,
      segmentedFor: null,
      instances: [],
      compositeB64: null,
      error: null,
    },
    actions: ["segment", "render"],
  };
}

/** Parameter change: render only, the cached segmentation stays valid. */
export function onParamsChanged(state: UiState, params: RenderParams): {
  state: UiState;
  actions: Action[];
} {
  const next = { ...state, params };
  if (state.sourceB64 === null) return { state: next, actions: [] };
  if (state.segmentedFor !== state.sourceB64) {
    return { state: next, actions: ["segment", "render"] };
  }
  return { state: next, actions: ["render"] };
}

export function onSegmented(state: UiState, instances: Instance[]): UiState {
  return { ...state, segmentedFor: state.sourceB64, instances, error: null };
}

export function onComposited(state: UiState, compositeB64: string): UiState {
  return { ...state, compositeB64, error: null };
}

/** What the main viewport shows right now. */
export function displayedImage(state: UiState): string | null {
  if (state.sourceB64 === null) return null;
  if (state.params.opacity === 0) return state.sourceB64;
  return state.compositeB64 ?? state.sourceB64;
}

export function statusLine(state: UiState): string {
  if (state.error !== null) return state.error;
  if (state.sourceB64 === null) return "Load an image or capture a webcam still.";
  if (state.segmentedFor !== state.sourceB64) return "Segmenting…";
  if (state.instances.length === 0) return "No nails detected.";
  const n = state.instances.length;
  return `${n} nail${n === 1 ? "" : "s"} detected.`;
}

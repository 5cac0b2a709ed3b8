/** Zoom-magnifying-glass state in image-space pixels.
 *
 * The lens occupies a fixed 60 px radius on screen; its image-space radius
 * shrinks with the zoom level (60 / zoom), which is what gets recorded in
 * the trail and used as the final circular selection.
 */

import type { CircleJson } from "./api.js";

export const ZOOM_LEVELS = [1, 2, 4] as const;
export type ZoomLevel = (typeof ZOOM_LEVELS)[number];

export const LENS_SCREEN_RADIUS_PX = 60;

export function lensImageRadius(zoom: ZoomLevel): number {
  return LENS_SCREEN_RADIUS_PX / zoom;
}

export interface LensState {
  /** image-space pixels, clamped to the image bounds */
  x: number;
  y: number;
  zoomLevel: ZoomLevel;
  lensRadiusPx: number;
}

export function initialLens(): LensState {
  return { x: 0, y: 0, zoomLevel: 1, lensRadiusPx: lensImageRadius(1) };
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(Math.max(value, lo), hi);
}

export function moveLens(
  state: LensState,
  x: number,
  y: number,
  imageWidth: number,
  imageHeight: number,
): LensState {
  return {
    ...state,
    x: clamp(x, 0, imageWidth),
    y: clamp(y, 0, imageHeight),
  };
}

/** Step the zoom level up (direction > 0) or down within the configured range. */
export function stepZoom(state: LensState, direction: number): LensState {
  const idx = ZOOM_LEVELS.indexOf(state.zoomLevel);
  const next = ZOOM_LEVELS[clamp(idx + Math.sign(direction), 0, ZOOM_LEVELS.length - 1)]!;
  return { ...state, zoomLevel: next, lensRadiusPx: lensImageRadius(next) };
}

export function lensCircle(state: LensState): CircleJson {
  return { cx: state.x, cy: state.y, radius: state.lensRadiusPx };
}

/** Canvas rendering of the image with the magnified region under the lens. */

import { LENS_SCREEN_RADIUS_PX, type LensState } from "./lens.js";

export interface ViewTransform {
  /** CSS pixels per image pixel. */
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Map a pointer position in CSS pixels to image-space pixels. */
export function toImageCoords(
  clientX: number,
  clientY: number,
  view: ViewTransform,
): { x: number; y: number } {
  return {
    x: (clientX - view.offsetX) / view.scale,
    y: (clientY - view.offsetY) / view.scale,
  };
}

/** View transform for a canvas that displays the full image. Falls back to
 * identity when layout information is unavailable (headless tests). */
export function viewTransformFor(
  canvas: HTMLCanvasElement,
  imageWidth: number,
): ViewTransform {
  const rect = canvas.getBoundingClientRect();
  if (rect.width <= 0 || imageWidth <= 0) {
    return { scale: 1, offsetX: 0, offsetY: 0 };
  }
  return { scale: rect.width / imageWidth, offsetX: rect.left, offsetY: rect.top };
}

export function renderQuestion(
  canvas: HTMLCanvasElement,
  image: CanvasImageSource | null,
  imageWidth: number,
  imageHeight: number,
  lens: LensState,
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return; // headless environment: state still drives the trail and API
  }
  canvas.width = imageWidth;
  canvas.height = imageHeight;
  ctx.clearRect(0, 0, imageWidth, imageHeight);
  if (image !== null) {
    ctx.drawImage(image, 0, 0, imageWidth, imageHeight);
  } else {
    ctx.fillStyle = "#20242a";
    ctx.fillRect(0, 0, imageWidth, imageHeight);
  }

  // magnified region: source square of the lens' image-space radius blown up
  // to the fixed screen radius, clipped to the lens circle
  const view = viewTransformFor(canvas, imageWidth);
  const screenRadiusImagePx = LENS_SCREEN_RADIUS_PX / view.scale;
  ctx.save();
  ctx.beginPath();
  ctx.arc(lens.x, lens.y, screenRadiusImagePx, 0, 2 * Math.PI);
  ctx.clip();
  if (image !== null && lens.zoomLevel > 1) {
    const r = lens.lensRadiusPx;
    ctx.drawImage(
      image,
      lens.x - r,
      lens.y - r,
      2 * r,
      2 * r,
      lens.x - screenRadiusImagePx,
      lens.y - screenRadiusImagePx,
      2 * screenRadiusImagePx,
      2 * screenRadiusImagePx,
    );
  }
  ctx.restore();
  ctx.beginPath();
  ctx.arc(lens.x, lens.y, screenRadiusImagePx, 0, 2 * Math.PI);
  ctx.lineWidth = Math.max(1, 2 / view.scale);
  ctx.strokeStyle = "#ff5252";
  ctx.stroke();
}

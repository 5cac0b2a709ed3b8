/** Trail capture: lens samples with monotone timestamps.
 *
 * Pointer motion is throttled to one sample per 50 ms (>= 20 Hz during
 * continuous motion); zoom changes and final selections record unthrottled.
 * When motion resumes after an idle stretch, a closing sample is written at
 * the old position first, so the dwell there is spanned by two consecutive
 * events at the same coordinates and is recoverable from timestamps alone.
 */

import type { TrailEventJson } from "./api.js";
import type { LensState } from "./lens.js";

export const MIN_SAMPLE_INTERVAL_MS = 50;
export const IDLE_GAP_MS = 150;

export class TrailBuffer {
  private events: TrailEventJson[] = [];
  private flushCursor = 0;

  get length(): number {
    return this.events.length;
  }

  get lastEvent(): TrailEventJson | undefined {
    return this.events[this.events.length - 1];
  }

  private push(tMs: number, lens: LensState): TrailEventJson {
    const last = this.lastEvent;
    const event: TrailEventJson = {
      t_ms: Math.max(Math.round(tMs), last ? last.t_ms : 0),
      x: lens.x,
      y: lens.y,
      zoom_level: lens.zoomLevel,
      lens_radius_px: lens.lensRadiusPx,
    };
    this.events.push(event);
    return event;
  }

  /** Record a motion sample; returns true when accepted by the throttle. */
  recordMove(tMs: number, lens: LensState): boolean {
    const last = this.lastEvent;
    if (last === undefined) {
      this.push(tMs, lens);
      return true;
    }
    const gap = tMs - last.t_ms;
    if (gap < MIN_SAMPLE_INTERVAL_MS) {
      return false;
    }
    if (gap > IDLE_GAP_MS && (last.x !== lens.x || last.y !== lens.y)) {
      // close the dwell at the previous position before moving on
      this.push(tMs, {
        x: last.x,
        y: last.y,
        zoomLevel: last.zoom_level as LensState["zoomLevel"],
        lensRadiusPx: last.lens_radius_px,
      });
    }
    this.push(tMs, lens);
    return true;
  }

  /** Record unconditionally (zoom changes, final selection). */
  recordForced(tMs: number, lens: LensState): TrailEventJson {
    return this.push(tMs, lens);
  }

  snapshot(): TrailEventJson[] {
    return this.events.map((e) => ({ ...e }));
  }

  /** Events not yet handed to the transport; advances the flush cursor. */
  takeUnflushed(): TrailEventJson[] {
    const batch = this.events.slice(this.flushCursor).map((e) => ({ ...e }));
    this.flushCursor = this.events.length;
    return batch;
  }

  reset(): void {
    this.events = [];
    this.flushCursor = 0;
  }
}

/** Survey client controller.
 *
 * Owns the page flow (consent, instructions, samples, practice, the 13
 * questions with the half-way score screen), the lens state, and the trail
 * buffer. All user input funnels through three entry points (pointerMoved,
 * wheelTurned, pressAdvanceKey) so scripted tests can drive the app exactly
 * like listeners do. Async work is serialized on an internal queue; await
 * idle() to observe a settled state.
 */

import {
  ApiError,
  SurveyApi,
  type AnswerResult,
  type CircleJson,
  type NextPayload,
  type TrailEventJson,
} from "./api.js";
import {
  initialLens,
  lensCircle,
  moveLens,
  stepZoom,
  type LensState,
} from "./lens.js";
import { renderQuestion, toImageCoords, viewTransformFor } from "./magnifier.js";
import { TrailBuffer } from "./trail.js";

export type Screen =
  | "idle"
  | "consent"
  | "instructions"
  | "samples"
  | "practice"
  | "practice-feedback"
  | "experiment"
  | "score"
  | "done"
  | "error";

export interface AppOptions {
  now?: () => number;
  /** Image-space size used until the real image reports its own. */
  fallbackImageSize?: { width: number; height: number };
  workerId?: string;
}

interface PostedAnswer {
  questionIdx: number;
  finalSelection: CircleJson;
  events: number;
}

export class SurveyApp {
  readonly statusEl: HTMLElement;
  readonly messageEl: HTMLElement;
  readonly canvas: HTMLCanvasElement;
  readonly consentButton: HTMLButtonElement;

  screen: Screen = "idle";
  sessionId = "";
  questionIdx = -1;
  practiceIds: string[] = [];
  practiceIdx = 0;
  lastScore: number | null = null;
  lastPostedAnswer: PostedAnswer | null = null;

  private lens: LensState = initialLens();
  private trail = new TrailBuffer();
  private practiceSelections: CircleJson[] = [];
  currentImageId = "";
  private image: HTMLImageElement | null = null;
  private imageReady = false;
  private imageWidth: number;
  private imageHeight: number;
  private questionStartedAt = 0;
  private readonly now: () => number;
  private queue: Promise<void> = Promise.resolve();

  constructor(
    private readonly api: SurveyApi,
    private readonly container: HTMLElement,
    private readonly options: AppOptions = {},
  ) {
    this.now = options.now ?? (() => Date.now());
    this.imageWidth = options.fallbackImageSize?.width ?? 1920;
    this.imageHeight = options.fallbackImageSize?.height ?? 1080;

    const doc = container.ownerDocument;
    container.innerHTML = "";
    this.statusEl = doc.createElement("div");
    this.statusEl.id = "status";
    this.messageEl = doc.createElement("div");
    this.messageEl.id = "message";
    this.canvas = doc.createElement("canvas");
    this.canvas.id = "view";
    this.consentButton = doc.createElement("button");
    this.consentButton.id = "consent-btn";
    this.consentButton.textContent = "I have read the consent form and agree";
    this.consentButton.hidden = true;
    container.append(this.statusEl, this.messageEl, this.canvas, this.consentButton);

    this.canvas.addEventListener("pointermove", (ev) => {
      const e = ev as PointerEvent;
      this.pointerMoved(e.clientX, e.clientY);
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.wheelTurned((ev as WheelEvent).deltaY);
    });
    const win = doc.defaultView;
    win?.addEventListener("keydown", (ev) => {
      if (ev.key === "n" || ev.key === "N") {
        void this.pressAdvanceKey();
      }
    });
    this.consentButton.addEventListener("click", () => {
      void this.acknowledgeConsent();
    });
  }

  /** Resolves when every queued action has completed. */
  idle(): Promise<void> {
    return this.queue;
  }

  private enqueue(fn: () => Promise<void>): Promise<void> {
    this.queue = this.queue.then(fn).catch((err) => {
      this.screen = "error";
      this.messageEl.textContent = err instanceof Error ? err.message : String(err);
    });
    return this.queue;
  }

  start(workerId: string): Promise<void> {
    return this.enqueue(async () => {
      const info = await this.api.createSession(workerId);
      this.sessionId = info.session_id;
      await this.refresh();
    });
  }

  acknowledgeConsent(): Promise<void> {
    return this.enqueue(async () => {
      if (this.screen !== "consent") return;
      await this.api.acknowledgeConsent(this.sessionId);
      await this.refresh();
    });
  }

  // -- input ---------------------------------------------------------------

  pointerMoved(clientX: number, clientY: number): void {
    if (this.screen !== "experiment" && this.screen !== "practice") return;
    const view = viewTransformFor(this.canvas, this.imageWidth);
    const pos = toImageCoords(clientX, clientY, view);
    this.lens = moveLens(this.lens, pos.x, pos.y, this.imageWidth, this.imageHeight);
    this.trail.recordMove(this.elapsedMs(), this.lens);
    this.render();
  }

  wheelTurned(deltaY: number): void {
    if (this.screen !== "experiment" && this.screen !== "practice") return;
    const before = this.lens.zoomLevel;
    this.lens = stepZoom(this.lens, deltaY < 0 ? +1 : -1);
    if (this.lens.zoomLevel !== before) {
      this.trail.recordForced(this.elapsedMs(), this.lens);
      this.render();
    }
  }

  pressAdvanceKey(): Promise<void> {
    return this.enqueue(async () => {
      switch (this.screen) {
        case "instructions":
          await this.api.advance(this.sessionId, "finish_instructions");
          await this.refresh();
          break;
        case "samples":
          await this.api.advance(this.sessionId, "finish_samples");
          await this.refresh();
          break;
        case "practice":
          await this.collectPracticeSelection();
          break;
        case "practice-feedback":
          this.screen = "practice";
          this.practiceIdx = 0;
          this.practiceSelections = [];
          this.showPracticeImage();
          break;
        case "experiment":
          await this.submitCurrentAnswer();
          break;
        case "score":
          await this.refresh();
          break;
        default:
          break;
      }
    });
  }

  // -- flow ----------------------------------------------------------------

  private async refresh(): Promise<void> {
    const payload = await this.api.next(this.sessionId);
    switch (payload.phase) {
      case "consent":
        this.screen = "consent";
        this.messageEl.textContent = payload.consent_text ?? "";
        this.consentButton.hidden = false;
        this.status("Consent required");
        break;
      case "instructions":
        this.screen = "instructions";
        this.consentButton.hidden = true;
        this.messageEl.textContent = `${payload.instructions ?? ""} Press [N] to continue.`;
        this.status("Instructions");
        break;
      case "samples":
        this.screen = "samples";
        this.messageEl.textContent =
          (payload.samples ?? []).map((s) => `${s.kind}: ${s.note}`).join(" | ") +
          " Press [N] to continue.";
        this.status("Search examples");
        break;
      case "practice":
        this.screen = "practice";
        this.practiceIds = payload.practice_image_ids ?? [];
        this.practiceIdx = 0;
        this.practiceSelections = [];
        this.status(`Practice (attempt ${(payload.attempts ?? 0) + 1})`);
        this.showPracticeImage();
        break;
      case "experiment":
        this.screen = "experiment";
        this.startQuestion(payload);
        break;
      case "done":
        this.screen = "done";
        this.status("Survey complete");
        this.messageEl.textContent = "All questions answered. Thank you!";
        break;
      default:
        throw new Error(`unexpected phase ${payload.phase}`);
    }
  }

  private startQuestion(payload: NextPayload): void {
    this.questionIdx = payload.question_idx ?? 0;
    this.trail.reset();
    this.questionStartedAt = this.now();
    this.lens = initialLens();
    this.status(
      `Question ${this.questionIdx + 1} of ${payload.n_questions ?? 13}. ` +
        "Find the person. Keep the cursor where you look; press [N] when the lens is over the person.",
    );
    this.loadImage(payload.image_id ?? "");
  }

  private showPracticeImage(): void {
    this.trail.reset();
    this.questionStartedAt = this.now();
    this.lens = initialLens();
    const id = this.practiceIds[this.practiceIdx] ?? "";
    this.messageEl.textContent = `Practice image ${this.practiceIdx + 1} of ${this.practiceIds.length}. Press [N] once the lens is over the person.`;
    this.loadImage(id);
  }

  private async collectPracticeSelection(): Promise<void> {
    this.trail.recordForced(this.elapsedMs(), this.lens);
    this.practiceSelections.push(lensCircle(this.lens));
    this.practiceIdx += 1;
    if (this.practiceIdx < this.practiceIds.length) {
      this.showPracticeImage();
      return;
    }
    // all three collected: grade on the server
    const result = await this.api.submitPractice(this.sessionId, this.practiceSelections);
    if (result.passed) {
      await this.refresh();
    } else {
      this.screen = "practice-feedback";
      this.status(`Practice attempt ${result.attempts} missed the person`);
      this.messageEl.textContent =
        "At least one practice selection did not intersect the person. Press [N] to retry.";
    }
  }

  private async submitCurrentAnswer(): Promise<void> {
    // the POSTed selection is, by construction, the lens circle of the last
    // recorded trail event
    const finalEvent = this.trail.recordForced(this.elapsedMs(), this.lens);
    const finalSelection: CircleJson = {
      cx: finalEvent.x,
      cy: finalEvent.y,
      radius: finalEvent.lens_radius_px,
    };
    const events = this.trail.snapshot();
    const responseTimeMs = Math.max(1, finalEvent.t_ms);
    const result = await this.postAnswerWithRetry(
      this.questionIdx,
      events,
      finalSelection,
      responseTimeMs,
    );
    this.lastPostedAnswer = {
      questionIdx: this.questionIdx,
      finalSelection,
      events: events.length,
    };
    if (result.score_available) {
      const score = await this.api.midpointScore(this.sessionId);
      this.lastScore = score.score;
      this.screen = "score";
      this.status("Half-way score");
      this.messageEl.textContent = `Correct so far: ${score.score} of ${score.out_of}. Press [N] to continue.`;
      return;
    }
    await this.refresh();
  }

  /** At-least-once answer delivery: network failures are retried, and a lost
   * acknowledgement is detected by asking the server where the session is.
   * The question never advances locally until the server has confirmed. */
  private async postAnswerWithRetry(
    questionIdx: number,
    events: TrailEventJson[],
    finalSelection: CircleJson,
    responseTimeMs: number,
    maxAttempts = 5,
  ): Promise<AnswerResult> {
    for (let attempt = 0; ; attempt++) {
      try {
        return await this.api.submitAnswer(
          this.sessionId,
          questionIdx,
          events,
          finalSelection,
          responseTimeMs,
        );
      } catch (err) {
        const outOfOrderRetry =
          attempt > 0 && err instanceof ApiError && err.status === 409;
        if (err instanceof ApiError && !outOfOrderRetry) {
          throw err; // a real protocol error, not a delivery problem
        }
        if (attempt >= maxAttempts) {
          throw err;
        }
        this.status("Connection hiccup, retrying your answer...");
        await new Promise((resolve) => setTimeout(resolve, 100 * (attempt + 1)));
        // the POST (or just its response) may have been lost: if the server
        // already moved past this question, the answer was delivered
        const next = await this.api.next(this.sessionId).catch(() => null);
        if (
          next !== null &&
          (next.phase !== "experiment" || (next.question_idx ?? 0) > questionIdx)
        ) {
          return {
            phase: next.phase,
            next_question_idx: next.phase === "experiment" ? (next.question_idx ?? null) : null,
            score_available: next.score_available ?? false,
          };
        }
      }
    }
  }

  // -- helpers ---------------------------------------------------------------

  private elapsedMs(): number {
    return Math.max(0, Math.round(this.now() - this.questionStartedAt));
  }

  private status(text: string): void {
    this.statusEl.textContent = text;
  }

  private loadImage(imageId: string): void {
    this.currentImageId = imageId;
    this.imageReady = false;
    this.image = null;
    if (imageId === "") {
      this.render();
      return;
    }
    const doc = this.container.ownerDocument;
    const img = doc.createElement("img");
    img.onload = () => {
      this.image = img;
      this.imageReady = true;
      if (img.naturalWidth > 0) {
        this.imageWidth = img.naturalWidth;
        this.imageHeight = img.naturalHeight;
      }
      this.render();
    };
    let retried = false;
    img.onerror = () => {
      if (!retried) {
        retried = true;
        this.status("Image failed to load, retrying...");
        setTimeout(() => {
          img.src = this.api.imageUrl(imageId) + `?retry=${Date.now()}`;
        }, 500);
        return;
      }
      // keep the placeholder and the fallback image size; the flow stays usable
      this.render();
    };
    img.src = this.api.imageUrl(imageId);
    this.render();
  }

  private render(): void {
    renderQuestion(
      this.canvas,
      this.imageReady ? this.image : null,
      this.imageWidth,
      this.imageHeight,
      this.lens,
    );
  }

  get trailEvents(): number {
    return this.trail.length;
  }

  get trailSnapshot() {
    return this.trail.snapshot();
  }

  get lensState(): LensState {
    return { ...this.lens };
  }
}

export { ApiError };

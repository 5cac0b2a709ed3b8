/** Typed client for the survey service HTTP/JSON API. */

export interface CircleJson {
  cx: number;
  cy: number;
  radius: number;
}

export interface TrailEventJson {
  t_ms: number;
  x: number;
  y: number;
  zoom_level: number;
  lens_radius_px: number;
}

export interface SessionInfo {
  session_id: string;
  survey_id: string;
  phase: string;
  n_questions: number;
}

export interface NextPayload {
  phase: string;
  consent_text?: string;
  instructions?: string;
  zoom_lens_table?: Record<string, number>;
  samples?: { kind: string; note: string }[];
  practice_image_ids?: string[];
  attempts?: number;
  question_idx?: number;
  image_id?: string;
  n_questions?: number;
  score_available?: boolean;
  answered?: number;
}

export interface PracticeResult {
  passed: boolean;
  phase: string;
  attempts: number;
}

export interface AnswerResult {
  phase: string;
  next_question_idx: number | null;
  score_available: boolean;
}

export interface ScoreResult {
  score: number;
  out_of: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class SurveyApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const parsed = (await resp.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(workerId: string): Promise<SessionInfo> {
    return this.request("POST", "/sessions", { worker_id: workerId });
  }

  acknowledgeConsent(sessionId: string): Promise<{ phase: string }> {
    return this.request("POST", `/sessions/${sessionId}/consent`, { acknowledged: true });
  }

  advance(sessionId: string, event: string): Promise<{ phase: string }> {
    return this.request("POST", `/sessions/${sessionId}/advance`, { event });
  }

  next(sessionId: string): Promise<NextPayload> {
    return this.request("GET", `/sessions/${sessionId}/next`);
  }

  submitPractice(sessionId: string, selections: CircleJson[]): Promise<PracticeResult> {
    return this.request("POST", `/sessions/${sessionId}/practice`, { selections });
  }

  submitAnswer(
    sessionId: string,
    questionIdx: number,
    events: TrailEventJson[],
    finalSelection: CircleJson,
    responseTimeMs: number,
  ): Promise<AnswerResult> {
    return this.request("POST", `/sessions/${sessionId}/answers`, {
      question_idx: questionIdx,
      events,
      final_selection: finalSelection,
      response_time_ms: responseTimeMs,
    });
  }

  midpointScore(sessionId: string): Promise<ScoreResult> {
    return this.request("GET", `/sessions/${sessionId}/score`);
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${imageId}`;
  }
}

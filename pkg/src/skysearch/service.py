"""HTTP/JSON API for running surveys.

Thin layer over the session state machine and the store; every mutation is
serialized through the store lock, so a survey can never be claimed by two
live sessions and a session's request stream applies in order.
"""

from __future__ import annotations

import os
import uuid

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from pydantic import BaseModel, Field

from .behavior import NonMonotonicTrail, TrailEvent
from .geometry import Annotation, CircleSelection
from .session import (
    MIDPOINT_QUESTION,
    PRACTICE_SIZE,
    IllegalTransition,
    OutOfOrderAnswer,
    ReviewThresholds,
    WrongPhase,
    WrongStatus,
    WrongTime,
    midpoint_score,
)
from .store import Store
from .survey import QUESTIONS_PER_SURVEY

CONSENT_TEXT = (
    "This survey records your screen cursor trail, selection accuracy, and "
    "response times while you search aerial images for a person. "
    "Acknowledge to continue."
)

INSTRUCTIONS = (
    "Every image contains exactly one person. Search carefully, keep the "
    "cursor where you are looking, and use the zoom lens. Once the lens is "
    "over the person, press the key [N] to continue to the next image."
)

ZOOM_LENS_TABLE = {1: 60.0, 2: 30.0, 4: 15.0}  # zoom level -> image-space radius px


class CircleBody(BaseModel):
    cx: float
    cy: float
    radius: float = Field(gt=0)

    def to_selection(self) -> CircleSelection:
        return CircleSelection(self.cx, self.cy, self.radius)


class TrailEventBody(BaseModel):
    t_ms: int = Field(ge=0)
    x: float
    y: float
    zoom_level: int = Field(ge=1)
    lens_radius_px: float = Field(gt=0)

    def to_event(self) -> TrailEvent:
        return TrailEvent(self.t_ms, self.x, self.y, self.zoom_level, self.lens_radius_px)


class CreateSessionBody(BaseModel):
    worker_id: str


class ConsentBody(BaseModel):
    acknowledged: bool


class AdvanceBody(BaseModel):
    event: str


class PracticeBody(BaseModel):
    selections: list[CircleBody]


class AnswerBody(BaseModel):
    question_idx: int = Field(ge=0, lt=QUESTIONS_PER_SURVEY)
    events: list[TrailEventBody]
    final_selection: CircleBody
    response_time_ms: int = Field(gt=0)


def create_app(
    store: Store,
    annotations: dict[str, Annotation],
    practice_images: list[Annotation],
    images_dir: str | None = None,
    thresholds: ReviewThresholds | None = None,
    allow_repeat_workers: bool = False,
) -> FastAPI:
    if len(practice_images) != PRACTICE_SIZE:
        raise ValueError(f"need exactly {PRACTICE_SIZE} practice images")
    app = FastAPI(title="skysearch survey service")

    def get_session(session_id: str):
        session = store.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        if not allow_repeat_workers:
            for existing in store.sessions.values():
                if existing.worker_id == body.worker_id:
                    raise HTTPException(
                        status_code=409, detail="worker already has a session"
                    )
        session = store.claim_survey(f"session_{uuid.uuid4().hex[:12]}", body.worker_id)
        if session is None:
            raise HTTPException(status_code=409, detail="no surveys available")
        return {
            "session_id": session.session_id,
            "survey_id": session.survey.survey_id,
            "phase": session.phase,
            "n_questions": QUESTIONS_PER_SURVEY,
        }

    @app.post("/sessions/{session_id}/consent")
    def consent(session_id: str, body: ConsentBody):
        session = get_session(session_id)
        if not body.acknowledged:
            raise HTTPException(status_code=400, detail="consent must be acknowledged")
        try:
            store.advance(session, "ack_consent")
        except IllegalTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"phase": session.phase}

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str, body: AdvanceBody):
        session = get_session(session_id)
        try:
            store.advance(session, body.event)
        except IllegalTransition as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"phase": session.phase}

    @app.get("/sessions/{session_id}/next")
    def next_payload(session_id: str):
        session = get_session(session_id)
        phase = session.phase
        payload = {"phase": phase}
        if phase == "consent":
            payload["consent_text"] = CONSENT_TEXT
        elif phase == "instructions":
            payload["instructions"] = INSTRUCTIONS
            payload["zoom_lens_table"] = ZOOM_LENS_TABLE
        elif phase == "samples":
            payload["samples"] = [
                {"kind": "good", "note": "thorough search covering the image"},
                {"kind": "bad", "note": "no search, selection without looking"},
            ]
        elif phase == "practice":
            payload["practice_image_ids"] = [ann.image_id for ann in practice_images]
            payload["attempts"] = session.practice_attempts
        elif phase == "experiment":
            idx = session.current_question
            payload.update(
                {
                    "question_idx": idx,
                    "image_id": session.question_image_id(idx),
                    "n_questions": QUESTIONS_PER_SURVEY,
                    "score_available": idx == MIDPOINT_QUESTION,
                }
            )
        elif phase == "done":
            payload["answered"] = len(session.answers)
        return payload

    @app.post("/sessions/{session_id}/practice")
    def practice(session_id: str, body: PracticeBody):
        session = get_session(session_id)
        if len(body.selections) != PRACTICE_SIZE:
            raise HTTPException(
                status_code=400, detail=f"exactly {PRACTICE_SIZE} selections required"
            )
        try:
            passed = store.practice(
                session, [s.to_selection() for s in body.selections], practice_images
            )
        except WrongPhase as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"passed": passed, "phase": session.phase, "attempts": session.practice_attempts}

    @app.post("/sessions/{session_id}/answers")
    def answers(session_id: str, body: AnswerBody):
        session = get_session(session_id)
        if session.phase != "experiment":
            raise HTTPException(status_code=409, detail=f"not in experiment phase: {session.phase}")
        image_id = session.question_image_id(body.question_idx) if (
            body.question_idx < QUESTIONS_PER_SURVEY
        ) else None
        annotation = annotations.get(image_id) if image_id else None
        if annotation is None:
            raise HTTPException(status_code=404, detail=f"no annotation for question image")
        try:
            store.answer(
                session,
                body.question_idx,
                [e.to_event() for e in body.events],
                body.final_selection.to_selection(),
                body.response_time_ms,
                annotation,
            )
        except OutOfOrderAnswer as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (NonMonotonicTrail, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "phase": session.phase,
            "next_question_idx": session.current_question
            if session.phase == "experiment"
            else None,
            "score_available": session.current_question == MIDPOINT_QUESTION,
        }

    @app.get("/sessions/{session_id}/score")
    def score(session_id: str):
        session = get_session(session_id)
        try:
            value = midpoint_score(session)
        except WrongTime as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"score": value, "out_of": MIDPOINT_QUESTION}

    @app.post("/admin/review/{session_id}")
    def review(session_id: str):
        session = get_session(session_id)
        try:
            result = store.review(session, annotations, thresholds)
        except WrongPhase as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {
            "verdict": result.verdict,
            "control_correct": result.control_correct,
            "rt_flags": list(result.rt_flags),
            "trail_coverage_score": result.trail_coverage_score,
            "reasons": list(result.reasons),
        }

    @app.post("/admin/requeue/{survey_id}")
    def requeue_survey(survey_id: str):
        if survey_id not in store.surveys:
            raise HTTPException(status_code=404, detail=f"no survey {survey_id}")
        try:
            survey = store.requeue_survey(survey_id)
        except WrongStatus as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"survey_id": survey.survey_id, "status": survey.status}

    @app.get("/images/{image_id}")
    def image(image_id: str):
        if images_dir:
            for ext in ("png", "jpg", "jpeg"):
                path = os.path.join(images_dir, f"{image_id}.{ext}")
                if os.path.exists(path):
                    return FileResponse(path)
        raise HTTPException(status_code=404, detail=f"no image file for {image_id}")

    return app

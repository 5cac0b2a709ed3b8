"""Durable state for the experiment service.

Every session change is appended as one JSON line to that session's event
log; survey statuses live in a single table file rewritten atomically.
Recovery replays the logs through the same transition functions that serve
live traffic, so a crash between appends loses at most the unwritten tail.
"""

from __future__ import annotations

import json
import os
import threading

from .behavior import BehavioralRecord, TrailEvent
from .geometry import Annotation, CircleSelection
from .session import (
    Session,
    advance_phase,
    grade_practice,
    record_answer,
    requeue,
    review_submission,
)
from .survey import Question, Survey


class Store:
    """Filesystem-backed state: surveys.json plus events/<session_id>.jsonl."""

    def __init__(self, root: str):
        self.root = root
        self.events_dir = os.path.join(root, "events")
        self.surveys_path = os.path.join(root, "surveys.json")
        os.makedirs(self.events_dir, exist_ok=True)
        self.lock = threading.RLock()
        self.surveys: dict[str, Survey] = {}
        self.sessions: dict[str, Session] = {}
        self.assignments: dict[str, str] = {}  # survey_id -> live session_id
        self.records: list[BehavioralRecord] = []
        self.session_verdicts: dict[str, str] = {}

    # -- survey table ------------------------------------------------------

    def put_surveys(self, surveys: list[Survey]) -> None:
        with self.lock:
            for survey in surveys:
                self.surveys[survey.survey_id] = survey
            self._write_survey_table()

    def _write_survey_table(self) -> None:
        tmp = self.surveys_path + ".tmp"
        table = {
            sid: {
                "status": s.status,
                "questions": [
                    {"image_id": q.image_id, "is_control": q.is_control} for q in s.questions
                ],
                "reused_image_ids": sorted(s.reused_image_ids),
            }
            for sid, s in sorted(self.surveys.items())
        }
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(table, fh)
        os.replace(tmp, self.surveys_path)

    # -- event log ---------------------------------------------------------

    def _append(self, session_id: str, event: dict) -> None:
        path = os.path.join(self.events_dir, f"{session_id}.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- session lifecycle -------------------------------------------------

    def claim_survey(self, session_id: str, worker_id: str) -> Session | None:
        """Atomically assign an available survey to a new session."""
        with self.lock:
            for sid in sorted(self.surveys):
                survey = self.surveys[sid]
                if survey.status == "available":
                    survey.status = "assigned"
                    session = Session(session_id=session_id, worker_id=worker_id, survey=survey)
                    self.sessions[session_id] = session
                    self.assignments[survey.survey_id] = session_id
                    self._write_survey_table()
                    self._append(
                        session_id,
                        {"kind": "created", "worker_id": worker_id, "survey_id": survey.survey_id},
                    )
                    return session
            return None

    def advance(self, session: Session, event: str) -> None:
        with self.lock:
            advance_phase(session, event)
            self._append(session.session_id, {"kind": "advance", "event": event})

    def practice(
        self, session: Session, selections, practice_images: list[Annotation]
    ) -> bool:
        with self.lock:
            passed = grade_practice(
                session, selections, [ann.gt_box for ann in practice_images]
            )
            self._append(
                session.session_id,
                {
                    "kind": "practice",
                    "passed": passed,
                    "selections": [s.to_json() for s in selections],
                },
            )
            return passed

    def answer(
        self,
        session: Session,
        question_idx: int,
        events: list[TrailEvent],
        final_selection: CircleSelection,
        response_time_ms: int,
        annotation: Annotation,
    ) -> BehavioralRecord:
        with self.lock:
            record = record_answer(
                session, question_idx, events, final_selection, response_time_ms, annotation
            )
            self.records.append(record)
            self._append(
                session.session_id,
                {"kind": "answer", "question_idx": question_idx, "record": record.to_json()},
            )
            if session.phase == "done":
                self._write_survey_table()
            return record

    def review(self, session: Session, annotations: dict[str, Annotation], thresholds=None):
        with self.lock:
            result = review_submission(session, annotations, thresholds)
            self.session_verdicts[session.session_id] = result.verdict
            self._write_survey_table()
            self._append(
                session.session_id,
                {"kind": "review", "verdict": result.verdict, "reasons": list(result.reasons)},
            )
            return result

    def requeue_survey(self, survey_id: str) -> Survey:
        with self.lock:
            survey = self.surveys[survey_id]
            requeue(survey)
            self.assignments.pop(survey_id, None)
            self._write_survey_table()
            return survey

    def accepted_records(self) -> list[BehavioralRecord]:
        """Records from accepted sessions only: the default analytics input.

        Rejected and unreviewed sessions are quarantined (kept on disk in the
        event logs, excluded here).
        """
        with self.lock:
            accepted = {
                sid for sid, verdict in self.session_verdicts.items() if verdict == "accept"
            }
            return [rec for rec in self.records if rec.session_id in accepted]

    # -- recovery ----------------------------------------------------------

    def recover(self, annotations: dict[str, Annotation], practice_images: list[Annotation]) -> None:
        """Rebuild in-memory state by replaying the survey table and event logs."""
        with self.lock:
            final_statuses: dict[str, str] = {}
            if os.path.exists(self.surveys_path):
                with open(self.surveys_path, encoding="utf-8") as fh:
                    table = json.load(fh)
                for sid, row in table.items():
                    final_statuses[sid] = row["status"]
                    self.surveys[sid] = Survey(
                        survey_id=sid,
                        questions=tuple(
                            Question(q["image_id"], q["is_control"]) for q in row["questions"]
                        ),
                        status=row["status"],
                        reused_image_ids=frozenset(row["reused_image_ids"]),
                    )
            for name in sorted(os.listdir(self.events_dir)):
                if not name.endswith(".jsonl"):
                    continue
                session_id = name[: -len(".jsonl")]
                self._replay(session_id, annotations, practice_images)
            # the table is authoritative for statuses: replay rebuilds session
            # state but must not resurrect statuses a later requeue reset
            for sid, status in final_statuses.items():
                self.surveys[sid].status = status

    def _replay(self, session_id: str, annotations, practice_images) -> None:
        path = os.path.join(self.events_dir, f"{session_id}.jsonl")
        session: Session | None = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event["kind"]
                if kind == "created":
                    survey = self.surveys[event["survey_id"]]
                    session = Session(
                        session_id=session_id, worker_id=event["worker_id"], survey=survey
                    )
                    # replay must not depend on the stored status snapshot
                    if survey.status == "available":
                        survey.status = "assigned"
                    self.sessions[session_id] = session
                    self.assignments[survey.survey_id] = session_id
                elif kind == "advance":
                    advance_phase(session, event["event"])
                elif kind == "practice":
                    grade_practice(
                        session,
                        [CircleSelection.from_json(s) for s in event["selections"]],
                        [ann.gt_box for ann in practice_images],
                    )
                elif kind == "answer":
                    rec = BehavioralRecord.from_json(event["record"])
                    ann = annotations[rec.image_id]
                    record = record_answer(
                        session,
                        event["question_idx"],
                        list(rec.events),
                        rec.final_selection,
                        rec.response_time_ms,
                        ann,
                    )
                    self.records.append(record)
                elif kind == "review":
                    self.session_verdicts[session_id] = event["verdict"]
                    session.survey.status = (
                        "accepted" if event["verdict"] == "accept" else "rejected"
                    )

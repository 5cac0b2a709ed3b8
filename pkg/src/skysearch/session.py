"""Survey session state machine, practice gating, review, and requeue.

A session walks consent -> instructions -> samples -> practice -> experiment
-> done, in that order only. The experiment phase is unreachable until all
three practice selections intersect their ground truth. Half-way through the
13 questions (after the 7th answer) the worker can fetch a score of correct
answers so far. Submitted sessions are reviewed on control accuracy,
response-time plausibility, and trail coverage; rejected surveys go back to
the pool for a different worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .behavior import BehavioralRecord, TrailEvent
from .geometry import Annotation, Box, CircleSelection, circle_box_iou
from .survey import QUESTIONS_PER_SURVEY, Survey

PHASES = ("consent", "instructions", "samples", "practice", "experiment", "done")

# half-way through 13 questions, rounded up
MIDPOINT_QUESTION = math.ceil(QUESTIONS_PER_SURVEY / 2)

PRACTICE_SIZE = 3

ADVANCE_EVENTS = {
    "ack_consent": ("consent", "instructions"),
    "finish_instructions": ("instructions", "samples"),
    "finish_samples": ("samples", "practice"),
}


class IllegalTransition(ValueError):
    pass


class WrongPhase(ValueError):
    pass


class OutOfOrderAnswer(ValueError):
    pass


class WrongTime(ValueError):
    pass


class WrongStatus(ValueError):
    pass


@dataclass(frozen=True)
class ReviewThresholds:
    """Acceptance rules for submitted surveys; the criteria categories follow
    the survey protocol, the numbers are operator-configurable."""

    min_controls: int = 2
    rt_min_ms: int = 300
    rt_max_ms: int = 300_000
    min_coverage: float = 0.15
    coverage_grid: int = 10


@dataclass(frozen=True)
class ReviewResult:
    control_correct: int
    rt_flags: tuple[int, ...]  # question indices with implausible response times
    trail_coverage_score: float
    verdict: str
    reasons: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.verdict not in ("accept", "reject"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "reject" and not self.reasons:
            raise ValueError("a rejection needs at least one reason")


@dataclass
class Session:
    session_id: str
    worker_id: str
    survey: Survey
    phase: str = "consent"
    practice_attempts: int = 0
    practice_passed: bool = False
    answers: list[BehavioralRecord] = field(default_factory=list)

    @property
    def current_question(self) -> int:
        return len(self.answers)

    def question_image_id(self, idx: int) -> str:
        return self.survey.questions[idx].image_id


def advance_phase(session: Session, event: str) -> Session:
    """Apply a page-flow event; practice and answers have dedicated entry points."""
    move = ADVANCE_EVENTS.get(event)
    if move is None:
        raise IllegalTransition(f"unknown event {event!r}")
    src, dst = move
    if session.phase != src:
        raise IllegalTransition(f"event {event!r} not legal in phase {session.phase!r}")
    session.phase = dst
    return session


def grade_practice(
    session: Session,
    selections: list[CircleSelection],
    practice_boxes: list[Box],
) -> bool:
    """Pass iff every practice selection intersects its ground-truth box.

    A failed attempt counts and can be retried; a pass moves the session to
    the experiment phase.
    """
    if session.phase != "practice":
        raise WrongPhase(f"practice submitted in phase {session.phase!r}")
    if len(selections) != PRACTICE_SIZE or len(practice_boxes) != PRACTICE_SIZE:
        raise ValueError(f"practice takes exactly {PRACTICE_SIZE} selections")
    passed = all(
        circle_box_iou(sel, box) > 0.0 for sel, box in zip(selections, practice_boxes)
    )
    if passed:
        session.practice_passed = True
        session.phase = "experiment"
    else:
        session.practice_attempts += 1
    return passed


def record_answer(
    session: Session,
    question_idx: int,
    events: list[TrailEvent],
    final_selection: CircleSelection,
    response_time_ms: int,
    annotation: Annotation,
) -> BehavioralRecord:
    """Store the answer for the session's current question and advance it."""
    if session.phase != "experiment":
        raise WrongPhase(f"answers not accepted in phase {session.phase!r}")
    if question_idx != session.current_question:
        raise OutOfOrderAnswer(
            f"answer for question {question_idx}, session is on {session.current_question}"
        )
    question = session.survey.questions[question_idx]
    if annotation.image_id != question.image_id:
        raise ValueError(
            f"annotation {annotation.image_id} does not match question image {question.image_id}"
        )
    record = BehavioralRecord(
        session_id=session.session_id,
        worker_id=session.worker_id,
        image_id=question.image_id,
        is_control=question.is_control,
        events=tuple(events),
        final_selection=final_selection,
        response_time_ms=response_time_ms,
        iou=circle_box_iou(final_selection, annotation.gt_box),
        stratum=annotation.stratum,
    )
    session.answers.append(record)
    if session.current_question == QUESTIONS_PER_SURVEY:
        session.phase = "done"
        session.survey.status = "submitted"
    return record


def midpoint_score(session: Session) -> int:
    """Number of correct answers so far; available exactly at the half-way mark."""
    if session.current_question != MIDPOINT_QUESTION:
        raise WrongTime(
            f"score available after question {MIDPOINT_QUESTION}, "
            f"session has {session.current_question} answers"
        )
    return sum(1 for rec in session.answers if rec.iou is not None and rec.iou > 0)


def trail_coverage(
    record: BehavioralRecord, annotation: Annotation, grid: int = 10
) -> float:
    """Fraction of a grid x grid partition of the image touched by lens disks."""
    touched = [[False] * grid for _ in range(grid)]
    cell_w = annotation.image_width_px / grid
    cell_h = annotation.image_height_px / grid
    for ev in record.events:
        c_lo = max(0, int((ev.x - ev.lens_radius_px) // cell_w))
        c_hi = min(grid - 1, int((ev.x + ev.lens_radius_px) // cell_w))
        r_lo = max(0, int((ev.y - ev.lens_radius_px) // cell_h))
        r_hi = min(grid - 1, int((ev.y + ev.lens_radius_px) // cell_h))
        disk = ev.lens_circle()
        for r in range(r_lo, r_hi + 1):
            for c in range(c_lo, c_hi + 1):
                if touched[r][c]:
                    continue
                cell = Box(c * cell_w, r * cell_h, cell_w, cell_h)
                # cheap reject: corner distance; exact area for the rest
                if circle_box_iou(disk, cell) > 0.0:
                    touched[r][c] = True
    return sum(sum(row) for row in touched) / (grid * grid)


def review_submission(
    session: Session,
    annotations: dict[str, Annotation],
    thresholds: ReviewThresholds | None = None,
) -> ReviewResult:
    """Accept or reject a finished session on controls, timing, and coverage."""
    if session.phase != "done":
        raise WrongPhase("review applies to finished sessions only")
    thr = thresholds or ReviewThresholds()
    reasons: list[str] = []

    controls = [rec for rec in session.answers if rec.is_control]
    control_correct = sum(1 for rec in controls if rec.iou is not None and rec.iou > 0)
    if control_correct < thr.min_controls:
        reasons.append(
            f"control accuracy {control_correct}/{len(controls)} below minimum {thr.min_controls}"
        )

    rt_flags = tuple(
        idx
        for idx, rec in enumerate(session.answers)
        if not thr.rt_min_ms <= rec.response_time_ms <= thr.rt_max_ms
    )
    if rt_flags:
        reasons.append(f"implausible response times on questions {list(rt_flags)}")

    coverages = [
        trail_coverage(rec, annotations[rec.image_id], thr.coverage_grid)
        for rec in session.answers
    ]
    coverage = sum(coverages) / len(coverages) if coverages else 0.0
    if coverage < thr.min_coverage:
        reasons.append(f"trail coverage {coverage:.3f} below minimum {thr.min_coverage}")

    verdict = "reject" if reasons else "accept"
    session.survey.status = "rejected" if reasons else "accepted"
    return ReviewResult(
        control_correct=control_correct,
        rt_flags=rt_flags,
        trail_coverage_score=coverage,
        verdict=verdict,
        reasons=tuple(reasons),
    )


def requeue(survey: Survey) -> Survey:
    """Return a rejected survey to the available pool for a new worker."""
    if survey.status != "rejected":
        raise WrongStatus(f"only rejected surveys can be requeued, status is {survey.status!r}")
    survey.status = "available"
    return survey

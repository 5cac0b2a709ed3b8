"""Behavioral-data formats: lens trails, final selections, response times.

On disk a behavioral file is JSON-lines, one record per line, with the iou
field omitted (it is computed on ingest against the annotation file, never
supplied). The enriched format written by ``ingest --out`` additionally
carries the computed iou and the record's (distance_m, visibility_pct)
stratum so that downstream analytics can run from a single file.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .geometry import (
    Annotation,
    CircleSelection,
    StratumKey,
    circle_box_iou,
    iter_jsonl,
)

log = logging.getLogger(__name__)


class MissingAnnotation(KeyError):
    """A behavioral record references an image_id absent from the annotations."""

    def __init__(self, image_id: str):
        super().__init__(image_id)
        self.image_id = image_id


class MalformedLine(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class NonMonotonicTrail(ValueError):
    def __init__(self, session_id: str, image_id: str):
        super().__init__(f"trail timestamps decrease in session {session_id}, image {image_id}")
        self.session_id = session_id
        self.image_id = image_id


@dataclass(frozen=True)
class TrailEvent:
    """One sampled lens position: where the worker was looking, and when."""

    t_ms: int
    x: float
    y: float
    zoom_level: int
    lens_radius_px: float

    def __post_init__(self) -> None:
        if self.t_ms < 0:
            raise ValueError(f"t_ms must be non-negative, got {self.t_ms}")
        if self.zoom_level < 1:
            raise ValueError(f"zoom_level must be >= 1, got {self.zoom_level}")
        if not self.lens_radius_px > 0:
            raise ValueError(f"lens_radius_px must be positive, got {self.lens_radius_px}")

    def lens_circle(self) -> CircleSelection:
        return CircleSelection(cx=self.x, cy=self.y, radius=self.lens_radius_px)

    def to_json(self) -> dict:
        return {
            "t_ms": self.t_ms,
            "x": self.x,
            "y": self.y,
            "zoom_level": self.zoom_level,
            "lens_radius_px": self.lens_radius_px,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrailEvent":
        return cls(
            t_ms=int(obj["t_ms"]),
            x=float(obj["x"]),
            y=float(obj["y"]),
            zoom_level=int(obj["zoom_level"]),
            lens_radius_px=float(obj["lens_radius_px"]),
        )


@dataclass(frozen=True)
class BehavioralRecord:
    """One worker x image outcome: the search trail plus the final selection.

    ``iou`` and ``stratum`` are computed fields, populated on ingest from the
    ground-truth annotation; they are never read from the behavioral file.
    """

    session_id: str
    worker_id: str
    image_id: str
    is_control: bool
    events: tuple[TrailEvent, ...]
    final_selection: CircleSelection
    response_time_ms: int
    iou: float | None = None
    stratum: StratumKey | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.events:
            raise ValueError("a record needs at least one trail event")
        last_t = -1
        for ev in self.events:
            if ev.t_ms < last_t:
                raise NonMonotonicTrail(self.session_id, self.image_id)
            last_t = ev.t_ms
        if self.response_time_ms <= 0:
            raise ValueError("response_time_ms must be positive")
        if self.response_time_ms < self.events[-1].t_ms:
            raise ValueError(
                f"response_time_ms {self.response_time_ms} precedes the last "
                f"trail event at {self.events[-1].t_ms} ms"
            )
        if self.final_selection != self.events[-1].lens_circle():
            raise ValueError("final_selection must equal the last trail event's lens circle")
        if self.iou is not None and not (0.0 <= self.iou <= 1.0):
            raise ValueError(f"iou out of range: {self.iou}")

    def to_json(self, include_computed: bool = False) -> dict:
        obj = {
            "session_id": self.session_id,
            "worker_id": self.worker_id,
            "image_id": self.image_id,
            "is_control": self.is_control,
            "events": [ev.to_json() for ev in self.events],
            "final_selection": self.final_selection.to_json(),
            "response_time_ms": self.response_time_ms,
        }
        if include_computed:
            obj["iou"] = self.iou
            if self.stratum is not None:
                obj["distance_m"] = self.stratum.distance_m
                obj["visibility_pct"] = self.stratum.visibility_pct
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "BehavioralRecord":
        stratum = None
        if "distance_m" in obj and "visibility_pct" in obj:
            stratum = StratumKey(int(obj["distance_m"]), int(obj["visibility_pct"]))
        iou = obj.get("iou")
        return cls(
            session_id=str(obj["session_id"]),
            worker_id=str(obj["worker_id"]),
            image_id=str(obj["image_id"]),
            is_control=bool(obj["is_control"]),
            events=tuple(TrailEvent.from_json(e) for e in obj["events"]),
            final_selection=CircleSelection.from_json(obj["final_selection"]),
            response_time_ms=int(obj["response_time_ms"]),
            iou=float(iou) if iou is not None else None,
            stratum=stratum,
        )


@dataclass(frozen=True)
class DatasetSummary:
    n_records: int
    per_stratum: dict[StratumKey, int]
    n_workers: int
    n_control: int
    n_positive: int
    n_malformed: int

    def to_json(self) -> dict:
        return {
            "n_records": self.n_records,
            "per_stratum": [
                {"distance_m": k.distance_m, "visibility_pct": k.visibility_pct, "count": c}
                for k, c in sorted(
                    self.per_stratum.items(), key=lambda kv: (kv[0].distance_m, kv[0].visibility_pct)
                )
            ],
            "n_workers": self.n_workers,
            "n_control": self.n_control,
            "n_positive": self.n_positive,
            "n_malformed": self.n_malformed,
        }


def _clamp_events(
    events: Sequence[TrailEvent], ann: Annotation
) -> tuple[tuple[TrailEvent, ...], int]:
    """Clamp lens coordinates into the image; browsers overshoot during fast motion."""
    clamped = []
    n_clamped = 0
    for ev in events:
        x = min(max(ev.x, 0.0), float(ann.image_width_px))
        y = min(max(ev.y, 0.0), float(ann.image_height_px))
        if x != ev.x or y != ev.y:
            n_clamped += 1
            ev = replace(ev, x=x, y=y)
        clamped.append(ev)
    return tuple(clamped), n_clamped


def _record_from_line(obj: dict, ann: Annotation) -> BehavioralRecord:
    raw = BehavioralRecord.from_json(obj)
    events, n_clamped = _clamp_events(raw.events, ann)
    if n_clamped:
        log.warning(
            "clamped %d lens positions to image bounds (session %s, image %s)",
            n_clamped,
            raw.session_id,
            raw.image_id,
        )
    final = raw.final_selection
    if final == raw.events[-1].lens_circle():
        # recorded before clamping; follow the clamped trail
        final = events[-1].lens_circle()
    record = BehavioralRecord(
        session_id=raw.session_id,
        worker_id=raw.worker_id,
        image_id=raw.image_id,
        is_control=raw.is_control,
        events=events,
        final_selection=final,
        response_time_ms=raw.response_time_ms,
        iou=circle_box_iou(final, ann.gt_box),
        stratum=ann.stratum,
    )
    return record


def ingest(
    behavior_path: str, annotation_index: dict[str, Annotation]
) -> tuple[list[BehavioralRecord], DatasetSummary, list[MalformedLine]]:
    """Read a behavioral file, validate every line, and compute per-record IoU.

    Malformed lines are collected (with their line numbers) rather than
    aborting the ingest; a missing annotation or a decreasing trail is a
    dataset-level inconsistency and raises.
    """
    records: list[BehavioralRecord] = []
    issues: list[MalformedLine] = []
    for line_no, line in iter_jsonl(behavior_path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(MalformedLine(line_no, f"invalid JSON: {exc.msg}"))
            continue
        image_id = obj.get("image_id")
        if image_id is None:
            issues.append(MalformedLine(line_no, "missing image_id"))
            continue
        ann = annotation_index.get(str(image_id))
        if ann is None:
            raise MissingAnnotation(str(image_id))
        try:
            records.append(_record_from_line(obj, ann))
        except NonMonotonicTrail:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(MalformedLine(line_no, str(exc)))
    summary = summarize(records, n_malformed=len(issues))
    return records, summary, issues


def summarize(records: Sequence[BehavioralRecord], n_malformed: int = 0) -> DatasetSummary:
    per_stratum: Counter[StratumKey] = Counter()
    for r in records:
        if r.stratum is not None:
            per_stratum[r.stratum] += 1
    n_control = sum(1 for r in records if r.is_control)
    return DatasetSummary(
        n_records=len(records),
        per_stratum=dict(per_stratum),
        n_workers=len({r.worker_id for r in records}),
        n_control=n_control,
        n_positive=len(records) - n_control,
        n_malformed=n_malformed,
    )


def write_records(path: str, records: Iterable[BehavioralRecord]) -> None:
    """Write the interchange format (iou and stratum omitted)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(include_computed=False)) + "\n")


def write_enriched(path: str, records: Iterable[BehavioralRecord]) -> None:
    """Write validated records with computed iou and stratum attached."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(include_computed=True)) + "\n")


def read_enriched(path: str) -> list[BehavioralRecord]:
    records = []
    for line_no, line in iter_jsonl(path):
        try:
            records.append(BehavioralRecord.from_json(json.loads(line)))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedLine(line_no, str(exc)) from exc
    return records


def label_tp_fp(
    records: Iterable[BehavioralRecord],
) -> tuple[list[BehavioralRecord], list[BehavioralRecord]]:
    """Partition records into true positives (iou > 0) and false positives."""
    tp: list[BehavioralRecord] = []
    fp: list[BehavioralRecord] = []
    for rec in records:
        if rec.iou is None:
            raise ValueError(f"record {rec.session_id}/{rec.image_id} has no computed iou")
        (tp if rec.iou > 0 else fp).append(rec)
    return tp, fp

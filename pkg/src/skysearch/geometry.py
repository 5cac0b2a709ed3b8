"""Shared domain types and geometry primitives.

Boxes are axis-aligned and stored as (x_min, y_min, width, height) in image
pixels; every file format in this package uses the same convention. Circular
selections come from the magnifier lens and are stored as (cx, cy, radius).
All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

DISTANCES_M: tuple[int, ...] = (10, 30, 50, 70, 90)
VISIBILITIES_PCT: tuple[int, ...] = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixels, origin at the image top-left."""

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"box must have positive extent, got {self.width}x{self.height}")

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    def area(self) -> float:
        return self.width * self.height

    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def center(self) -> tuple[float, float]:
        return (self.x_min + self.width / 2.0, self.y_min + self.height / 2.0)

    def to_json(self) -> dict:
        return {
            "x_min": self.x_min,
            "y_min": self.y_min,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Box":
        return cls(
            x_min=float(obj["x_min"]),
            y_min=float(obj["y_min"]),
            width=float(obj["width"]),
            height=float(obj["height"]),
        )


@dataclass(frozen=True)
class CircleSelection:
    """Final position of the zoom lens: a circle in image pixels."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"selection radius must be positive, got {self.radius}")

    def area(self) -> float:
        return math.pi * self.radius * self.radius

    def to_json(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "radius": self.radius}

    @classmethod
    def from_json(cls, obj: dict) -> "CircleSelection":
        return cls(cx=float(obj["cx"]), cy=float(obj["cy"]), radius=float(obj["radius"]))


@dataclass(frozen=True)
class StratumKey:
    """One (distance, visibility) cell of the aerial-difficulty grid."""

    distance_m: int
    visibility_pct: int

    def __post_init__(self) -> None:
        if self.distance_m not in DISTANCES_M:
            raise ValueError(f"distance_m must be one of {DISTANCES_M}, got {self.distance_m}")
        if self.visibility_pct not in VISIBILITIES_PCT:
            raise ValueError(
                f"visibility_pct must be one of {VISIBILITIES_PCT}, got {self.visibility_pct}"
            )


def all_strata() -> list[StratumKey]:
    """Every (distance, visibility) cell, row-major by distance then visibility."""
    return [StratumKey(d, v) for d in DISTANCES_M for v in VISIBILITIES_PCT]


@dataclass(frozen=True)
class Annotation:
    """One ground-truth person box with its aerial capture metadata."""

    image_id: str
    actor_id: int
    distance_m: int
    visibility_pct: int
    gt_box: Box
    image_width_px: int
    image_height_px: int

    def __post_init__(self) -> None:
        if not (1 <= self.actor_id <= 100):
            raise ValueError(f"actor_id must be in 1..100, got {self.actor_id}")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise ValueError("image dimensions must be positive")
        # enum validation shared with StratumKey
        StratumKey(self.distance_m, self.visibility_pct)
        b = self.gt_box
        if b.x_min < 0 or b.y_min < 0 or b.x_max > self.image_width_px or b.y_max > self.image_height_px:
            raise ValueError(
                f"gt_box {b} exceeds image bounds "
                f"{self.image_width_px}x{self.image_height_px} for {self.image_id}"
            )

    @property
    def stratum(self) -> StratumKey:
        return StratumKey(self.distance_m, self.visibility_pct)

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "actor_id": self.actor_id,
            "distance_m": self.distance_m,
            "visibility_pct": self.visibility_pct,
            "gt_box": self.gt_box.to_json(),
            "image_width_px": self.image_width_px,
            "image_height_px": self.image_height_px,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Annotation":
        return cls(
            image_id=str(obj["image_id"]),
            actor_id=int(obj["actor_id"]),
            distance_m=int(obj["distance_m"]),
            visibility_pct=int(obj["visibility_pct"]),
            gt_box=Box.from_json(obj["gt_box"]),
            image_width_px=int(obj["image_width_px"]),
            image_height_px=int(obj["image_height_px"]),
        )


def box_center(box: Box) -> tuple[float, float]:
    """Center of a box: (x_min + width/2, y_min + height/2)."""
    return box.center()


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 iff identical."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    return inter / union


def _arc_or_chord_area(r: float, ax: float, ay: float, bx: float, by: float, inside: bool) -> float:
    """Signed area swept between the circle center and a boundary piece a->b.

    ``inside`` selects the chord (triangle) form; otherwise the piece lies
    outside the disk and contributes a circular sector.
    """
    if inside:
        return 0.5 * (ax * by - bx * ay)
    theta = math.atan2(by, bx) - math.atan2(ay, ax)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return 0.5 * r * r * theta


def _edge_disk_area(r: float, x1: float, y1: float, x2: float, y2: float) -> float:
    """Signed area of disk(origin, r) ∩ triangle(origin, p1, p2).

    The segment p1->p2 is split at its circle crossings; sub-segments inside
    the disk contribute chord triangles, those outside contribute sectors.
    """
    dx = x2 - x1
    dy = y2 - y1
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return 0.0
    b = x1 * dx + y1 * dy
    c = x1 * x1 + y1 * y1 - r * r
    disc = b * b - seg2 * c
    cuts = [0.0, 1.0]
    if disc > 0.0:
        sq = math.sqrt(disc)
        for t in ((-b - sq) / seg2, (-b + sq) / seg2):
            if 0.0 < t < 1.0:
                cuts.append(t)
    cuts.sort()
    area = 0.0
    for ta, tb in zip(cuts, cuts[1:]):
        if tb <= ta:
            continue
        tm = 0.5 * (ta + tb)
        mx = x1 + tm * dx
        my = y1 + tm * dy
        area += _arc_or_chord_area(
            r,
            x1 + ta * dx,
            y1 + ta * dy,
            x1 + tb * dx,
            y1 + tb * dy,
            inside=mx * mx + my * my < r * r,
        )
    return area


def circle_rect_intersection_area(sel: CircleSelection, box: Box) -> float:
    """Exact area of the overlap between a circular selection and a box.

    Walks the rectangle boundary and accumulates per-edge chord/sector
    contributions (Green's theorem); the magnitude of the signed total is the
    intersection area, exact up to float rounding.
    """
    r = sel.radius
    corners = (
        (box.x_min - sel.cx, box.y_min - sel.cy),
        (box.x_max - sel.cx, box.y_min - sel.cy),
        (box.x_max - sel.cx, box.y_max - sel.cy),
        (box.x_min - sel.cx, box.y_max - sel.cy),
    )
    total = 0.0
    for (x1, y1), (x2, y2) in zip(corners, corners[1:] + corners[:1]):
        total += _edge_disk_area(r, x1, y1, x2, y2)
    return abs(total)


def circle_box_iou(sel: CircleSelection, box: Box) -> float:
    """|circle ∩ box| / |circle ∪ box|."""
    inter = circle_rect_intersection_area(sel, box)
    union = sel.area() + box.area() - inter
    if union <= 0.0:
        return 0.0
    iou = inter / union
    # guard against float dust just outside [0, 1]
    return min(max(iou, 0.0), 1.0)


def read_annotations(path: str) -> list[Annotation]:
    """Read a JSON-lines annotation file, one record per line."""
    out: list[Annotation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Annotation.from_json(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad annotation line: {exc}") from exc
    return out


def write_annotations(path: str, annotations: Iterable[Annotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann.to_json()) + "\n")


def index_annotations(annotations: Iterable[Annotation]) -> dict[str, Annotation]:
    """Index annotations by image_id, rejecting duplicates."""
    index: dict[str, Annotation] = {}
    for ann in annotations:
        if ann.image_id in index:
            raise ValueError(f"duplicate annotation for image_id {ann.image_id}")
        index[ann.image_id] = ann
    return index


def iter_jsonl(path: str) -> Iterator[tuple[int, str]]:
    """Yield (line_no, raw_line) for non-blank lines of a JSONL file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if stripped:
                yield line_no, stripped

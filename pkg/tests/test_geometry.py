import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skysearch.geometry import (
    Annotation,
    Box,
    CircleSelection,
    StratumKey,
    all_strata,
    box_center,
    box_iou,
    circle_box_iou,
    circle_rect_intersection_area,
)


def supersampled_circle_box_iou(sel: CircleSelection, box: Box, n: int = 1000) -> float:
    """Brute-force IoU oracle: uniform n x n grid over the union's bounding box.

    Independent of the analytic path: classifies grid cell centers against
    both shapes and estimates areas by counting.
    """
    x_lo = min(sel.cx - sel.radius, box.x_min)
    x_hi = max(sel.cx + sel.radius, box.x_max)
    y_lo = min(sel.cy - sel.radius, box.y_min)
    y_hi = max(sel.cy + sel.radius, box.y_max)
    xs = np.linspace(x_lo, x_hi, n, endpoint=False) + (x_hi - x_lo) / (2 * n)
    ys = np.linspace(y_lo, y_hi, n, endpoint=False) + (y_hi - y_lo) / (2 * n)
    gx, gy = np.meshgrid(xs, ys)
    in_circle = (gx - sel.cx) ** 2 + (gy - sel.cy) ** 2 <= sel.radius**2
    in_box = (gx >= box.x_min) & (gx <= box.x_max) & (gy >= box.y_min) & (gy <= box.y_max)
    inter = np.count_nonzero(in_circle & in_box)
    union = np.count_nonzero(in_circle | in_box)
    if union == 0:
        return 0.0
    return inter / union


def random_circle_box_case(rng: random.Random) -> tuple[CircleSelection, Box]:
    sel = CircleSelection(
        cx=rng.uniform(-20, 120),
        cy=rng.uniform(-20, 120),
        radius=rng.uniform(0.5, 60),
    )
    box = Box(
        x_min=rng.uniform(-20, 100),
        y_min=rng.uniform(-20, 100),
        width=rng.uniform(0.5, 80),
        height=rng.uniform(0.5, 80),
    )
    return sel, box


class TestBoxBasics:
    def test_center_symmetric(self):
        assert box_center(Box(0, 0, 10, 10)) == (5, 5)

    def test_center_offset(self):
        assert box_center(Box(2, 4, 6, 8)) == (5, 8)

    def test_center_unit(self):
        assert box_center(Box(0, 0, 1, 1)) == (0.5, 0.5)

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            Box(0, 0, 0, 5)
        with pytest.raises(ValueError):
            Box(0, 0, 5, -1)


class TestBoxIou:
    def test_identical(self):
        b = Box(3, 4, 10, 12)
        assert box_iou(b, b) == 1.0

    def test_disjoint(self):
        assert box_iou(Box(0, 0, 1, 1), Box(5, 5, 1, 1)) == 0.0

    def test_half_overlap(self):
        # inter = 2, union = 6
        assert box_iou(Box(0, 0, 2, 2), Box(1, 0, 2, 2)) == pytest.approx(1 / 3)

    def test_touching_edges_are_disjoint(self):
        assert box_iou(Box(0, 0, 1, 1), Box(1, 0, 1, 1)) == 0.0


class TestCircleBoxIou:
    def test_disjoint(self):
        assert circle_box_iou(CircleSelection(0, 0, 1), Box(10, 10, 1, 1)) == 0.0

    def test_inscribed_circle(self):
        # circle radius r centered in a square of side 2r: inter = pi r^2, union = 4 r^2
        for r in (1.0, 3.5, 60.0):
            sel = CircleSelection(10, 10, r)
            box = Box(10 - r, 10 - r, 2 * r, 2 * r)
            assert circle_box_iou(sel, box) == pytest.approx(math.pi / 4, abs=1e-9)

    def test_box_inside_circle(self):
        # box area 100 inside circle area 100*pi
        sel = CircleSelection(0, 0, 10)
        box = Box(-5, -5, 10, 10)
        assert circle_box_iou(sel, box) == pytest.approx(100 / (100 * math.pi), abs=1e-9)

    def test_circle_inside_box(self):
        sel = CircleSelection(50, 50, 2)
        box = Box(0, 0, 100, 100)
        expected = sel.area() / box.area()
        assert circle_box_iou(sel, box) == pytest.approx(expected, abs=1e-12)

    def test_half_disk(self):
        # box covers exactly the left half-plane portion of the disk
        sel = CircleSelection(0, 0, 4)
        box = Box(-4, -4, 4, 8)
        inter = circle_rect_intersection_area(sel, box)
        assert inter == pytest.approx(math.pi * 16 / 2, abs=1e-9)

    def test_translation_invariance(self):
        rng = random.Random(7)
        for _ in range(20):
            sel, box = random_circle_box_case(rng)
            tx, ty = rng.uniform(-500, 500), rng.uniform(-500, 500)
            moved_sel = CircleSelection(sel.cx + tx, sel.cy + ty, sel.radius)
            moved_box = Box(box.x_min + tx, box.y_min + ty, box.width, box.height)
            assert circle_box_iou(moved_sel, moved_box) == pytest.approx(
                circle_box_iou(sel, box), abs=1e-9
            )

    def test_matches_supersampling_oracle(self):
        rng = random.Random(20240812)
        for _ in range(100):
            sel, box = random_circle_box_case(rng)
            exact = circle_box_iou(sel, box)
            approx = supersampled_circle_box_iou(sel, box)
            assert exact == pytest.approx(approx, abs=1e-3)
            assert 0.0 <= exact <= 1.0


class TestAnnotation:
    def test_round_trip_json(self):
        ann = Annotation(
            image_id="img_001",
            actor_id=42,
            distance_m=30,
            visibility_pct=60,
            gt_box=Box(10, 20, 30, 40),
            image_width_px=640,
            image_height_px=480,
        )
        assert Annotation.from_json(ann.to_json()) == ann

    def test_box_outside_image_rejected(self):
        with pytest.raises(ValueError):
            Annotation("x", 1, 10, 100, Box(600, 0, 100, 10), 640, 480)

    def test_bad_enums_rejected(self):
        with pytest.raises(ValueError):
            Annotation("x", 1, 15, 100, Box(0, 0, 10, 10), 640, 480)
        with pytest.raises(ValueError):
            Annotation("x", 1, 10, 95, Box(0, 0, 10, 10), 640, 480)
        with pytest.raises(ValueError):
            StratumKey(25, 50)

    def test_all_strata_has_50_cells(self):
        strata = all_strata()
        assert len(strata) == 50
        assert len(set(strata)) == 50


@settings(max_examples=60, deadline=None)
@given(
    cx=st.floats(-50, 150),
    cy=st.floats(-50, 150),
    r=st.floats(0.5, 50),
    bx=st.floats(-50, 100),
    by=st.floats(-50, 100),
    bw=st.floats(0.5, 60),
    bh=st.floats(0.5, 60),
)
def test_circle_box_iou_bounds_and_containment(cx, cy, r, bx, by, bw, bh):
    sel = CircleSelection(cx, cy, r)
    box = Box(bx, by, bw, bh)
    iou = circle_box_iou(sel, box)
    assert 0.0 <= iou <= 1.0
    inter = circle_rect_intersection_area(sel, box)
    assert inter <= min(sel.area(), box.area()) + 1e-9
    # containment identities
    if (
        box.x_min >= cx - r / math.sqrt(2)
        and box.x_max <= cx + r / math.sqrt(2)
        and box.y_min >= cy - r / math.sqrt(2)
        and box.y_max <= cy + r / math.sqrt(2)
    ):
        # box within the inscribed square, hence within the circle
        assert iou == pytest.approx(box.area() / sel.area(), rel=1e-9)

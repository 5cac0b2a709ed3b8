import random

from skysearch.behavior import BehavioralRecord, TrailEvent
from skysearch.geometry import Annotation, Box, CircleSelection


def make_annotation(
    image_id="img0",
    actor_id=1,
    distance_m=10,
    visibility_pct=100,
    gt_box=None,
    width=640,
    height=480,
) -> Annotation:
    return Annotation(
        image_id=image_id,
        actor_id=actor_id,
        distance_m=distance_m,
        visibility_pct=visibility_pct,
        gt_box=gt_box or Box(100, 100, 40, 40),
        image_width_px=width,
        image_height_px=height,
    )


def make_record(
    image_id="img0",
    session_id="s0",
    worker_id="w0",
    is_control=False,
    final=None,
    events=None,
    response_time_ms=None,
    iou=None,
    stratum=None,
) -> BehavioralRecord:
    """Build a record whose trail ends at ``final`` (default: over (120, 120))."""
    final = final or CircleSelection(120, 120, 30)
    if events is None:
        events = (
            TrailEvent(0, 10.0, 10.0, 1, 60.0),
            TrailEvent(800, 50.0, 70.0, 1, 60.0),
            TrailEvent(2000, final.cx, final.cy, 2, final.radius),
        )
    rt = response_time_ms if response_time_ms is not None else events[-1].t_ms + 150
    return BehavioralRecord(
        session_id=session_id,
        worker_id=worker_id,
        image_id=image_id,
        is_control=is_control,
        events=tuple(events),
        final_selection=final,
        response_time_ms=rt,
        iou=iou,
        stratum=stratum,
    )


def random_trail(rng: random.Random, n_events: int, width=640, height=480):
    """A random monotone lens trail inside the image."""
    t = 0
    events = []
    for _ in range(n_events):
        t += rng.randint(30, 400)
        events.append(
            TrailEvent(
                t_ms=t,
                x=rng.uniform(0, width),
                y=rng.uniform(0, height),
                zoom_level=rng.choice((1, 2, 4)),
                lens_radius_px=rng.choice((60.0, 30.0, 15.0)),
            )
        )
    return tuple(events)

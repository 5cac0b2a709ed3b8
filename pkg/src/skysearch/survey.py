"""Survey assembly from annotation pools.

Every survey holds 13 questions: 10 positives and 3 easy controls. The
positives must come from pairwise-distinct actors, carry pairwise-distinct
visibility labels (hence all ten levels exactly once), and cover each capture
distance exactly twice. Controls are drawn from the near-distance,
high-visibility pool. Images are drawn without replacement across surveys
until a pool runs out, after which reuse is allowed and flagged.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .geometry import DISTANCES_M, VISIBILITIES_PCT, Annotation, Box, StratumKey

log = logging.getLogger(__name__)

QUESTIONS_PER_SURVEY = 13
CONTROLS_PER_SURVEY = 3
POSITIVES_PER_SURVEY = 10
POSITIVES_PER_DISTANCE = 2

CONTROL_DISTANCE_M = 10
CONTROL_VISIBILITIES = (90, 100)

SURVEY_STATUSES = ("available", "assigned", "submitted", "accepted", "rejected")


class InfeasiblePool(ValueError):
    pass


@dataclass(frozen=True)
class ImagePool:
    positives: tuple[Annotation, ...]
    controls: tuple[Annotation, ...]

    def __post_init__(self) -> None:
        for ann in self.controls:
            if ann.distance_m != CONTROL_DISTANCE_M or ann.visibility_pct not in CONTROL_VISIBILITIES:
                raise ValueError(
                    f"control {ann.image_id} must be {CONTROL_DISTANCE_M} m with visibility in "
                    f"{CONTROL_VISIBILITIES}, got ({ann.distance_m}, {ann.visibility_pct})"
                )


@dataclass(frozen=True)
class Question:
    image_id: str
    is_control: bool


@dataclass
class Survey:
    survey_id: str
    questions: tuple[Question, ...]
    status: str = "available"
    reused_image_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.status not in SURVEY_STATUSES:
            raise ValueError(f"bad survey status {self.status!r}")


def check_survey(survey: Survey, annotations: dict[str, Annotation]) -> None:
    """Raise ValueError unless the survey satisfies every composition rule."""
    qs = survey.questions
    if len(qs) != QUESTIONS_PER_SURVEY:
        raise ValueError(f"{survey.survey_id}: {len(qs)} questions, want {QUESTIONS_PER_SURVEY}")
    controls = [q for q in qs if q.is_control]
    positives = [q for q in qs if not q.is_control]
    if len(controls) != CONTROLS_PER_SURVEY:
        raise ValueError(f"{survey.survey_id}: {len(controls)} controls, want {CONTROLS_PER_SURVEY}")
    if len(set(q.image_id for q in qs)) != QUESTIONS_PER_SURVEY:
        raise ValueError(f"{survey.survey_id}: duplicate image within survey")
    for q in controls:
        ann = annotations[q.image_id]
        if ann.distance_m != CONTROL_DISTANCE_M or ann.visibility_pct not in CONTROL_VISIBILITIES:
            raise ValueError(f"{survey.survey_id}: control {q.image_id} not an easy image")
    anns = [annotations[q.image_id] for q in positives]
    actors = [a.actor_id for a in anns]
    if len(set(actors)) != POSITIVES_PER_SURVEY:
        raise ValueError(f"{survey.survey_id}: positive actors not pairwise distinct")
    visibilities = [a.visibility_pct for a in anns]
    if len(set(visibilities)) != POSITIVES_PER_SURVEY:
        raise ValueError(f"{survey.survey_id}: positive visibility labels not pairwise distinct")
    per_distance = {d: 0 for d in DISTANCES_M}
    for a in anns:
        per_distance[a.distance_m] += 1
    if any(c != POSITIVES_PER_DISTANCE for c in per_distance.values()):
        raise ValueError(f"{survey.survey_id}: distance counts {per_distance}")


class _PositivePicker:
    """Backtracking pick of 10 positives: 2 per distance, distinct actors and
    visibility labels; candidates preferred unused-first in seeded order."""

    MAX_NODES = 1_000_000

    def __init__(self, by_distance: dict[int, list[Annotation]], used: set[str], rng: random.Random):
        self.rng = rng
        self.by_distance = {}
        self.unused_prefix = {}
        for d, anns in by_distance.items():
            ranked = list(anns)
            self.rng.shuffle(ranked)
            ranked.sort(key=lambda a: a.image_id in used)  # stable: unused first
            self.by_distance[d] = ranked
            self.unused_prefix[d] = sum(1 for a in ranked if a.image_id not in used)
        self.nodes = 0
        # most-constrained distance first delays forced reuse near exhaustion
        self.distance_order = sorted(DISTANCES_M, key=lambda d: (self.unused_prefix.get(d, 0), d))

    def pick(self) -> list[Annotation] | None:
        return self._solve(0, [], set(), set())

    def _pairs(self, distance: int):
        """Candidate pairs: both fresh first, then mixed, then both reused."""
        candidates = self.by_distance.get(distance, [])
        u = self.unused_prefix.get(distance, 0)
        n = len(candidates)
        for i in range(u):  # both unused
            for j in range(i + 1, u):
                yield candidates[i], candidates[j]
        for i in range(u):  # one unused, one reused
            for j in range(u, n):
                yield candidates[i], candidates[j]
        for i in range(u, n):  # both reused
            for j in range(i + 1, n):
                yield candidates[i], candidates[j]

    def _solve(self, d_idx: int, chosen, actors: set, vis: set):
        if d_idx == len(self.distance_order):
            return list(chosen)
        for a, b in self._pairs(self.distance_order[d_idx]):
            self.nodes += 1
            if self.nodes > self.MAX_NODES:
                return None
            if (
                a.actor_id in actors
                or a.visibility_pct in vis
                or b.actor_id in actors
                or b.visibility_pct in vis
                or b.actor_id == a.actor_id
                or b.visibility_pct == a.visibility_pct
            ):
                continue
            chosen.extend((a, b))
            actors.update((a.actor_id, b.actor_id))
            vis.update((a.visibility_pct, b.visibility_pct))
            result = self._solve(d_idx + 1, chosen, actors, vis)
            if result is not None:
                return result
            chosen.pop()
            chosen.pop()
            actors.difference_update((a.actor_id, b.actor_id))
            vis.difference_update((a.visibility_pct, b.visibility_pct))
        return None


def assemble_surveys(pool: ImagePool, n_surveys: int, seed: int) -> list[Survey]:
    """Assemble surveys deterministically from the pool.

    Raises InfeasiblePool when the composition rules cannot be satisfied.
    """
    if n_surveys <= 0:
        raise ValueError("n_surveys must be positive")
    if len(pool.controls) < CONTROLS_PER_SURVEY:
        raise InfeasiblePool(f"need at least {CONTROLS_PER_SURVEY} controls")
    rng = random.Random(seed)
    by_distance: dict[int, list[Annotation]] = {d: [] for d in DISTANCES_M}
    for ann in pool.positives:
        by_distance.setdefault(ann.distance_m, []).append(ann)

    used_positives: set[str] = set()
    used_controls: set[str] = set()
    surveys: list[Survey] = []
    for i in range(n_surveys):
        picker = _PositivePicker(by_distance, used_positives, rng)
        picked = picker.pick()
        if picked is None:
            raise InfeasiblePool(
                "cannot satisfy the 2-per-distance / distinct-actor / "
                "distinct-visibility rules with this positive pool"
            )
        controls = list(pool.controls)
        rng.shuffle(controls)
        controls.sort(key=lambda a: a.image_id in used_controls)
        picked_controls = controls[:CONTROLS_PER_SURVEY]

        reused = frozenset(
            [a.image_id for a in picked if a.image_id in used_positives]
            + [a.image_id for a in picked_controls if a.image_id in used_controls]
        )
        if reused:
            log.warning("survey %04d reuses %d images", i, len(reused))
        used_positives.update(a.image_id for a in picked)
        used_controls.update(a.image_id for a in picked_controls)

        questions = [Question(a.image_id, False) for a in picked] + [
            Question(a.image_id, True) for a in picked_controls
        ]
        rng.shuffle(questions)
        surveys.append(
            Survey(
                survey_id=f"survey_{i:04d}",
                questions=tuple(questions),
                reused_image_ids=reused,
            )
        )
    return surveys


def split_pool(annotations: list[Annotation]) -> ImagePool:
    """Partition an annotation list into positives and controls.

    Positives keep one image per (actor, distance, visibility) combination;
    leftover near-distance high-visibility images become controls.
    """
    positives: list[Annotation] = []
    seen: set[tuple[int, StratumKey]] = set()
    leftovers: list[Annotation] = []
    for ann in annotations:
        key = (ann.actor_id, ann.stratum)
        if key in seen:
            leftovers.append(ann)
        else:
            seen.add(key)
            positives.append(ann)
    controls = [
        a
        for a in leftovers
        if a.distance_m == CONTROL_DISTANCE_M and a.visibility_pct in CONTROL_VISIBILITIES
    ]
    return ImagePool(positives=tuple(positives), controls=tuple(controls))


def make_demo_pool(
    n_positives: int = 4883,
    n_controls: int = 768,
    seed: int = 0,
    image_width_px: int = 1920,
    image_height_px: int = 1080,
) -> ImagePool:
    """Synthetic pool with the shape of the real collection: roughly one image
    per (actor, stratum) cell minus dropouts, plus easy control images."""
    rng = random.Random(seed)
    combos = [
        (actor, StratumKey(d, v))
        for actor in range(1, 101)
        for d in DISTANCES_M
        for v in VISIBILITIES_PCT
    ]
    if n_positives > len(combos):
        raise ValueError(f"at most {len(combos)} positives available")
    rng.shuffle(combos)

    def ann(image_id: str, actor: int, key: StratumKey) -> Annotation:
        w = rng.uniform(20, 120)
        h = rng.uniform(40, 160)
        x = rng.uniform(0, image_width_px - w)
        y = rng.uniform(0, image_height_px - h)
        return Annotation(
            image_id=image_id,
            actor_id=actor,
            distance_m=key.distance_m,
            visibility_pct=key.visibility_pct,
            gt_box=Box(x, y, w, h),
            image_width_px=image_width_px,
            image_height_px=image_height_px,
        )

    positives = tuple(
        ann(f"pos_{i:05d}", actor, key) for i, (actor, key) in enumerate(combos[:n_positives])
    )
    controls = tuple(
        ann(
            f"ctl_{i:05d}",
            rng.randint(1, 100),
            StratumKey(CONTROL_DISTANCE_M, rng.choice(CONTROL_VISIBILITIES)),
        )
        for i in range(n_controls)
    )
    return ImagePool(positives=positives, controls=controls)

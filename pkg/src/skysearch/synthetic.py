"""Synthetic single-person scenes for the desk-scale regression harness.

Each scene is a ground-truth box inside a fixed 1000x1000 frame plus a noisy
feature vector observing it. Apparent person size shrinks with distance, and
feature noise grows with distance and occlusion, so the (distance,
visibility) grid spans easy to near-impossible localization, mirroring the
difficulty ordering of the aerial search task.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .geometry import Box, StratumKey, all_strata

FRAME_PX = 1000.0

# apparent person scale by capture distance (px at 1000px frame width)
_PERSON_SCALE_PX = {10: 150.0, 30: 100.0, 50: 75.0, 70: 60.0, 90: 50.0}

DEFAULT_BASE_NOISE_PX = 0.6
DEFAULT_BEHAVIORAL_FRACTION = 0.12
DEFAULT_DECOY_FRACTION = 0.2
N_FEATURES = 7

# feature normalizers: positions relative to the frame, sizes relative to a
# typical person scale, keeping all feature magnitudes comparable for the
# fixed-step optimizer
_POS_SCALE_PX = FRAME_PX
_DIM_SCALE_PX = 50.0


@dataclass(frozen=True)
class SyntheticScene:
    scene_id: str
    stratum: StratumKey
    gt_box: Box
    feature_vec: tuple[float, ...]
    has_behavioral_data: bool = False


def noise_std_px(stratum: StratumKey, base_noise_px: float) -> float:
    """Feature noise grows linearly with distance and inverse visibility."""
    return base_noise_px * (stratum.distance_m / 10.0) * (100.0 / stratum.visibility_pct)


def decoy_probability(stratum: StratumKey, decoy_fraction: float) -> float:
    """Chance that background clutter hijacks the apparent person location.

    Grows with capture distance (small targets get confused with clutter),
    reaching ``decoy_fraction`` at the farthest distance.
    """
    return min(1.0, decoy_fraction * (stratum.distance_m / 10.0) / 9.0)


def _make_scene(
    rng: random.Random,
    scene_id: str,
    stratum: StratumKey,
    base_noise_px: float,
    decoy_fraction: float,
    has_behavioral_data: bool,
) -> SyntheticScene:
    scale = _PERSON_SCALE_PX[stratum.distance_m]
    w = scale * rng.uniform(0.7, 1.3)
    h = scale * rng.uniform(0.7, 1.3)
    cx = rng.uniform(scale, FRAME_PX - scale)
    cy = rng.uniform(scale, FRAME_PX - scale)
    gt = Box(cx - w / 2.0, cy - h / 2.0, w, h)

    std = noise_std_px(stratum, base_noise_px)
    obs_cx = cx + rng.gauss(0.0, std)
    obs_cy = cy + rng.gauss(0.0, std)
    if rng.random() < decoy_probability(stratum, decoy_fraction):
        # apparent location jumps to a clutter object near the person
        angle = rng.uniform(0.0, 2.0 * math.pi)
        dist = rng.uniform(100.0, 300.0)
        obs_cx = min(max(cx + dist * math.cos(angle), 0.0), FRAME_PX)
        obs_cy = min(max(cy + dist * math.sin(angle), 0.0), FRAME_PX)
    obs_w = w + rng.gauss(0.0, 0.5 * std)
    obs_h = h + rng.gauss(0.0, 0.5 * std)
    # dims of an unrelated background object; carries no signal
    distractor_w = rng.uniform(5.0, 150.0)
    distractor_h = rng.uniform(5.0, 150.0)
    features = (
        obs_cx / _POS_SCALE_PX,
        obs_cy / _POS_SCALE_PX,
        obs_w / _DIM_SCALE_PX,
        obs_h / _DIM_SCALE_PX,
        distractor_w / _DIM_SCALE_PX,
        distractor_h / _DIM_SCALE_PX,
        1.0,
    )
    return SyntheticScene(
        scene_id=scene_id,
        stratum=stratum,
        gt_box=gt,
        feature_vec=features,
        has_behavioral_data=has_behavioral_data,
    )


def generate_dataset(
    n_per_stratum: int,
    seed: int,
    base_noise_px: float = DEFAULT_BASE_NOISE_PX,
    behavioral_fraction: float = DEFAULT_BEHAVIORAL_FRACTION,
    decoy_fraction: float = DEFAULT_DECOY_FRACTION,
) -> tuple[list[SyntheticScene], list[SyntheticScene], list[SyntheticScene]]:
    """Deterministic 80/10/10 train/val/test scene lists.

    Scenes are split by scene group (index modulo 10 within each stratum) so
    the three sets never share a group. Behavioral coverage is assigned to a
    random fraction of training scenes only, echoing the sparse survey
    coverage of the full image corpus.
    """
    if n_per_stratum < 10:
        raise ValueError("n_per_stratum must be at least 10 for an 80/10/10 split")
    rng = random.Random(seed)
    train: list[SyntheticScene] = []
    val: list[SyntheticScene] = []
    test: list[SyntheticScene] = []
    for stratum in all_strata():
        for i in range(n_per_stratum):
            group = i % 10
            is_train = group < 8
            scene = _make_scene(
                rng,
                scene_id=f"d{stratum.distance_m}_v{stratum.visibility_pct}_{i}",
                stratum=stratum,
                base_noise_px=base_noise_px,
                decoy_fraction=decoy_fraction,
                has_behavioral_data=is_train and rng.random() < behavioral_fraction,
            )
            if is_train:
                train.append(scene)
            elif group == 8:
                val.append(scene)
            else:
                test.append(scene)
    return train, val, test


def features_matrix(scenes: list[SyntheticScene]) -> np.ndarray:
    return np.array([s.feature_vec for s in scenes], dtype=float)


def scene_to_json(scene: SyntheticScene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "distance_m": scene.stratum.distance_m,
        "visibility_pct": scene.stratum.visibility_pct,
        "gt_box": scene.gt_box.to_json(),
        "feature_vec": list(scene.feature_vec),
        "has_behavioral_data": scene.has_behavioral_data,
    }


def scene_from_json(obj: dict) -> SyntheticScene:
    return SyntheticScene(
        scene_id=str(obj["scene_id"]),
        stratum=StratumKey(int(obj["distance_m"]), int(obj["visibility_pct"])),
        gt_box=Box.from_json(obj["gt_box"]),
        feature_vec=tuple(float(v) for v in obj["feature_vec"]),
        has_behavioral_data=bool(obj["has_behavioral_data"]),
    )


def write_scenes(path: str, scenes: list[SyntheticScene]) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_json(scene)) + "\n")


def read_scenes(path: str) -> list[SyntheticScene]:
    import json

    from .geometry import iter_jsonl

    return [scene_from_json(json.loads(line)) for _, line in iter_jsonl(path)]

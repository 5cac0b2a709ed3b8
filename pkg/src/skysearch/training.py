"""Mini-batch gradient descent for the synthetic box regressor.

The regressor is a single linear map from scene features to the four box
parameters in frame-normalized units. Both training modes run the identical
loss code: baseline forces the penalty to zero by dropping the behavioral
flag, psych keeps it. Fixed step size with gradient-norm clipping; no
adaptive state, so runs are bit-reproducible from the seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Box
from .loss import LossSample, PsychLossParams, human_loss, human_loss_grad
from .synthetic import FRAME_PX, N_FEATURES, SyntheticScene

LOSS_MODES = ("baseline", "psych")

MIN_BOX_DIM_PX = 1.0


class DivergedLoss(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 7e-4
    batch_size: int = 16
    clip_norm: float = 10.0


@dataclass
class Regressor:
    """Linear map feature_vec -> (x_min, y_min, width, height) / frame."""

    weights: np.ndarray  # (4, n_features)
    bias: np.ndarray  # (4,)

    @classmethod
    def initial(cls, n_features: int = N_FEATURES) -> "Regressor":
        # start at a frame-centered prior box
        bias = np.array([0.48, 0.48, 0.04, 0.04], dtype=float)
        return cls(weights=np.zeros((4, n_features), dtype=float), bias=bias)

    def predict_params(self, features: np.ndarray) -> np.ndarray:
        return self.weights @ features + self.bias

    def predict_box(self, features: np.ndarray) -> Box:
        p = self.predict_params(features) * FRAME_PX
        return Box(p[0], p[1], max(p[2], MIN_BOX_DIM_PX), max(p[3], MIN_BOX_DIM_PX))

    def copy(self) -> "Regressor":
        return Regressor(weights=self.weights.copy(), bias=self.bias.copy())

    def save(self, path: str) -> None:
        np.savez(path, weights=self.weights, bias=self.bias)

    @classmethod
    def load(cls, path: str) -> "Regressor":
        data = np.load(path)
        return cls(weights=data["weights"], bias=data["bias"])


@dataclass(frozen=True)
class TrainResult:
    regressor: Regressor
    loss_curve: tuple[float, ...]  # mean train loss per epoch
    mode: str
    seed: int
    config: TrainConfig = field(compare=False, default_factory=TrainConfig)


def _sample_for(scene: SyntheticScene, box: Box, mode: str) -> LossSample:
    has_data = mode == "psych" and scene.has_behavioral_data
    return LossSample(
        pred_box=box,
        gt_box=scene.gt_box,
        stratum=scene.stratum,
        has_behavioral_data=has_data,
    )


def _loss_and_grad(
    regressor: Regressor, scene: SyntheticScene, mode: str, params: PsychLossParams
) -> tuple[float, np.ndarray, np.ndarray]:
    features = np.asarray(scene.feature_vec, dtype=float)
    raw = regressor.predict_params(features) * FRAME_PX
    box = Box(raw[0], raw[1], max(raw[2], MIN_BOX_DIM_PX), max(raw[3], MIN_BOX_DIM_PX))
    sample = _sample_for(scene, box, mode)
    value = human_loss(sample, params)
    g_box = human_loss_grad(sample, params)
    # clamped dims do not propagate gradient
    if raw[2] < MIN_BOX_DIM_PX:
        g_box[2] = 0.0
    if raw[3] < MIN_BOX_DIM_PX:
        g_box[3] = 0.0
    g_params = g_box * FRAME_PX
    return value, g_params, features


def train(
    scenes: list[SyntheticScene],
    loss_mode: str,
    params: PsychLossParams,
    epochs: int = 10,
    seed: int = 0,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Train the regressor with the selected loss mode.

    Deterministic for a given (scenes, mode, params, epochs, seed, config);
    raises DivergedLoss on any non-finite loss or gradient.
    """
    if loss_mode not in LOSS_MODES:
        raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {loss_mode!r}")
    if not scenes:
        raise ValueError("training needs a non-empty scene list")
    cfg = config or TrainConfig()
    if config is None and epochs != cfg.epochs:
        cfg = replace(cfg, epochs=epochs)
    rng = random.Random(seed)
    reg = Regressor.initial(len(scenes[0].feature_vec))
    order = list(range(len(scenes)))
    curve: list[float] = []
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_w = np.zeros_like(reg.weights)
            grad_b = np.zeros(4, dtype=float)
            for idx in batch:
                value, g_params, features = _loss_and_grad(reg, scenes[idx], loss_mode, params)
                if not np.isfinite(value) or not np.isfinite(g_params).all():
                    raise DivergedLoss(f"non-finite loss at scene {scenes[idx].scene_id}")
                epoch_loss += value
                grad_w += np.outer(g_params, features)
                grad_b += g_params
            grad_w /= len(batch)
            grad_b /= len(batch)
            norm = float(np.sqrt((grad_w**2).sum() + (grad_b**2).sum()))
            if not np.isfinite(norm):
                raise DivergedLoss("non-finite gradient norm")
            if norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                grad_w *= scale
                grad_b *= scale
            reg.weights -= cfg.learning_rate * grad_w
            reg.bias -= cfg.learning_rate * grad_b
        mean_epoch_loss = epoch_loss / len(order)
        if not np.isfinite(mean_epoch_loss):
            raise DivergedLoss("non-finite epoch loss")
        curve.append(mean_epoch_loss)
    return TrainResult(regressor=reg, loss_curve=tuple(curve), mode=loss_mode, seed=seed, config=cfg)


def mean_loss(
    regressor: Regressor, scenes: list[SyntheticScene], mode: str, params: PsychLossParams
) -> float:
    total = 0.0
    for scene in scenes:
        features = np.asarray(scene.feature_vec, dtype=float)
        box = regressor.predict_box(features)
        total += human_loss(_sample_for(scene, box, mode), params)
    return total / len(scenes)

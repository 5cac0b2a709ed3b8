"""Human-accuracy-guided bounding-box regression loss.

The penalty side builds an unnormalized Gaussian bump around the ground-truth
box center whose spread per (distance, visibility) stratum is 100 minus the
measured human hit rate, interpreted in pixels. The composed loss mixes that
center penalty with a conventional box-parameter loss so that optimization
concentrates on the center location first and box tightness second:

    loss = A * penalty + B * (1 - penalty) * default_loss

Samples without behavioral coverage take penalty 0 and reduce to the weighted
default loss. Analytic gradients over the predicted (x_min, y_min, width,
height) are provided, plus a finite-difference verifier.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .analytics import DEFAULT_SIGMA_MIN, SigmaCell, SigmaTable, load_sigma_csv
from .geometry import Box, StratumKey, all_strata

LOSS_KINDS = ("smooth_l1", "l1", "l2")

DEFAULT_WEIGHT_A = 0.05
DEFAULT_WEIGHT_B = 0.95


class NonPositiveSigma(ValueError):
    pass


class MissingSigmaCell(KeyError):
    def __init__(self, stratum: StratumKey):
        super().__init__(stratum)
        self.stratum = stratum


@dataclass(frozen=True)
class DefaultLossSpec:
    """Which conventional box loss to mix in, and its smooth-L1 transition."""

    kind: str = "smooth_l1"
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.kind == "smooth_l1" and not self.beta > 0:
            raise ValueError("smooth_l1 requires beta > 0")


@dataclass(frozen=True)
class PsychLossParams:
    weight_penalty: float  # A
    weight_default: float  # B
    sigma_table: SigmaTable
    default_loss: DefaultLossSpec = field(default_factory=DefaultLossSpec)

    def __post_init__(self) -> None:
        if self.weight_penalty < 0 or self.weight_default < 0:
            raise ValueError("loss weights must be non-negative")
        if self.weight_penalty + self.weight_default <= 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossSample:
    """One matched prediction: a predicted box against its assigned ground truth."""

    pred_box: Box
    gt_box: Box
    stratum: StratumKey
    has_behavioral_data: bool


def density(dx: float, dy: float, sigma: float) -> float:
    """Unnormalized Gaussian bump of the center offset, in (0, 1]."""
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return math.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))


def _sigma_for(sample: LossSample, sigma_table: SigmaTable) -> float:
    cell = sigma_table.cells.get(sample.stratum)
    if cell is None:
        raise MissingSigmaCell(sample.stratum)
    return cell.sigma


def human_penalty(sample: LossSample, sigma_table: SigmaTable) -> float:
    """1 minus the center-offset density; 0 for samples without behavioral data."""
    if not sample.has_behavioral_data:
        return 0.0
    sigma = _sigma_for(sample, sigma_table)
    px, py = sample.pred_box.center()
    gx, gy = sample.gt_box.center()
    return 1.0 - density(px - gx, py - gy, sigma)


def smooth_l1(e: float, beta: float) -> float:
    """Quadratic inside |e| < beta, linear beyond; C1 at the transition."""
    a = abs(e)
    if a < beta:
        return e * e / (2.0 * beta)
    return a - beta / 2.0


def smooth_l1_deriv(e: float, beta: float) -> float:
    if abs(e) < beta:
        return e / beta
    return math.copysign(1.0, e)


def _box_errors(pred_box: Box, gt_box: Box) -> tuple[list[float], float]:
    """Per-parameter errors normalized by the gt diagonal, keeping the loss
    comparable across target scales."""
    diag = gt_box.diagonal()
    errors = [
        (pred_box.x_min - gt_box.x_min) / diag,
        (pred_box.y_min - gt_box.y_min) / diag,
        (pred_box.width - gt_box.width) / diag,
        (pred_box.height - gt_box.height) / diag,
    ]
    return errors, diag


def default_loss(pred_box: Box, gt_box: Box, spec: DefaultLossSpec) -> float:
    """Conventional elementwise loss over the 4 box parameters, summed."""
    errors, _ = _box_errors(pred_box, gt_box)
    if spec.kind == "smooth_l1":
        return sum(smooth_l1(e, spec.beta) for e in errors)
    if spec.kind == "l1":
        return sum(abs(e) for e in errors)
    return sum(e * e for e in errors)


def _default_loss_deriv(errors: list[float], spec: DefaultLossSpec) -> list[float]:
    if spec.kind == "smooth_l1":
        return [smooth_l1_deriv(e, spec.beta) for e in errors]
    if spec.kind == "l1":
        # subgradient 0 at the kink
        return [math.copysign(1.0, e) if e != 0 else 0.0 for e in errors]
    return [2.0 * e for e in errors]


def human_loss(sample: LossSample, params: PsychLossParams) -> float:
    p = human_penalty(sample, params.sigma_table)
    loss = default_loss(sample.pred_box, sample.gt_box, params.default_loss)
    return params.weight_penalty * p + params.weight_default * (1.0 - p) * loss


def human_loss_grad(sample: LossSample, params: PsychLossParams) -> np.ndarray:
    """Gradient of the composed loss over predicted (x_min, y_min, width, height).

    The center offset depends on x_min and y_min directly and on width and
    height through the half factor of the center coordinates.
    """
    a = params.weight_penalty
    b = params.weight_default
    errors, diag = _box_errors(sample.pred_box, sample.gt_box)
    loss_default = default_loss(sample.pred_box, sample.gt_box, params.default_loss)
    dl = _default_loss_deriv(errors, params.default_loss)

    if not sample.has_behavioral_data:
        return np.array([b * d / diag for d in dl], dtype=float)

    sigma = _sigma_for(sample, params.sigma_table)
    px, py = sample.pred_box.center()
    gx, gy = sample.gt_box.center()
    dx = px - gx
    dy = py - gy
    f = density(dx, dy, sigma)
    # d(density)/d(center offset); penalty p = 1 - f
    fx = -f * dx / (sigma * sigma)
    fy = -f * dy / (sigma * sigma)
    # d(loss)/df = -(A - B * loss_default); chain to params via center offsets
    coeff = b * loss_default - a
    grad = np.empty(4, dtype=float)
    grad[0] = coeff * fx + b * f * dl[0] / diag
    grad[1] = coeff * fy + b * f * dl[1] / diag
    grad[2] = coeff * fx * 0.5 + b * f * dl[2] / diag
    grad[3] = coeff * fy * 0.5 + b * f * dl[3] / diag
    return grad


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass(frozen=True)
class GradCheckCase:
    index: int
    sample: LossSample
    rel_error: float


@dataclass(frozen=True)
class GradCheckReport:
    n_cases: int
    max_rel_error: float
    tolerance: float
    failures: tuple[GradCheckCase, ...]

    @property
    def passed(self) -> bool:
        return not self.failures


def formula_sigma_table(sigma_min: float = DEFAULT_SIGMA_MIN) -> SigmaTable:
    """Synthetic spread table shaped like measured human accuracy.

    Accuracy decays with distance and occlusion (perfect at 10 m fully
    visible, poor at 90 m heavily occluded), so the spread runs from the
    clamp floor up to ~90. Used by the gradient checker and the synthetic
    harness when no measured table is supplied.
    """
    cells = {}
    for key in all_strata():
        acc = (
            100.0
            * (key.visibility_pct / 100.0) ** 0.6
            * (1.0 - 0.5 * (key.distance_m - 10.0) / 80.0)
        )
        cells[key] = SigmaCell(sigma=max(sigma_min, 100.0 - acc), accuracy_pct=None, imputed=False)
    return SigmaTable(sigma_min=sigma_min, cells=cells)


def finite_difference_grad(
    sample: LossSample, params: PsychLossParams, steps: np.ndarray
) -> np.ndarray:
    """Central differences of the loss over the 4 predicted box parameters."""
    base = [
        sample.pred_box.x_min,
        sample.pred_box.y_min,
        sample.pred_box.width,
        sample.pred_box.height,
    ]
    grad = np.empty(4, dtype=float)
    for i in range(4):
        plus = list(base)
        minus = list(base)
        plus[i] += steps[i]
        minus[i] -= steps[i]
        lp = human_loss(
            LossSample(Box(*plus), sample.gt_box, sample.stratum, sample.has_behavioral_data),
            params,
        )
        lm = human_loss(
            LossSample(Box(*minus), sample.gt_box, sample.stratum, sample.has_behavioral_data),
            params,
        )
        grad[i] = (lp - lm) / (2.0 * steps[i])
    return grad


def _fd_steps(sample: LossSample, params: PsychLossParams) -> np.ndarray:
    """Step sizes for central differences: parameter-scaled, capped by the
    density's curvature scale sigma so the quadratic truncation error stays
    far below the check tolerance."""
    base = np.array(
        [
            1e-4 * max(1.0, abs(sample.pred_box.x_min)),
            1e-4 * max(1.0, abs(sample.pred_box.y_min)),
            1e-4 * max(1.0, abs(sample.pred_box.width)),
            1e-4 * max(1.0, abs(sample.pred_box.height)),
        ]
    )
    if sample.has_behavioral_data:
        sigma = _sigma_for(sample, params.sigma_table)
        base = np.minimum(base, 2e-4 * sigma)
    return base


def _random_case(rng: random.Random, sigma_table: SigmaTable) -> tuple[LossSample, PsychLossParams]:
    kind = rng.choice(LOSS_KINDS)
    beta = rng.uniform(0.5, 2.0) if kind == "smooth_l1" else 1.0
    if rng.random() < 0.5:
        a, b = DEFAULT_WEIGHT_A, DEFAULT_WEIGHT_B
    else:
        a = rng.uniform(0.0, 0.5)
        b = rng.uniform(0.2, 1.0)
    params = PsychLossParams(a, b, sigma_table, DefaultLossSpec(kind, beta))

    strata = all_strata()
    # keep clamp-floor spreads in the mix
    stratum = StratumKey(10, 100) if rng.random() < 0.2 else rng.choice(strata)
    sigma = sigma_table.cells[stratum].sigma
    has_data = rng.random() < 0.7

    gw = rng.uniform(10.0, 120.0)
    gh = rng.uniform(10.0, 120.0)
    gx = rng.uniform(0.0, 900.0 - gw)
    gy = rng.uniform(0.0, 900.0 - gh)
    gt = Box(gx, gy, gw, gh)

    offset_scale = min(3.0 * sigma, 100.0)
    for _ in range(200):
        ox = rng.uniform(-offset_scale, offset_scale)
        oy = rng.uniform(-offset_scale, offset_scale)
        # straddle the smooth-L1 transition: half the draws push some of the
        # normalized errors beyond beta while others stay inside
        if rng.random() < 0.5:
            dw = rng.uniform(-0.5, 0.5) * gw
            dh = rng.uniform(-0.5, 0.5) * gh
        else:
            dw = rng.uniform(-2.0, 2.0)
            dh = rng.uniform(-2.0, 2.0)
        pred = Box(gx + ox, gy + oy, max(gw + dw, 5.0), max(gh + dh, 5.0))
        errors, _ = _box_errors(pred, gt)
        margin = 0.02 * max(1.0, beta)
        if kind == "smooth_l1" and any(abs(abs(e) - beta) < margin for e in errors):
            continue  # central differences are unreliable across the C1 kink
        if kind == "l1" and any(abs(e) < margin for e in errors):
            continue  # l1 is nondifferentiable at 0
        return LossSample(pred, gt, stratum, has_data), params
    return LossSample(Box(gx, gy, gw, gh), gt, stratum, has_data), params


def gradcheck(
    n_cases: int,
    seed: int,
    sigma_table: SigmaTable | None = None,
    tolerance: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences on random
    boxes, strata, and loss parameters; reports the worst relative error."""
    if n_cases < 0:
        raise ValueError("n_cases must be non-negative")
    table = sigma_table if sigma_table is not None else formula_sigma_table()
    rng = random.Random(seed)
    max_err = 0.0
    failures: list[GradCheckCase] = []
    for idx in range(n_cases):
        sample, params = _random_case(rng, table)
        analytic = human_loss_grad(sample, params)
        fd = finite_difference_grad(sample, params, _fd_steps(sample, params))
        denom = max(1.0, float(np.abs(analytic).max()), float(np.abs(fd).max()))
        rel = float(np.abs(analytic - fd).max()) / denom
        if rel > max_err:
            max_err = rel
        if rel > tolerance:
            failures.append(GradCheckCase(index=idx, sample=sample, rel_error=rel))
    return GradCheckReport(
        n_cases=n_cases, max_rel_error=max_err, tolerance=tolerance, failures=tuple(failures)
    )


# ---------------------------------------------------------------------------
# parameter files


def load_params(path: str, sigma_table: SigmaTable | None = None) -> PsychLossParams:
    """Load loss weights from JSON; the sigma table rides along separately
    (sigma_csv key, resolved relative to the caller) or is passed in."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    spec_obj = obj.get("default_loss", {})
    spec = DefaultLossSpec(
        kind=spec_obj.get("kind", "smooth_l1"),
        beta=float(spec_obj.get("beta", 1.0)),
    )
    sigma_min = float(obj.get("sigma_min", DEFAULT_SIGMA_MIN))
    if sigma_table is None:
        csv_path = obj.get("sigma_csv")
        sigma_table = load_sigma_csv(csv_path, sigma_min) if csv_path else formula_sigma_table(sigma_min)
    return PsychLossParams(
        weight_penalty=float(obj.get("A", DEFAULT_WEIGHT_A)),
        weight_default=float(obj.get("B", DEFAULT_WEIGHT_B)),
        sigma_table=sigma_table,
        default_loss=spec,
    )


def save_params(path: str, params: PsychLossParams, sigma_csv: str | None = None) -> None:
    obj = {
        "A": params.weight_penalty,
        "B": params.weight_default,
        "sigma_min": params.sigma_table.sigma_min,
        "default_loss": {"kind": params.default_loss.kind, "beta": params.default_loss.beta},
    }
    if sigma_csv is not None:
        obj["sigma_csv"] = sigma_csv
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)

"""Stratified detection metrics for the synthetic harness.

One prediction per scene at confidence 1 against a single ground truth, so
per-scene average precision is the 0/1 hit indicator and a stratum's AP at a
threshold is its hit rate. IoU comparisons are strict (iou > t): at t=0 a
grazing overlap counts, an exact miss does not. mAP@[0.50:0.95] averages the
ten COCO thresholds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from statistics import fmean, pstdev
from typing import Iterable, Sequence

import numpy as np

from .geometry import StratumKey, box_iou
from .synthetic import SyntheticScene
from .training import Regressor

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


class MismatchedStrata(ValueError):
    pass


@dataclass(frozen=True)
class ReportCell:
    ap_by_threshold: dict[float, float]
    map50: float
    map5095: float
    map00: float
    center_err_px: float
    n_scenes: int


@dataclass(frozen=True)
class StratifiedReport:
    per_stratum: dict[StratumKey, ReportCell]
    overall: ReportCell


def _ap_from_hits(hits: Sequence[bool]) -> float:
    return 100.0 * sum(hits) / len(hits)


def _cell(ious: Sequence[float], center_errs: Sequence[float], thresholds: Sequence[float]) -> ReportCell:
    ap_by_t = {t: _ap_from_hits([iou > t for iou in ious]) for t in thresholds}
    coco = [t for t in COCO_THRESHOLDS if t in ap_by_t]
    map5095 = fmean(ap_by_t[t] for t in coco) if len(coco) == len(COCO_THRESHOLDS) else float("nan")
    return ReportCell(
        ap_by_threshold=ap_by_t,
        map50=ap_by_t.get(0.5, float("nan")),
        map5095=map5095,
        map00=ap_by_t.get(0.0, float("nan")),
        center_err_px=fmean(center_errs),
        n_scenes=len(ious),
    )


def evaluate(
    regressor: Regressor,
    test_scenes: list[SyntheticScene],
    iou_thresholds: Sequence[float] = (0.0,) + COCO_THRESHOLDS,
) -> StratifiedReport:
    """Per-stratum AP at each threshold plus mean center error."""
    if not test_scenes:
        raise ValueError("evaluation needs a non-empty scene list")
    by_stratum: dict[StratumKey, tuple[list[float], list[float]]] = {}
    all_ious: list[float] = []
    all_errs: list[float] = []
    for scene in test_scenes:
        pred = regressor.predict_box(np.asarray(scene.feature_vec, dtype=float))
        iou = box_iou(pred, scene.gt_box)
        px, py = pred.center()
        gx, gy = scene.gt_box.center()
        err = float(np.hypot(px - gx, py - gy))
        ious, errs = by_stratum.setdefault(scene.stratum, ([], []))
        ious.append(iou)
        errs.append(err)
        all_ious.append(iou)
        all_errs.append(err)
    per_stratum = {
        key: _cell(ious, errs, iou_thresholds) for key, (ious, errs) in by_stratum.items()
    }
    return StratifiedReport(
        per_stratum=per_stratum, overall=_cell(all_ious, all_errs, iou_thresholds)
    )


@dataclass(frozen=True)
class DeltaCell:
    """Paired per-stratum difference (psych minus baseline) across seeds."""

    map50_mean: float
    map50_std: float
    map5095_mean: float
    map5095_std: float
    center_err_mean: float
    center_err_std: float
    n_seeds: int


def compare_runs(
    reports_baseline: Sequence[StratifiedReport],
    reports_psych: Sequence[StratifiedReport],
) -> dict[StratumKey, DeltaCell]:
    """Paired deltas over seeds; the two report lists must align seed by seed."""
    if len(reports_baseline) != len(reports_psych):
        raise MismatchedStrata("report lists must pair up seed by seed")
    if len(reports_baseline) < 2:
        raise ValueError("need at least 2 seeds per mode for mean/std deltas")
    strata = set(reports_baseline[0].per_stratum)
    for rep in list(reports_baseline) + list(reports_psych):
        if set(rep.per_stratum) != strata:
            raise MismatchedStrata("reports cover different strata")
    out: dict[StratumKey, DeltaCell] = {}
    for key in strata:
        d50 = [
            p.per_stratum[key].map50 - b.per_stratum[key].map50
            for b, p in zip(reports_baseline, reports_psych)
        ]
        d5095 = [
            p.per_stratum[key].map5095 - b.per_stratum[key].map5095
            for b, p in zip(reports_baseline, reports_psych)
        ]
        derr = [
            p.per_stratum[key].center_err_px - b.per_stratum[key].center_err_px
            for b, p in zip(reports_baseline, reports_psych)
        ]
        out[key] = DeltaCell(
            map50_mean=fmean(d50),
            map50_std=pstdev(d50),
            map5095_mean=fmean(d5095),
            map5095_std=pstdev(d5095),
            center_err_mean=fmean(derr),
            center_err_std=pstdev(derr),
            n_seeds=len(d50),
        )
    return out


def distance_map50_means(reports: Sequence[StratifiedReport], distance_m: int) -> list[float]:
    """Per-seed mAP@0.50 averaged over the visibility cells of one distance."""
    means = []
    for rep in reports:
        cells = [c.map50 for k, c in rep.per_stratum.items() if k.distance_m == distance_m]
        means.append(fmean(cells))
    return means


def write_report_csv(
    path: str,
    rows: Iterable[tuple[int, str, StratifiedReport]],
) -> None:
    """Write (seed, mode, report) rows as flat per-stratum CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["distance_m", "visibility_pct", "map50", "map5095", "map00", "center_err_px", "seed", "mode"]
        )
        for seed, mode, report in rows:
            for key in sorted(report.per_stratum, key=lambda k: (k.distance_m, k.visibility_pct)):
                cell = report.per_stratum[key]
                writer.writerow(
                    [
                        key.distance_m,
                        key.visibility_pct,
                        f"{cell.map50:.4f}",
                        f"{cell.map5095:.4f}",
                        f"{cell.map00:.4f}",
                        f"{cell.center_err_px:.4f}",
                        seed,
                        mode,
                    ]
                )


def write_delta_csv(path: str, deltas: dict[StratumKey, DeltaCell]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "distance_m",
                "visibility_pct",
                "delta_map50_mean",
                "delta_map50_std",
                "delta_map5095_mean",
                "delta_map5095_std",
                "delta_center_err_mean",
                "delta_center_err_std",
                "n_seeds",
            ]
        )
        for key in sorted(deltas, key=lambda k: (k.distance_m, k.visibility_pct)):
            d = deltas[key]
            writer.writerow(
                [
                    key.distance_m,
                    key.visibility_pct,
                    f"{d.map50_mean:.4f}",
                    f"{d.map50_std:.4f}",
                    f"{d.map5095_mean:.4f}",
                    f"{d.map5095_std:.4f}",
                    f"{d.center_err_mean:.4f}",
                    f"{d.center_err_std:.4f}",
                    d.n_seeds,
                ]
            )

"""Behavioral analysis: accuracy tables, sigma derivation, response times,
search heatmaps, and the scan-latency projection.

Per-stratum quantities aggregate over the (distance, visibility) grid.
Control images are excluded from every per-stratum statistic unless
``include_controls`` is set; human accuracy is a per-stratum hit rate, which
for one confidence-1 selection per single-person image is the degenerate
form of average precision.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass
from statistics import fmean, pstdev
from typing import Iterable, Sequence

import numpy as np

from .behavior import BehavioralRecord, label_tp_fp
from .geometry import Box, StratumKey, all_strata, circle_rect_intersection_area

N_HISTOGRAM_BINS = 10
_BIN_EDGES = [i / 10 for i in range(1, N_HISTOGRAM_BINS + 1)]

DEFAULT_SIGMA_MIN = 1.0


@dataclass(frozen=True)
class AccuracyCell:
    accuracy_pct: float | None
    n_samples: int

    @property
    def absent(self) -> bool:
        return self.accuracy_pct is None


@dataclass(frozen=True)
class AccuracyTable:
    """Per-stratum human accuracy (0-100) at a fixed IoU threshold."""

    iou_threshold: float
    cells: dict[StratumKey, AccuracyCell]

    def __post_init__(self) -> None:
        missing = set(all_strata()) - set(self.cells)
        if missing:
            raise ValueError(f"accuracy table missing {len(missing)} strata")

    def accuracy(self, key: StratumKey) -> float | None:
        return self.cells[key].accuracy_pct


@dataclass(frozen=True)
class SigmaCell:
    sigma: float
    accuracy_pct: float | None
    imputed: bool


@dataclass(frozen=True)
class SigmaTable:
    """Per-stratum spread derived from human accuracy: 100 minus hit rate.

    The value shares the accuracy percentage scale and is interpreted in
    pixels by the regression loss. Cells with no samples are imputed from the
    mean of the same-distance cells and flagged.
    """

    sigma_min: float
    cells: dict[StratumKey, SigmaCell]

    def sigma(self, key: StratumKey) -> float:
        return self.cells[key].sigma


def _analysis_records(
    records: Iterable[BehavioralRecord], include_controls: bool
) -> list[BehavioralRecord]:
    out = []
    for rec in records:
        if rec.is_control and not include_controls:
            continue
        if rec.iou is None or rec.stratum is None:
            raise ValueError(
                f"record {rec.session_id}/{rec.image_id} lacks computed iou/stratum; ingest first"
            )
        out.append(rec)
    return out


def iou_bin_index(iou: float) -> int:
    """Bin index in the 10-bin partition of (0, 1]; iou must be > 0."""
    if not 0.0 < iou <= 1.0:
        raise ValueError(f"iou must be in (0, 1], got {iou}")
    return min(bisect_left(_BIN_EDGES, iou), N_HISTOGRAM_BINS - 1)


def iou_histograms(
    records: Sequence[BehavioralRecord], include_controls: bool = False
) -> dict[StratumKey, list[int]]:
    """Per-stratum histogram of IoU values > 0, 10 equal bins over (0, 1].

    Zero-IoU records (misses) are excluded; a stratum with no hits keeps an
    all-zero histogram rather than failing.
    """
    hists: dict[StratumKey, list[int]] = {key: [0] * N_HISTOGRAM_BINS for key in all_strata()}
    for rec in _analysis_records(records, include_controls):
        if rec.iou > 0:
            hists[rec.stratum][iou_bin_index(rec.iou)] += 1
    return hists


def accuracy_table(
    records: Sequence[BehavioralRecord],
    iou_threshold: float = 0.0,
    include_controls: bool = False,
) -> AccuracyTable:
    """Fraction of records per stratum whose selection exceeds the IoU threshold.

    The comparison is strict (iou > threshold), so at threshold 0 a grazing
    overlap counts as a hit and an exact miss does not.
    """
    if not 0.0 <= iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in [0, 1), got {iou_threshold}")
    hits: dict[StratumKey, int] = {key: 0 for key in all_strata()}
    totals: dict[StratumKey, int] = {key: 0 for key in all_strata()}
    for rec in _analysis_records(records, include_controls):
        totals[rec.stratum] += 1
        if rec.iou > iou_threshold:
            hits[rec.stratum] += 1
    cells = {}
    for key in all_strata():
        n = totals[key]
        pct = 100.0 * hits[key] / n if n else None
        cells[key] = AccuracyCell(accuracy_pct=pct, n_samples=n)
    return AccuracyTable(iou_threshold=iou_threshold, cells=cells)


def sigma_table(acc: AccuracyTable, sigma_min: float = DEFAULT_SIGMA_MIN) -> SigmaTable:
    """Derive the per-stratum spread as 100 minus the threshold-0 accuracy.

    Perfect accuracy would make the spread zero and the loss density
    degenerate, so values are clamped to ``sigma_min``. Empty cells take the
    mean spread of their distance row (fallback: grid-wide mean) and are
    flagged imputed.
    """
    if acc.iou_threshold != 0.0:
        raise ValueError("sigma derivation requires the threshold-0 accuracy table")
    if sigma_min <= 0:
        raise ValueError("sigma_min must be positive")
    direct: dict[StratumKey, float] = {}
    for key, cell in acc.cells.items():
        if not cell.absent:
            direct[key] = max(sigma_min, 100.0 - cell.accuracy_pct)
    if not direct:
        raise ValueError("cannot derive sigma: accuracy table has no populated cells")
    global_mean = fmean(direct.values())
    cells: dict[StratumKey, SigmaCell] = {}
    for key in all_strata():
        cell = acc.cells[key]
        if key in direct:
            cells[key] = SigmaCell(sigma=direct[key], accuracy_pct=cell.accuracy_pct, imputed=False)
        else:
            same_distance = [s for k, s in direct.items() if k.distance_m == key.distance_m]
            fill = fmean(same_distance) if same_distance else global_mean
            cells[key] = SigmaCell(sigma=fill, accuracy_pct=None, imputed=True)
    return SigmaTable(sigma_min=sigma_min, cells=cells)


@dataclass(frozen=True)
class RtCell:
    mean_ms: float
    std_ms: float
    n: int


@dataclass(frozen=True)
class ResponseTimeStats:
    """Mean/std response time per stratum for hits, plus pooled miss stats."""

    tp_per_stratum: dict[StratumKey, RtCell]
    fp_pooled: RtCell | None


def response_time_stats(
    records: Sequence[BehavioralRecord], include_controls: bool = False
) -> ResponseTimeStats:
    kept = _analysis_records(records, include_controls)
    tp, fp = label_tp_fp(kept)
    per_stratum: dict[StratumKey, list[int]] = {}
    for rec in tp:
        per_stratum.setdefault(rec.stratum, []).append(rec.response_time_ms)
    tp_cells = {
        key: RtCell(mean_ms=fmean(values), std_ms=pstdev(values), n=len(values))
        for key, values in per_stratum.items()
    }
    fp_cell = None
    if fp:
        values = [rec.response_time_ms for rec in fp]
        fp_cell = RtCell(mean_ms=fmean(values), std_ms=pstdev(values), n=len(values))
    return ResponseTimeStats(tp_per_stratum=tp_cells, fp_pooled=fp_cell)


@dataclass(frozen=True)
class Heatmap:
    """Dwell mass of one search trail on a regular grid over the image."""

    grid: np.ndarray
    grid_cell_px: int
    image_width_px: int
    image_height_px: int

    def total_mass(self) -> float:
        return float(self.grid.sum())


def _event_dwells(record: BehavioralRecord) -> list[float]:
    """Per-event dwell in ms: piecewise-constant trail, each interval charged
    to the earlier event; the last event holds until the answer was submitted."""
    ts = [ev.t_ms for ev in record.events]
    dwells = [float(b - a) for a, b in zip(ts, ts[1:])]
    dwells.append(float(record.response_time_ms - ts[-1]))
    return dwells


def trail_total_dwell_ms(record: BehavioralRecord) -> float:
    return float(record.response_time_ms - record.events[0].t_ms)


def search_heatmap(
    record: BehavioralRecord,
    grid_cell_px: int,
    image_width_px: int,
    image_height_px: int,
) -> Heatmap:
    """Accumulate each event's dwell over the grid cells its lens disk covers.

    Mass density is uniform over the disk, so a cell receives dwell in
    proportion to its exact overlap area with the disk; the full dwell of the
    trail is conserved on the grid.
    """
    if grid_cell_px <= 0:
        raise ValueError("grid_cell_px must be positive")
    rows = max(1, math.ceil(image_height_px / grid_cell_px))
    cols = max(1, math.ceil(image_width_px / grid_cell_px))
    grid = np.zeros((rows, cols), dtype=float)
    for ev, dwell in zip(record.events, _event_dwells(record)):
        if dwell <= 0:
            continue
        disk = ev.lens_circle()
        c_lo = max(0, int((disk.cx - disk.radius) // grid_cell_px))
        c_hi = min(cols - 1, int((disk.cx + disk.radius) // grid_cell_px))
        r_lo = max(0, int((disk.cy - disk.radius) // grid_cell_px))
        r_hi = min(rows - 1, int((disk.cy + disk.radius) // grid_cell_px))
        overlaps = []
        total = 0.0
        for row in range(r_lo, r_hi + 1):
            for col in range(c_lo, c_hi + 1):
                cell = Box(col * grid_cell_px, row * grid_cell_px, grid_cell_px, grid_cell_px)
                area = circle_rect_intersection_area(disk, cell)
                if area > 0:
                    overlaps.append((row, col, area))
                    total += area
        if total <= 0:
            # disk entirely off-grid; keep mass on the nearest cell
            row = min(rows - 1, max(0, int(disk.cy // grid_cell_px)))
            col = min(cols - 1, max(0, int(disk.cx // grid_cell_px)))
            grid[row, col] += dwell
            continue
        for row, col, area in overlaps:
            grid[row, col] += dwell * area / total
    return Heatmap(
        grid=grid,
        grid_cell_px=grid_cell_px,
        image_width_px=image_width_px,
        image_height_px=image_height_px,
    )


def scan_time_projection(
    gsd_mm_per_px: float,
    image_w_px: int,
    image_h_px: int,
    per_image_rt_s: float,
    area_m2: float,
) -> float:
    """Seconds a human would need to scan an area, one image footprint at a time."""
    if min(gsd_mm_per_px, image_w_px, image_h_px, per_image_rt_s, area_m2) <= 0:
        raise ValueError("all scan projection inputs must be positive")
    footprint_m2 = (image_w_px * gsd_mm_per_px / 1000.0) * (image_h_px * gsd_mm_per_px / 1000.0)
    return math.ceil(area_m2 / footprint_m2) * per_image_rt_s


# ---------------------------------------------------------------------------
# file output


def write_histograms_csv(path: str, hists: dict[StratumKey, list[int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_m", "visibility_pct", "bin_index", "bin_lo", "bin_hi", "count"])
        for key in all_strata():
            for i, count in enumerate(hists[key]):
                writer.writerow(
                    [key.distance_m, key.visibility_pct, i, i / 10, (i + 1) / 10, count]
                )


def write_accuracy_csv(path: str, table: AccuracyTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_m", "visibility_pct", "accuracy_pct", "n_samples", "absent"])
        for key in all_strata():
            cell = table.cells[key]
            writer.writerow(
                [
                    key.distance_m,
                    key.visibility_pct,
                    "" if cell.absent else f"{cell.accuracy_pct:.6f}",
                    cell.n_samples,
                    cell.absent,
                ]
            )


def write_sigma_csv(path: str, table: SigmaTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["distance_m", "visibility_pct", "accuracy_pct", "sigma", "imputed"])
        for key in all_strata():
            cell = table.cells[key]
            writer.writerow(
                [
                    key.distance_m,
                    key.visibility_pct,
                    "" if cell.accuracy_pct is None else f"{cell.accuracy_pct:.6f}",
                    f"{cell.sigma:.6f}",
                    cell.imputed,
                ]
            )


def load_sigma_csv(path: str, sigma_min: float = DEFAULT_SIGMA_MIN) -> SigmaTable:
    cells: dict[StratumKey, SigmaCell] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = StratumKey(int(row["distance_m"]), int(row["visibility_pct"]))
            acc = float(row["accuracy_pct"]) if row["accuracy_pct"] else None
            cells[key] = SigmaCell(
                sigma=float(row["sigma"]),
                accuracy_pct=acc,
                imputed=row["imputed"].strip().lower() == "true",
            )
    missing = set(all_strata()) - set(cells)
    if missing:
        raise ValueError(f"sigma file {path} is missing {len(missing)} strata")
    return SigmaTable(sigma_min=sigma_min, cells=cells)


def write_rt_csv(path: str, stats: ResponseTimeStats) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "distance_m", "visibility_pct", "mean_ms", "std_ms", "n"])
        for key in all_strata():
            cell = stats.tp_per_stratum.get(key)
            if cell is None:
                continue
            writer.writerow(
                [
                    "tp",
                    key.distance_m,
                    key.visibility_pct,
                    f"{cell.mean_ms:.3f}",
                    f"{cell.std_ms:.3f}",
                    cell.n,
                ]
            )
        if stats.fp_pooled is not None:
            fp = stats.fp_pooled
            writer.writerow(["fp", "", "", f"{fp.mean_ms:.3f}", f"{fp.std_ms:.3f}", fp.n])


def write_heatmap_pgm(path: str, heatmap: Heatmap, max_gray: int = 255) -> None:
    """Plain-text (P2) grayscale PGM, mass normalized to the brightest cell."""
    grid = heatmap.grid
    peak = float(grid.max())
    scaled = np.zeros_like(grid, dtype=int) if peak <= 0 else np.rint(grid / peak * max_gray).astype(int)
    rows, cols = grid.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("P2\n")
        fh.write(f"{cols} {rows}\n")
        fh.write(f"{max_gray}\n")
        for row in scaled:
            fh.write(" ".join(str(v) for v in row) + "\n")

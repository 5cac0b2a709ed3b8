"""Multi-seed baseline-vs-psych comparison runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import fmean

from .evaluation import (
    DeltaCell,
    StratifiedReport,
    compare_runs,
    distance_map50_means,
    evaluate,
)
from .geometry import StratumKey
from .loss import DEFAULT_WEIGHT_A, DEFAULT_WEIGHT_B, PsychLossParams, formula_sigma_table
from .synthetic import (
    DEFAULT_BASE_NOISE_PX,
    DEFAULT_BEHAVIORAL_FRACTION,
    DEFAULT_DECOY_FRACTION,
    generate_dataset,
)
from .training import TrainConfig, TrainResult, train

DEFAULT_N_PER_STRATUM = 150
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ComparisonResult:
    seeds: tuple[int, ...]
    reports_baseline: tuple[StratifiedReport, ...]
    reports_psych: tuple[StratifiedReport, ...]
    results_baseline: tuple[TrainResult, ...] = field(repr=False, default=())
    results_psych: tuple[TrainResult, ...] = field(repr=False, default=())

    def deltas(self) -> dict[StratumKey, DeltaCell]:
        return compare_runs(self.reports_baseline, self.reports_psych)

    def distance_map50(self, mode: str, distance_m: int) -> float:
        reports = self.reports_baseline if mode == "baseline" else self.reports_psych
        return fmean(distance_map50_means(reports, distance_m))

    def distance_delta_map50(self, distance_m: int) -> float:
        return self.distance_map50("psych", distance_m) - self.distance_map50(
            "baseline", distance_m
        )


def default_params() -> PsychLossParams:
    return PsychLossParams(DEFAULT_WEIGHT_A, DEFAULT_WEIGHT_B, formula_sigma_table())


def run_comparison(
    seeds=DEFAULT_SEEDS,
    n_per_stratum: int = DEFAULT_N_PER_STRATUM,
    params: PsychLossParams | None = None,
    epochs: int = 10,
    config: TrainConfig | None = None,
    base_noise_px: float = DEFAULT_BASE_NOISE_PX,
    behavioral_fraction: float = DEFAULT_BEHAVIORAL_FRACTION,
    decoy_fraction: float = DEFAULT_DECOY_FRACTION,
    modes: tuple[str, ...] = ("baseline", "psych"),
) -> ComparisonResult:
    """Train and evaluate both loss modes on identical per-seed datasets."""
    params = params or default_params()
    reports: dict[str, list[StratifiedReport]] = {m: [] for m in modes}
    results: dict[str, list[TrainResult]] = {m: [] for m in modes}
    for seed in seeds:
        train_scenes, _, test_scenes = generate_dataset(
            n_per_stratum,
            seed=seed,
            base_noise_px=base_noise_px,
            behavioral_fraction=behavioral_fraction,
            decoy_fraction=decoy_fraction,
        )
        for mode in modes:
            result = train(train_scenes, mode, params, epochs=epochs, seed=seed, config=config)
            results[mode].append(result)
            reports[mode].append(evaluate(result.regressor, test_scenes))
    return ComparisonResult(
        seeds=tuple(seeds),
        reports_baseline=tuple(reports.get("baseline", ())),
        reports_psych=tuple(reports.get("psych", ())),
        results_baseline=tuple(results.get("baseline", ())),
        results_psych=tuple(results.get("psych", ())),
    )

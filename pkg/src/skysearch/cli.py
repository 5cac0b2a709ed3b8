"""Command line entry points.

Subcommands cover the full pipeline: ingest behavioral files, run the
analytics battery, render heatmaps, verify loss gradients, train and
evaluate the synthetic harness, and run the survey service.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import analytics, behavior
from .evaluation import evaluate, write_delta_csv, write_report_csv
from .geometry import index_annotations, read_annotations, write_annotations
from .harness import DEFAULT_N_PER_STRATUM, default_params, run_comparison
from .loss import gradcheck, load_params
from .session import ReviewThresholds
from .store import Store
from .survey import assemble_surveys, make_demo_pool, split_pool
from .synthetic import read_scenes, write_scenes
from .training import Regressor, TrainConfig


def cmd_ingest(args) -> int:
    annotations = index_annotations(read_annotations(args.annotations))
    records, summary, issues = behavior.ingest(args.behavior, annotations)
    behavior.write_enriched(args.out, records)
    summary_path = args.summary or args.out + ".summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_json(), fh, indent=2)
    for issue in issues:
        print(f"warning: {issue}", file=sys.stderr)
    print(f"{summary.n_records} records -> {args.out} ({len(issues)} malformed lines skipped)")
    return 0


def cmd_analyze(args) -> int:
    records = behavior.read_enriched(args.records)
    os.makedirs(args.out_dir, exist_ok=True)
    include = args.include_controls
    hists = analytics.iou_histograms(records, include_controls=include)
    analytics.write_histograms_csv(os.path.join(args.out_dir, "histograms.csv"), hists)
    acc0 = analytics.accuracy_table(records, 0.0, include_controls=include)
    analytics.write_accuracy_csv(os.path.join(args.out_dir, "accuracy_t0.csv"), acc0)
    acc50 = analytics.accuracy_table(records, 0.5, include_controls=include)
    analytics.write_accuracy_csv(os.path.join(args.out_dir, "accuracy_t50.csv"), acc50)
    sigma = analytics.sigma_table(acc0, sigma_min=args.sigma_min)
    analytics.write_sigma_csv(os.path.join(args.out_dir, "sigma.csv"), sigma)
    rt = analytics.response_time_stats(records, include_controls=include)
    analytics.write_rt_csv(os.path.join(args.out_dir, "rt.csv"), rt)
    print(f"wrote histograms.csv accuracy_t0.csv accuracy_t50.csv sigma.csv rt.csv -> {args.out_dir}")
    return 0


def cmd_heatmap(args) -> int:
    records = behavior.read_enriched(args.records)
    match = [
        r for r in records if r.session_id == args.session and r.image_id == args.image
    ]
    if not match:
        print(f"no record for session {args.session}, image {args.image}", file=sys.stderr)
        return 1
    annotations = index_annotations(read_annotations(args.annotations))
    ann = annotations.get(args.image)
    if ann is None:
        print(f"no annotation for image {args.image}", file=sys.stderr)
        return 1
    heatmap = analytics.search_heatmap(
        match[0], args.cell, ann.image_width_px, ann.image_height_px
    )
    analytics.write_heatmap_pgm(args.out, heatmap)
    print(f"heatmap ({heatmap.grid.shape[0]}x{heatmap.grid.shape[1]} cells) -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    sigma_table = None
    if args.params:
        sigma_table = load_params(args.params).sigma_table
    report = gradcheck(args.n, seed=args.seed, sigma_table=sigma_table)
    status = "pass" if report.passed else "FAIL"
    print(
        f"gradcheck {status}: {report.n_cases} cases, "
        f"max relative error {report.max_rel_error:.3e} (tolerance {report.tolerance:.0e})"
    )
    for case in report.failures[:10]:
        print(f"  case {case.index}: rel error {case.rel_error:.3e}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_train_toy(args) -> int:
    params = load_params(args.params) if args.params else default_params()
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size)
    seeds = tuple(range(args.seeds))
    modes = ("baseline", "psych") if args.mode == "both" else (args.mode,)
    result = run_comparison(
        seeds=seeds,
        n_per_stratum=args.n_per_stratum,
        params=params,
        epochs=args.epochs,
        config=config,
        modes=modes,
    )
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for mode, reports, train_results in (
        ("baseline", result.reports_baseline, result.results_baseline),
        ("psych", result.reports_psych, result.results_psych),
    ):
        if mode not in modes:
            continue
        for seed, report, tr in zip(seeds, reports, train_results):
            rows.append((seed, mode, report))
            tr.regressor.save(os.path.join(args.out, f"model_{mode}_seed{seed}.npz"))
    write_report_csv(os.path.join(args.out, "report.csv"), rows)
    if len(modes) == 2 and len(seeds) >= 2:
        write_delta_csv(os.path.join(args.out, "deltas.csv"), result.deltas())
        for d in (10, 30, 50, 70, 90):
            base = result.distance_map50("baseline", d)
            delta = result.distance_delta_map50(d)
            print(f"{d:>3} m: baseline mAP@0.50 {base:6.2f}, psych delta {delta:+.2f}")
    # keep the exact evaluation inputs alongside the models
    for seed in seeds:
        _, _, test_scenes = _regenerate_split(args, seed)
        write_scenes(os.path.join(args.out, f"test_scenes_seed{seed}.jsonl"), test_scenes)
    print(f"models and reports -> {args.out}")
    return 0


def _regenerate_split(args, seed: int):
    from .synthetic import generate_dataset

    return generate_dataset(args.n_per_stratum, seed=seed)


def cmd_eval(args) -> int:
    regressor = Regressor.load(args.model)
    scenes = read_scenes(args.test)
    report = evaluate(regressor, scenes)
    write_report_csv(args.out, [(args.seed, args.mode, report)])
    print(
        f"overall: mAP@0.50 {report.overall.map50:.2f}, mAP@0.50:0.95 {report.overall.map5095:.2f}, "
        f"mAP@0.00 {report.overall.map00:.2f}, center err {report.overall.center_err_px:.1f} px -> {args.out}"
    )
    return 0


def _load_pool(args):
    if args.demo_pool:
        n_pos, n_ctl = (int(v) for v in args.demo_pool.split(","))
        return make_demo_pool(n_pos, n_ctl, seed=args.seed)
    annotations = read_annotations(args.pool)
    if args.controls:
        controls = read_annotations(args.controls)
        from .survey import ImagePool

        return ImagePool(positives=tuple(annotations), controls=tuple(controls))
    return split_pool(annotations)


def _default_practice(pool):
    """One easy control plus two positives of increasing difficulty."""
    practice = [pool.controls[0]]
    ranked = sorted(
        pool.positives, key=lambda a: (a.distance_m, -a.visibility_pct, a.image_id)
    )
    practice.append(ranked[len(ranked) // 2])
    practice.append(ranked[-1])
    return practice


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    pool = _load_pool(args)
    surveys = assemble_surveys(pool, args.surveys, seed=args.seed)
    annotations = index_annotations(list(pool.positives) + list(pool.controls))
    practice = _default_practice(pool)

    os.makedirs(args.data_dir, exist_ok=True)
    write_annotations(os.path.join(args.data_dir, "pool.jsonl"), annotations.values())
    write_annotations(os.path.join(args.data_dir, "practice.jsonl"), practice)

    store = Store(args.data_dir)
    store.recover(annotations, practice)
    fresh = [s for s in surveys if s.survey_id not in store.surveys]
    store.put_surveys(fresh)

    app = create_app(
        store,
        annotations,
        practice,
        images_dir=args.images_dir,
        thresholds=ReviewThresholds(),
        allow_repeat_workers=args.allow_repeat_workers,
    )
    print(f"{len(store.surveys)} surveys ready; serving on port {args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _recovered_store(data_dir: str) -> tuple[Store, dict]:
    annotations = index_annotations(read_annotations(os.path.join(data_dir, "pool.jsonl")))
    practice = read_annotations(os.path.join(data_dir, "practice.jsonl"))
    store = Store(data_dir)
    store.recover(annotations, practice)
    return store, annotations


def cmd_review(args) -> int:
    store, annotations = _recovered_store(args.data_dir)
    session = store.sessions.get(args.session)
    if session is None:
        print(f"no session {args.session}", file=sys.stderr)
        return 1
    result = store.review(session, annotations)
    print(f"session {args.session}: {result.verdict}")
    print(f"  controls correct: {result.control_correct}/3")
    print(f"  trail coverage:   {result.trail_coverage_score:.3f}")
    for reason in result.reasons:
        print(f"  reason: {reason}")
    return 0


def cmd_export(args) -> int:
    store, _ = _recovered_store(args.data_dir)
    records = store.records if args.include_rejected else store.accepted_records()
    if args.enriched:
        behavior.write_enriched(args.out, records)
    else:
        behavior.write_records(args.out, records)
    print(f"{len(records)} records -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skysearch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a behavioral file and compute per-record IoU")
    p.add_argument("--behavior", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="accuracy/sigma/response-time/histogram battery")
    p.add_argument("--records", required=True, help="enriched records from ingest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--include-controls", action="store_true")
    p.add_argument("--sigma-min", type=float, default=analytics.DEFAULT_SIGMA_MIN)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("heatmap", help="render one trail as a PGM dwell heatmap")
    p.add_argument("--records", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--cell", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("gradcheck", help="verify analytic loss gradients")
    p.add_argument("--params")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train the synthetic regressor")
    p.add_argument("--mode", choices=("baseline", "psych", "both"), default="both")
    p.add_argument("--params")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=TrainConfig().learning_rate)
    p.add_argument("--batch-size", type=int, default=TrainConfig().batch_size)
    p.add_argument("--n-per-stratum", type=int, default=DEFAULT_N_PER_STRATUM)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", help="evaluate a saved model on saved scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the survey HTTP service")
    p.add_argument("--pool", help="annotation JSONL for positives (and control derivation)")
    p.add_argument("--controls", help="separate annotation JSONL for controls")
    p.add_argument("--demo-pool", help="N_POSITIVES,N_CONTROLS synthetic pool")
    p.add_argument("--surveys", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--images-dir")
    p.add_argument("--allow-repeat-workers", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("review", help="review a finished session from the event log")
    p.add_argument("--session", required=True)
    p.add_argument("--data-dir", required=True)
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("export", help="write collected behavioral records")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-rejected", action="store_true")
    p.add_argument("--enriched", action="store_true")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve" and not (args.pool or args.demo_pool):
        parser.error("serve needs --pool or --demo-pool")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

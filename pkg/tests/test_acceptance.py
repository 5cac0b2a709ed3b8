"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`."""

import math
import random
import time
from statistics import fmean

import numpy as np
import pytest

from skysearch.analytics import (
    accuracy_table,
    scan_time_projection,
    search_heatmap,
    sigma_table,
    trail_total_dwell_ms,
)
from skysearch.behavior import TrailEvent
from skysearch.evaluation import evaluate
from skysearch.geometry import (
    Box,
    CircleSelection,
    StratumKey,
    all_strata,
    circle_box_iou,
    index_annotations,
)
from skysearch.harness import default_params, run_comparison
from skysearch.loss import (
    DefaultLossSpec,
    LossSample,
    PsychLossParams,
    default_loss,
    density,
    formula_sigma_table,
    gradcheck,
    human_loss,
    human_penalty,
)
from skysearch.session import (
    IllegalTransition,
    OutOfOrderAnswer,
    Session,
    WrongPhase,
    advance_phase,
    grade_practice,
    record_answer,
    review_submission,
)
from skysearch.store import Store
from skysearch.survey import assemble_surveys, check_survey, make_demo_pool
from skysearch.synthetic import generate_dataset
from skysearch.training import train

from conftest import make_annotation, make_record, random_trail
from test_analytics import per_pixel_heatmap_oracle
from test_geometry import random_circle_box_case, supersampled_circle_box_iou
from test_harness import brute_force_stratified_ap, passthrough_regressor, scene_with_prediction


def report(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS")


def test_geometry_against_supersampling_oracle():
    start = time.monotonic()
    rng = random.Random(424242)
    for _ in range(100):
        sel, box = random_circle_box_case(rng)
        exact = circle_box_iou(sel, box)
        approx = supersampled_circle_box_iou(sel, box, n=1000)
        assert abs(exact - approx) <= 1e-3
    for r in (1.0, 7.0, 33.0):
        sel = CircleSelection(100, 100, r)
        box = Box(100 - r, 100 - r, 2 * r, 2 * r)
        assert abs(circle_box_iou(sel, box) - math.pi / 4) <= 1e-4
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"geometry check took {elapsed:.2f}s"
    report(f"geometry (100 oracle cases + inscribed circle in {elapsed:.2f}s)")


def test_loss_closed_forms_exact():
    table = formula_sigma_table()
    params = PsychLossParams(0.05, 0.95, table)
    # density peak
    assert abs(density(0.0, 0.0, 12.0) - 1.0) <= 1e-9
    # penalty at a one-sigma offset
    key = StratumKey(90, 10)
    sigma = table.cells[key].sigma
    gt = Box(300, 300, 40, 40)
    pred = Box(300 + sigma, 300, 40, 40)
    sample = LossSample(pred, gt, key, has_behavioral_data=True)
    assert abs(human_penalty(sample, table) - (1.0 - math.exp(-0.5))) <= 1e-9
    # far limit: the penalty saturates and the loss tends to the A weight
    far = LossSample(Box(1e7, 1e7, 40, 40), gt, key, has_behavioral_data=True)
    assert abs(human_loss(far, params) - 0.05) <= 1e-9
    # no behavioral data reduces to the weighted default loss
    pred2 = Box(315, 290, 55, 38)
    loss_value = default_loss(pred2, gt, params.default_loss)
    sample2 = LossSample(pred2, gt, key, has_behavioral_data=False)
    assert abs(human_loss(sample2, params) - 0.95 * loss_value) <= 1e-9
    report("loss closed forms (peak, one-sigma offset, far limit, no-data case)")


def test_gradients_finite_difference_oracle():
    start = time.monotonic()
    result = gradcheck(1000, seed=7)
    elapsed = time.monotonic() - start
    assert result.n_cases == 1000
    assert result.max_rel_error <= 1e-6, f"max rel error {result.max_rel_error:.3e}"
    assert result.passed
    assert elapsed < 10.0, f"gradcheck took {elapsed:.2f}s"
    # clamp-floor spreads get dedicated coverage as well
    clamped = gradcheck(200, seed=11, sigma_table=formula_sigma_table(sigma_min=1.0))
    assert clamped.max_rel_error <= 1e-6
    report(
        f"gradients (1000 cases, max rel err {result.max_rel_error:.2e} in {elapsed:.2f}s)"
    )


def test_sigma_derivation_exact():
    rng = random.Random(5150)
    records = []
    expected_hits = {}
    n = 10
    for i, key in enumerate(all_strata()):
        hits = rng.randint(1, 9)  # keep accuracy strictly inside (0, 100)
        expected_hits[key] = hits
        for j in range(n):
            records.append(
                make_record(
                    session_id=f"s{i}_{j}",
                    iou=0.6 if j < hits else 0.0,
                    stratum=key,
                )
            )
    table = accuracy_table(records, 0.0)
    # brute-force per-stratum count oracle
    for key in all_strata():
        count = 0
        total = 0
        for rec in records:
            if rec.stratum == key:
                total += 1
                if rec.iou > 0.0:
                    count += 1
        assert total == n
        assert table.cells[key].accuracy_pct == 100.0 * count / total
    sigmas = sigma_table(table, sigma_min=1.0)
    for key in all_strata():
        cell = sigmas.cells[key]
        assert not cell.imputed
        assert cell.sigma + cell.accuracy_pct == 100.0  # exact, no clamp engaged
    report("sigma derivation (sigma + accuracy == 100 exactly on 50 strata)")


def test_evaluator_oracle_and_monotonicity():
    rng = random.Random(31337)
    reg = passthrough_regressor()
    # exhaustive-oracle equality on every instance with <= 10 scenes
    for trial in range(50):
        n = rng.randint(1, 10)
        scenes = []
        for i in range(n):
            gt = Box(rng.uniform(0, 700), rng.uniform(0, 700), rng.uniform(15, 150), rng.uniform(15, 150))
            pred = Box(
                gt.x_min + rng.uniform(-120, 120),
                gt.y_min + rng.uniform(-120, 120),
                max(4.0, gt.width + rng.uniform(-50, 50)),
                max(4.0, gt.height + rng.uniform(-50, 50)),
            )
            scenes.append(scene_with_prediction(pred, gt, rng.choice(all_strata()), f"t{trial}_{i}"))
        for t in (0.0, 0.25, 0.5, 0.75, 0.9):
            rep = evaluate(reg, scenes, iou_thresholds=(t,))
            oracle = brute_force_stratified_ap(scenes, reg, t)
            for key, expected in oracle.items():
                assert rep.per_stratum[key].ap_by_threshold[t] == expected
    # monotonicity across 100 random prediction sets
    thresholds = (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95)
    for trial in range(100):
        scenes = []
        for i in range(rng.randint(2, 12)):
            gt = Box(rng.uniform(0, 700), rng.uniform(0, 700), rng.uniform(15, 120), rng.uniform(15, 120))
            pred = Box(
                gt.x_min + rng.uniform(-80, 80),
                gt.y_min + rng.uniform(-80, 80),
                max(4.0, gt.width + rng.uniform(-40, 40)),
                max(4.0, gt.height + rng.uniform(-40, 40)),
            )
            scenes.append(scene_with_prediction(pred, gt, rng.choice(all_strata()), f"m{trial}_{i}"))
        rep = evaluate(reg, scenes, iou_thresholds=thresholds)
        aps = [rep.overall.ap_by_threshold[t] for t in thresholds]
        assert all(a >= b for a, b in zip(aps, aps[1:]))
    report("evaluator (exhaustive PR oracle equality on <=10-scene instances; mAP@t monotone)")


def test_baseline_recovery_bit_identical():
    params = PsychLossParams(0.0, 1.0, formula_sigma_table())
    train_scenes, _, _ = generate_dataset(20, seed=12, behavioral_fraction=0.0)
    for seed in (0, 1, 2):
        base = train(train_scenes, "baseline", params, epochs=5, seed=seed)
        psych = train(train_scenes, "psych", params, epochs=5, seed=seed)
        assert np.array_equal(base.regressor.weights, psych.regressor.weights)
        assert np.array_equal(base.regressor.bias, psych.regressor.bias)
    report("baseline recovery (bit-identical final parameters for 3 seeds)")


def test_far_distance_trend():
    start = time.monotonic()
    result = run_comparison()  # default config: 5 seeds, 10 epochs
    elapsed = time.monotonic() - start
    delta_70 = result.distance_delta_map50(70)
    delta_90 = result.distance_delta_map50(90)
    delta_10 = result.distance_delta_map50(10)
    assert delta_70 > 0.0, f"70 m delta {delta_70:+.2f}"
    assert delta_90 > 0.0, f"90 m delta {delta_90:+.2f}"
    assert abs(delta_10) <= 2.0, f"10 m delta {delta_10:+.2f}"
    assert elapsed < 600.0, f"trend run took {elapsed:.0f}s"
    # center localization itself also improves at the far distances
    for d in (70, 90):
        base_err = fmean(
            fmean(c.center_err_px for k, c in rep.per_stratum.items() if k.distance_m == d)
            for rep in result.reports_baseline
        )
        psych_err = fmean(
            fmean(c.center_err_px for k, c in rep.per_stratum.items() if k.distance_m == d)
            for rep in result.reports_psych
        )
        assert psych_err <= base_err, f"{d} m center err {psych_err:.2f} vs {base_err:.2f}"
    report(
        "far-distance trend (mAP@0.50 deltas "
        f"70m {delta_70:+.2f}, 90m {delta_90:+.2f}, 10m {delta_10:+.2f} in {elapsed:.0f}s)"
    )


def test_heatmap_mass_conservation():
    rng = random.Random(909)
    for i in range(50):
        events = random_trail(rng, rng.randint(1, 15))
        rec = make_record(
            events=events,
            final=events[-1].lens_circle(),
            response_time_ms=events[-1].t_ms + rng.randint(1, 3000),
        )
        hm = search_heatmap(rec, rng.choice((2, 4, 8)), 640, 480)
        total = trail_total_dwell_ms(rec)
        assert abs(hm.total_mass() - total) <= 1e-6 * total
    # overlapping disks against the per-pixel oracle
    events = (
        TrailEvent(0, 200.0, 200.0, 1, 60.0),
        TrailEvent(900, 230.0, 215.0, 2, 30.0),
        TrailEvent(1700, 250.0, 230.0, 2, 30.0),
        TrailEvent(2600, 260.0, 240.0, 4, 15.0),
    )
    rec = make_record(events=events, final=events[-1].lens_circle(), response_time_ms=3400)
    hm = search_heatmap(rec, 4, 640, 480)
    oracle = per_pixel_heatmap_oracle(rec, 4, 640, 480)
    total = trail_total_dwell_ms(rec)
    assert np.abs(hm.grid - oracle).max() <= 0.01 * total
    report("heatmap conservation (50 random trails at 1e-6; per-pixel oracle within 1%)")


def test_survey_assembly_full_scale():
    pool = make_demo_pool(4883, 768, seed=0)
    annotations = index_annotations(list(pool.positives) + list(pool.controls))
    surveys = assemble_surveys(pool, 500, seed=7)
    assert len(surveys) == 500
    for survey in surveys:
        check_survey(survey, annotations)
    again = assemble_surveys(pool, 500, seed=7)
    assert surveys == again  # bit-identical assembly
    report("survey assembly (500 full-scale surveys valid; same-seed bit-identical)")


def test_session_state_machine_properties(tmp_path):
    pool = make_demo_pool(400, 12, seed=77)
    annotations = index_annotations(list(pool.positives) + list(pool.controls))
    practice = [pool.controls[0], pool.positives[0], pool.positives[1]]
    practice_boxes = [a.gt_box for a in practice]

    def hit(ann):
        cx, cy = ann.gt_box.center()
        return CircleSelection(cx, cy, 30.0)

    def miss(ann):
        x = 2.0 if ann.gt_box.center()[0] > ann.image_width_px / 2 else ann.image_width_px - 2.0
        return CircleSelection(x, 2.0, 1.0)

    rng = random.Random(31415)
    events_menu = ("ack_consent", "finish_instructions", "finish_samples", "practice_fail", "practice_pass", "answer")
    for trial in range(200):
        survey = assemble_surveys(pool, 1, seed=trial)[0]
        sess = Session(session_id=f"acc{trial}", worker_id="w", survey=survey)
        for _ in range(rng.randint(1, 45)):
            ev = rng.choice(events_menu)
            try:
                if ev == "practice_fail":
                    sels = [hit(practice[0]), hit(practice[1]), miss(practice[2])]
                    grade_practice(sess, sels, practice_boxes)
                elif ev == "practice_pass":
                    grade_practice(sess, [hit(a) for a in practice], practice_boxes)
                elif ev == "answer":
                    idx = rng.randint(0, 12)
                    ann = annotations[sess.question_image_id(idx)]
                    final = hit(ann)
                    trail = [TrailEvent(0, 5.0, 5.0, 1, 60.0), TrailEvent(900, final.cx, final.cy, 2, final.radius)]
                    record_answer(sess, idx, trail, final, 2000, ann)
                else:
                    advance_phase(sess, ev)
            except (IllegalTransition, WrongPhase, OutOfOrderAnswer, ValueError):
                pass
            if sess.phase in ("experiment", "done"):
                assert sess.practice_passed, "experiment reached without passed practice"

    # rejected sessions contribute nothing to default analytics; their surveys requeue
    store = Store(str(tmp_path / "accdata"))
    store.put_surveys(assemble_surveys(pool, 1, seed=999))
    sess = store.claim_survey("rejected_one", "w0")
    store.advance(sess, "ack_consent")
    store.advance(sess, "finish_instructions")
    store.advance(sess, "finish_samples")
    store.practice(sess, [hit(a) for a in practice], practice)
    for i in range(13):
        ann = annotations[sess.question_image_id(i)]
        final = miss(ann)
        trail = [TrailEvent(0, 5.0, 5.0, 1, 60.0), TrailEvent(900, final.cx, final.cy, 2, final.radius)]
        store.answer(sess, i, list(trail), final, 2000, ann)
    verdict = store.review(sess, annotations)
    assert verdict.verdict == "reject"
    assert store.accepted_records() == []
    survey_id = sess.survey.survey_id
    store.requeue_survey(survey_id)
    assert store.surveys[survey_id].status == "available"
    second = store.claim_survey("fresh_session", "w_other")
    assert second is not None and second.survey.survey_id == survey_id
    report("session state machine (practice gate, quarantine, requeue across 200 walks)")


def test_scan_projection_published_case():
    assert scan_time_projection(1.0, 1000, 1000, 9.0, 2.0) == 18.0
    seconds = scan_time_projection(12.729, 3840, 2160, 9.0, 2500.0)
    assert seconds == 18.0
    report("scan projection (double footprint -> 18 s; derived footprint case exact)")

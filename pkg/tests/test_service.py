import pytest
from fastapi.testclient import TestClient

from skysearch.geometry import index_annotations
from skysearch.service import ZOOM_LENS_TABLE, create_app
from skysearch.store import Store
from skysearch.survey import assemble_surveys, make_demo_pool


@pytest.fixture(scope="module")
def pool_fixture():
    pool = make_demo_pool(300, 12, seed=23)
    annotations = index_annotations(list(pool.positives) + list(pool.controls))
    practice = [pool.controls[0], pool.positives[0], pool.positives[1]]
    return pool, annotations, practice


@pytest.fixture
def client(tmp_path, pool_fixture):
    pool, annotations, practice = pool_fixture
    store = Store(str(tmp_path / "data"))
    store.put_surveys(assemble_surveys(pool, 4, seed=9))
    app = create_app(store, annotations, practice, allow_repeat_workers=True)
    return TestClient(app), store, annotations, practice


def hit_circle(annotation):
    cx, cy = annotation.gt_box.center()
    return {"cx": cx, "cy": cy, "radius": 30.0}


def miss_circle(annotation):
    x = 2.0 if annotation.gt_box.center()[0] > annotation.image_width_px / 2 else annotation.image_width_px - 2.0
    return {"cx": x, "cy": 2.0, "radius": 1.0}


def trail_for(final, n=10, rt=5000):
    # serpentine sweep over the whole 1920x1080 image, then the final lens stop
    events = [
        {
            "t_ms": i * 400,
            "x": 150.0 + (i % 3) * 800.0,
            "y": 100.0 + (i // 3) * 300.0,
            "zoom_level": 1,
            "lens_radius_px": 220.0,
        }
        for i in range(n - 1)
    ]
    events.append(
        {"t_ms": (n - 1) * 400, "x": final["cx"], "y": final["cy"], "zoom_level": 2, "lens_radius_px": final["radius"]}
    )
    return events, max(rt, events[-1]["t_ms"] + 1)


def start_session(client, worker="w1"):
    resp = client.post("/sessions", json={"worker_id": worker})
    assert resp.status_code == 200, resp.text
    return resp.json()["session_id"]


def to_experiment(client, sid, practice, hit=True):
    assert client.post(f"/sessions/{sid}/consent", json={"acknowledged": True}).status_code == 200
    assert client.post(f"/sessions/{sid}/advance", json={"event": "finish_instructions"}).status_code == 200
    assert client.post(f"/sessions/{sid}/advance", json={"event": "finish_samples"}).status_code == 200
    selections = [hit_circle(ann) if hit else miss_circle(ann) for ann in practice]
    resp = client.post(f"/sessions/{sid}/practice", json={"selections": selections})
    assert resp.status_code == 200
    return resp.json()


def answer_question(client, sid, annotations, idx, hit=True, rt=5000):
    nxt = client.get(f"/sessions/{sid}/next").json()
    assert nxt["phase"] == "experiment"
    assert nxt["question_idx"] == idx
    ann = annotations[nxt["image_id"]]
    final = hit_circle(ann) if hit else miss_circle(ann)
    events, rt_ms = trail_for(final, rt=rt)
    resp = client.post(
        f"/sessions/{sid}/answers",
        json={
            "question_idx": idx,
            "events": events,
            "final_selection": final,
            "response_time_ms": rt_ms,
        },
    )
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestSessionFlow:
    def test_full_survey_flow(self, client):
        tc, store, annotations, practice = client
        sid = start_session(tc)
        payload = tc.get(f"/sessions/{sid}/next").json()
        assert payload["phase"] == "consent"
        result = to_experiment(tc, sid, practice)
        assert result["passed"] and result["phase"] == "experiment"
        for i in range(13):
            out = answer_question(tc, sid, annotations, i, hit=(i % 2 == 0))
            if i == 6:
                assert out["score_available"]
                score = tc.get(f"/sessions/{sid}/score").json()
                assert score["score"] == 4  # questions 0,2,4,6 hit
        assert tc.get(f"/sessions/{sid}/next").json()["phase"] == "done"

    def test_consent_must_be_acknowledged(self, client):
        tc, _, _, _ = client
        sid = start_session(tc)
        resp = tc.post(f"/sessions/{sid}/consent", json={"acknowledged": False})
        assert resp.status_code == 400
        assert tc.get(f"/sessions/{sid}/next").json()["phase"] == "consent"

    def test_practice_gate(self, client):
        tc, _, annotations, practice = client
        sid = start_session(tc)
        result = to_experiment(tc, sid, practice, hit=False)
        assert not result["passed"]
        assert result["phase"] == "practice"
        assert result["attempts"] == 1
        # answering while still in practice is refused
        ann = next(iter(annotations.values()))
        final = hit_circle(ann)
        events, rt = trail_for(final)
        resp = tc.post(
            f"/sessions/{sid}/answers",
            json={"question_idx": 0, "events": events, "final_selection": final, "response_time_ms": rt},
        )
        assert resp.status_code == 409
        # retry practice and pass
        selections = [hit_circle(a) for a in practice]
        resp = tc.post(f"/sessions/{sid}/practice", json={"selections": selections})
        assert resp.json()["passed"]

    def test_out_of_order_answer(self, client):
        tc, _, annotations, practice = client
        sid = start_session(tc)
        to_experiment(tc, sid, practice)
        answer_question(tc, sid, annotations, 0)
        nxt = tc.get(f"/sessions/{sid}/next").json()
        ann = annotations[nxt["image_id"]]
        final = hit_circle(ann)
        events, rt = trail_for(final)
        resp = tc.post(
            f"/sessions/{sid}/answers",
            json={"question_idx": 5, "events": events, "final_selection": final, "response_time_ms": rt},
        )
        assert resp.status_code == 409

    def test_score_wrong_time(self, client):
        tc, _, annotations, practice = client
        sid = start_session(tc)
        to_experiment(tc, sid, practice)
        answer_question(tc, sid, annotations, 0)
        assert tc.get(f"/sessions/{sid}/score").status_code == 409

    def test_illegal_phase_event(self, client):
        tc, _, _, practice = client
        sid = start_session(tc)
        resp = tc.post(f"/sessions/{sid}/advance", json={"event": "finish_samples"})
        assert resp.status_code == 409

    def test_unknown_session(self, client):
        tc, _, _, _ = client
        assert tc.get("/sessions/nope/next").status_code == 404

    def test_worker_repeat_blocked_by_default(self, tmp_path, pool_fixture):
        pool, annotations, practice = pool_fixture
        store = Store(str(tmp_path / "norepeat"))
        store.put_surveys(assemble_surveys(pool, 4, seed=9))
        app = create_app(store, annotations, practice, allow_repeat_workers=False)
        tc = TestClient(app)
        assert tc.post("/sessions", json={"worker_id": "dup"}).status_code == 200
        assert tc.post("/sessions", json={"worker_id": "dup"}).status_code == 409


class TestReviewAndRequeue:
    def finish(self, tc, annotations, practice, hit=True, worker="w1"):
        sid = start_session(tc, worker)
        to_experiment(tc, sid, practice)
        for i in range(13):
            answer_question(tc, sid, annotations, i, hit=hit)
        return sid

    def test_accept_path(self, client):
        tc, store, annotations, practice = client
        sid = self.finish(tc, annotations, practice, hit=True)
        result = tc.post(f"/admin/review/{sid}").json()
        assert result["verdict"] == "accept"
        assert result["control_correct"] == 3
        assert len(store.accepted_records()) == 13

    def test_reject_and_requeue(self, client):
        tc, store, annotations, practice = client
        sid = self.finish(tc, annotations, practice, hit=False)
        survey_id = store.sessions[sid].survey.survey_id
        result = tc.post(f"/admin/review/{sid}").json()
        assert result["verdict"] == "reject"
        assert result["reasons"]
        # rejected records are quarantined away from default analytics
        assert store.accepted_records() == []
        resp = tc.post(f"/admin/requeue/{survey_id}")
        assert resp.json()["status"] == "available"
        # a different worker can claim the requeued survey
        sid2 = start_session(tc, worker="w2")
        assert store.sessions[sid2].survey.survey_id in store.surveys

    def test_requeue_wrong_status(self, client):
        tc, store, annotations, practice = client
        sid = self.finish(tc, annotations, practice, hit=True)
        survey_id = store.sessions[sid].survey.survey_id
        tc.post(f"/admin/review/{sid}")
        assert tc.post(f"/admin/requeue/{survey_id}").status_code == 409

    def test_claims_are_exclusive(self, client):
        tc, store, _, _ = client
        claimed = set()
        for i in range(4):
            resp = tc.post("/sessions", json={"worker_id": f"worker{i}"})
            survey_id = resp.json()["survey_id"]
            assert survey_id not in claimed
            claimed.add(survey_id)
        # pool exhausted
        assert tc.post("/sessions", json={"worker_id": "late"}).status_code == 409


class TestRecovery:
    def test_crash_recovery_replays_log(self, tmp_path, pool_fixture):
        pool, annotations, practice = pool_fixture
        data_dir = str(tmp_path / "data")
        store = Store(data_dir)
        store.put_surveys(assemble_surveys(pool, 2, seed=9))
        app = create_app(store, annotations, practice, allow_repeat_workers=True)
        tc = TestClient(app)
        sid = start_session(tc)
        to_experiment(tc, sid, practice)
        for i in range(7):
            answer_question(tc, sid, annotations, i)

        # simulate crash: fresh store from the same directory
        store2 = Store(data_dir)
        store2.recover(annotations, practice)
        session = store2.sessions[sid]
        assert session.phase == "experiment"
        assert session.current_question == 7
        assert session.practice_passed
        assert len(store2.records) == 7

        # the recovered service keeps serving the same session
        app2 = create_app(store2, annotations, practice, allow_repeat_workers=True)
        tc2 = TestClient(app2)
        score = tc2.get(f"/sessions/{sid}/score").json()
        assert score["score"] == 7
        for i in range(7, 13):
            answer_question(tc2, sid, annotations, i)
        assert tc2.get(f"/sessions/{sid}/next").json()["phase"] == "done"

    def test_requeue_survives_recovery(self, tmp_path, pool_fixture):
        pool, annotations, practice = pool_fixture
        data_dir = str(tmp_path / "data")
        store = Store(data_dir)
        store.put_surveys(assemble_surveys(pool, 1, seed=9))
        app = create_app(store, annotations, practice, allow_repeat_workers=True)
        tc = TestClient(app)
        sid = start_session(tc)
        to_experiment(tc, sid, practice)
        for i in range(13):
            answer_question(tc, sid, annotations, i, hit=False)
        tc.post(f"/admin/review/{sid}")
        survey_id = store.sessions[sid].survey.survey_id
        tc.post(f"/admin/requeue/{survey_id}")

        store2 = Store(data_dir)
        store2.recover(annotations, practice)
        assert store2.surveys[survey_id].status == "available"
        assert store2.accepted_records() == []


def test_zoom_table_shape():
    assert set(ZOOM_LENS_TABLE) == {1, 2, 4}
    for zoom, radius in ZOOM_LENS_TABLE.items():
        assert radius == pytest.approx(60.0 / zoom)

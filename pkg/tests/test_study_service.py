"""Black-box tests of the reader-study service: stage gating, append-only
reads, persistence, and metrics equality with offline recomputation."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tailor.diagnosis import DecisionTrace, ExpertRead, LesionPrediction, save_predictions_jsonl
from tailor.manifest import DatasetManifest
from tailor.stats import ScoredSet, sens_spec
from tailor.study.service import create_app
from tailor.world import WorldConfig, build_dataset

N_CASES = 20


@pytest.fixture(scope="module")
def study_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("study")
    manifest = build_dataset(WorldConfig(), N_CASES, tmp / "cases", rng=77,
                             train_fraction=0.0)
    rng = np.random.default_rng(3)
    preds = []
    for row in manifest.rows:
        y_base = float(rng.normal(1.0 if row.label else -1.0, 0.5))
        experts = {"ncm": ExpertRead(confidence=float(rng.random()), selected=False,
                                     logit=None)}
        if row.ncm:
            experts["ncm"] = ExpertRead(confidence=0.97, selected=True,
                                        logit=float(rng.normal()))
        combined = y_base + (2.0 * experts["ncm"].logit if experts["ncm"].selected else 0.0)
        trace = DecisionTrace(y_base=y_base, experts=experts, y_combined=combined)
        p_hat = 1.0 / (1.0 + np.exp(-combined))
        preds.append(LesionPrediction(lesion_id=row.id, n_views=1, p_hat=float(p_hat),
                                      traces=[trace]))
    pred_path = tmp / "preds.jsonl"
    save_predictions_jsonl(preds, pred_path)
    return {"cases": tmp / "cases" / "manifest.csv", "preds": pred_path,
            "state": tmp / "state", "manifest": manifest}


@pytest.fixture()
def client(study_files, tmp_path):
    app = create_app(study_files["cases"], study_files["preds"], study_files["cases"],
                     state_dir=tmp_path / "state")
    return TestClient(app)


def start_session(client, reader="r1", seed=5):
    resp = client.post("/sessions", json={"reader_id": reader, "seed": seed})
    assert resp.status_code == 201
    return resp.json()


def complete_stage(client, session_id, stage, birads_fn):
    read_cases = []
    while True:
        nxt = client.get(f"/sessions/{session_id}/next", params={"stage": stage})
        assert nxt.status_code == 200, nxt.text
        packet = nxt.json()
        if packet.get("done"):
            break
        case_id = packet["case_id"]
        resp = client.post(f"/sessions/{session_id}/reads",
                           json={"case_id": case_id, "stage": stage,
                                 "birads": birads_fn(case_id)})
        assert resp.status_code == 201, resp.text
        read_cases.append(case_id)
    return read_cases


class TestSessions:
    def test_same_seed_same_order(self, client):
        a = start_session(client, "r1", seed=9)
        b = start_session(client, "r2", seed=9)
        assert a["order"] == b["order"]
        assert a["session_id"] != b["session_id"]

    def test_order_is_permutation(self, client, study_files):
        session = start_session(client)
        ids = {r.id for r in study_files["manifest"].rows}
        assert set(session["order"]) == ids
        assert len(session["order"]) == len(ids)

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/next", params={"stage": 1}).status_code == 404


class TestStageGating:
    def test_fresh_session_stage2_conflict(self, client):
        session = start_session(client)
        resp = client.get(f"/sessions/{session['session_id']}/next", params={"stage": 2})
        assert resp.status_code == 409

    def test_stage1_packet_has_no_ai_bytes(self, client):
        session = start_session(client)
        resp = client.get(f"/sessions/{session['session_id']}/next", params={"stage": 1})
        assert resp.status_code == 200
        assert b'"ai"' not in resp.content and b'"aux"' not in resp.content
        packet = resp.json()
        assert set(packet) == {"case_id", "stage", "index", "total", "image_url"}

    def test_stage2_revisits_same_order(self, client):
        session = start_session(client)
        sid = session["session_id"]
        stage1_order = complete_stage(client, sid, 1, lambda c: "3")
        stage2_order = complete_stage(client, sid, 2, lambda c: "4A")
        assert stage1_order == stage2_order == session["order"]

    def test_stage2_packet_contains_ai_and_aux(self, client):
        session = start_session(client)
        sid = session["session_id"]
        first = client.get(f"/sessions/{sid}/next", params={"stage": 1}).json()
        client.post(f"/sessions/{sid}/reads",
                    json={"case_id": first["case_id"], "stage": 1, "birads": "2"})
        packet = client.get(f"/sessions/{sid}/next", params={"stage": 2}).json()
        assert packet["case_id"] == first["case_id"]
        assert "ai" in packet and "aux" in packet
        assert "p_hat" in packet["ai"] and "views" in packet["ai"]

    def test_case_ai_endpoint_gated(self, client):
        session = start_session(client)
        sid = session["session_id"]
        case = client.get(f"/sessions/{sid}/next", params={"stage": 1}).json()["case_id"]
        locked = client.get(f"/cases/{case}/ai", params={"session": sid})
        assert locked.status_code == 409
        client.post(f"/sessions/{sid}/reads",
                    json={"case_id": case, "stage": 1, "birads": "4B"})
        unlocked = client.get(f"/cases/{case}/ai", params={"session": sid})
        assert unlocked.status_code == 200
        assert "views" in unlocked.json()


class TestReads:
    def test_birads_4a_accepted(self, client):
        session = start_session(client)
        sid = session["session_id"]
        case = client.get(f"/sessions/{sid}/next", params={"stage": 1}).json()["case_id"]
        resp = client.post(f"/sessions/{sid}/reads",
                           json={"case_id": case, "stage": 1, "birads": "4A"})
        assert resp.status_code == 201

    def test_invalid_birads_422(self, client):
        session = start_session(client)
        sid = session["session_id"]
        case = client.get(f"/sessions/{sid}/next", params={"stage": 1}).json()["case_id"]
        resp = client.post(f"/sessions/{sid}/reads",
                           json={"case_id": case, "stage": 1, "birads": "6"})
        assert resp.status_code == 422

    def test_duplicate_read_rejected(self, client):
        session = start_session(client)
        sid = session["session_id"]
        case = client.get(f"/sessions/{sid}/next", params={"stage": 1}).json()["case_id"]
        body = {"case_id": case, "stage": 1, "birads": "3"}
        assert client.post(f"/sessions/{sid}/reads", json=body).status_code == 201
        assert client.post(f"/sessions/{sid}/reads", json=body).status_code == 409

    def test_reads_survive_restart(self, study_files, tmp_path):
        state = tmp_path / "persist"
        app1 = create_app(study_files["cases"], study_files["preds"],
                          study_files["cases"], state_dir=state)
        c1 = TestClient(app1)
        session = start_session(c1)
        sid = session["session_id"]
        case = c1.get(f"/sessions/{sid}/next", params={"stage": 1}).json()["case_id"]
        c1.post(f"/sessions/{sid}/reads",
                json={"case_id": case, "stage": 1, "birads": "5"})
        # new process: fresh app over the same state dir
        app2 = create_app(study_files["cases"], study_files["preds"],
                          study_files["cases"], state_dir=state)
        c2 = TestClient(app2)
        state_resp = c2.get(f"/sessions/{sid}").json()
        assert state_resp["stage1_done"] == 1
        nxt = c2.get(f"/sessions/{sid}/next", params={"stage": 1}).json()
        assert nxt["case_id"] != case


class TestMetrics:
    def test_all_malignant_reads(self, client, study_files):
        session = start_session(client)
        sid = session["session_id"]
        complete_stage(client, sid, 1, lambda c: "5")
        metrics = client.get(f"/sessions/{sid}/metrics").json()
        assert metrics["stage1"]["sensitivity"] == 1.0
        assert metrics["stage1"]["specificity"] == 0.0

    def test_oracle_reads_perfect(self, client, study_files):
        gold = {r.id: r.label for r in study_files["manifest"].rows}
        session = start_session(client)
        sid = session["session_id"]
        complete_stage(client, sid, 1, lambda c: "4C" if gold[c] else "3")
        metrics = client.get(f"/sessions/{sid}/metrics").json()
        assert metrics["stage1"]["sensitivity"] == 1.0
        assert metrics["stage1"]["specificity"] == 1.0

    def test_deltas_match_offline_recomputation(self, client, study_files):
        gold = {r.id: r.label for r in study_files["manifest"].rows}
        rng = np.random.default_rng(8)
        stage1_reads, stage2_reads = {}, {}
        session = start_session(client)
        sid = session["session_id"]

        def stage1_fn(c):
            score = "4B" if (gold[c] ^ (rng.random() < 0.25)) else "2"
            stage1_reads[c] = score
            return score

        def stage2_fn(c):
            score = "4A" if (gold[c] ^ (rng.random() < 0.1)) else "3"
            stage2_reads[c] = score
            return score

        complete_stage(client, sid, 1, stage1_fn)
        complete_stage(client, sid, 2, stage2_fn)
        metrics = client.get(f"/sessions/{sid}/metrics").json()

        def offline(reads):
            ids = sorted(reads)
            scores = np.array([1.0 if reads[c] in {"4A", "4B", "4C", "5"} else 0.0
                               for c in ids])
            labels = np.array([gold[c] for c in ids])
            return sens_spec(ScoredSet(scores=scores, labels=labels), 0.5)

        s1 = offline(stage1_reads)
        s2 = offline(stage2_reads)
        assert metrics["stage1"]["sensitivity"] == pytest.approx(s1[0])
        assert metrics["stage2"]["specificity"] == pytest.approx(s2[1])
        assert metrics["delta"]["sensitivity"] == pytest.approx(s2[0] - s1[0])
        assert metrics["delta"]["specificity"] == pytest.approx(s2[1] - s1[1])


class TestImages:
    def test_case_image_served(self, client, study_files):
        case = study_files["manifest"].rows[0].id
        resp = client.get(f"/cases/{case}/image")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"

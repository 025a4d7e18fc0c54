"""Survey sessions, response persistence, the HTTP service, and export."""

import json

import pytest
from fastapi.testclient import TestClient

from sumdistill.service import SurveyContent, create_app
from sumdistill.survey import (
    ResponseStore,
    StoredResponse,
    SurveyError,
    create_session,
    export_responses,
    flag_low_effort,
    import_responses,
)

QUESTION_ACCURATE = "Independent of other factors, I feel that the summary is accurate."
UNDECIDED_LABEL = "I really cannot decide."


def assert_blind(payload, sources=("reference", "teacher", "student")):
    """No JSON key or string value names a summary source."""

    def walk(node):
        if isinstance(node, dict):
            for k, v in node.items():
                assert k not in sources, f"payload key leaks source {k!r}"
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)
        elif isinstance(node, str):
            assert node not in sources, f"payload value leaks source {node!r}"

    walk(payload)


def make_content(n_methods=40, items=5):
    methods = {f"m{i:03d}": f"int f{i}() {{ return {i}; }}" for i in range(n_methods)}
    return SurveyContent(
        methods=methods,
        summaries={
            "reference": {k: f"returns the value {k} (wording a)" for k in methods},
            "teacher": {k: f"returns the stored value for {k} (wording b)" for k in methods},
        },
        pair=("reference", "teacher"),
        items_per_session=items,
    )


class TestCreateSession:
    def test_thirty_distinct_items(self):
        pool = [f"m{i}" for i in range(100)]
        session = create_session("p1", pool, seed=1)
        assert session.item_count == 30
        assert len({i.method_id for i in session.items}) == 30

    def test_pool_too_small(self):
        with pytest.raises(SurveyError, match="pool"):
            create_session("p1", [f"m{i}" for i in range(10)], seed=1)

    def test_deterministic_given_seed(self):
        pool = [f"m{i}" for i in range(50)]
        a = create_session("p1", pool, seed=9)
        b = create_session("p1", pool, seed=9)
        assert a.token == b.token
        assert [vars(i) for i in a.items] == [vars(i) for i in b.items]

    def test_first_shown_fraction_over_seeded_sessions(self):
        # binomial bound: 1000 sessions x 30 items, fair coin per item
        pool = [f"m{i}" for i in range(60)]
        first_ref = 0
        total = 0
        for seed in range(1000):
            session = create_session(f"p{seed}", pool, seed=seed)
            for item in session.items:
                first_ref += item.first_source == "reference"
                total += 1
        assert 0.45 <= first_ref / total <= 0.55


class TestResponseStore:
    def fill_one(self, store, session, item=1):
        store.record_page1(session.token, item, {"accurate": 3, "complete": 2, "concise": 2}, 40.0)
        store.record_page2(session.token, item, "first", "clearly better wording", 25.0)

    def test_round_trip(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        self.fill_one(store, session)
        (resp,) = store.responses()
        assert resp.method_id == session.items[0].method_id
        assert resp.accurate == 3 and resp.preference == "first"

    def test_survives_restart(self, tmp_path):
        path = tmp_path / "store.jsonl"
        store = ResponseStore(path)
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        self.fill_one(store, session)
        reopened = ResponseStore(path)
        assert len(reopened.responses()) == 1
        assert reopened.next_position(session.token) == (2, 1)

    def test_duplicate_submission_rejected(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        self.fill_one(store, session)
        with pytest.raises(SurveyError, match="already"):
            store.record_page1(session.token, 1, {"accurate": 4, "complete": 1, "concise": 1}, 5.0)
        with pytest.raises(SurveyError, match="already"):
            store.record_page2(session.token, 1, "second", "changed my mind", 5.0)

    def test_page_order_enforced(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        with pytest.raises(SurveyError, match="page one"):
            store.record_page2(session.token, 1, "first", "why", 5.0)

    def test_unknown_session_and_item(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        with pytest.raises(SurveyError, match="unknown session"):
            store.record_page1("nope", 1, {"accurate": 3, "complete": 3, "concise": 3}, 1.0)
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        with pytest.raises(SurveyError, match="out of range"):
            store.record_page1(session.token, 4, {"accurate": 3, "complete": 3, "concise": 3}, 1.0)

    def test_likert_range_enforced(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        with pytest.raises(SurveyError, match="1..4"):
            store.record_page1(session.token, 1, {"accurate": 0, "complete": 3, "concise": 3}, 1.0)

    def test_rationale_required(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        store.record_page1(session.token, 1, {"accurate": 3, "complete": 3, "concise": 3}, 1.0)
        with pytest.raises(SurveyError, match="rationale"):
            store.record_page2(session.token, 1, "undecided", "   ", 5.0)

    def test_record_complete_response(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=1, items_per_session=3)
        store.add_session(session)
        store.record_response(
            StoredResponse(
                session=session.token, participant="p1", item=2,
                method_id=session.items[1].method_id,
                first_source=session.items[1].first_source,
                second_source=session.items[1].second_source,
                accurate=4, complete=1, concise=2,
                preference="undecided", rationale="both identical",
                page1_seconds=30.0, page2_seconds=12.0,
            )
        )
        assert store.next_position(session.token) == (1, 1)
        assert len(store.responses()) == 1


class TestExport:
    def build_store(self, tmp_path, n_items=3):
        store = ResponseStore(tmp_path / "store.jsonl")
        session = create_session("p1", [f"m{i}" for i in range(40)], seed=3, items_per_session=n_items)
        store.add_session(session)
        for item in range(1, n_items + 1):
            store.record_page1(session.token, item, {"accurate": 3, "complete": 2, "concise": 1}, 35.0)
            store.record_page2(session.token, item, "second", f"reason {item}", 20.0)
        return store, session

    def test_export_import_identity(self, tmp_path):
        store, _ = self.build_store(tmp_path)
        text = export_responses(store)
        records = import_responses(text)
        assert records == [r.to_record() for r in store.responses()]

    def test_empty_store_exports_header_only(self, tmp_path):
        store = ResponseStore(tmp_path / "store.jsonl")
        text = export_responses(store)
        lines = text.strip().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["kind"] == "survey_export"

    def test_export_sorted_by_session_item(self, tmp_path):
        store, session = self.build_store(tmp_path)
        records = import_responses(export_responses(store))
        assert [r["item"] for r in records] == [1, 2, 3]

    def test_source_labels_resolved(self, tmp_path):
        store, session = self.build_store(tmp_path)
        rec = import_responses(export_responses(store))[0]
        assert rec["preferred_source"] == session.items[0].second_source
        assert rec["rated_source"] == session.items[0].first_source


class TestFlagLowEffort:
    def test_fast_session_flagged(self):
        assert flag_low_effort({"fast": 25.0, "fine": 120.0}, 30.0) == ["fast"]

    def test_slow_session_not_flagged(self):
        assert flag_low_effort({"slow": 120.0}, 30.0) == []

    def test_empty(self):
        assert flag_low_effort({}, 30.0) == []

    def test_bad_threshold(self):
        with pytest.raises(SurveyError):
            flag_low_effort({}, 0.0)


class TestHttpService:
    def make_client(self, tmp_path, items=3):
        store = ResponseStore(tmp_path / "store.jsonl")
        app = create_app(store, make_content(items=items))
        return TestClient(app), store

    def start_session(self, client, seed=5):
        resp = client.post("/api/session", json={"participant_id": "p1", "seed": seed})
        assert resp.status_code == 200
        return resp.json()

    def test_session_creation(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        body = self.start_session(client)
        assert body["item_count"] == 3
        assert body["token"]

    def test_page_one_serves_questions_verbatim_without_sources(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        resp = client.get(f"/api/session/{token}/item/1/page1")
        assert resp.status_code == 200
        body = resp.json()
        assert body["questions"][0]["text"] == QUESTION_ACCURATE
        assert [o["label"] for o in body["questions"][0]["options"]] == [
            "Strongly Agree", "Agree", "Disagree", "Strongly Disagree",
        ]
        assert_blind(body)

    def test_page_two_options_and_blindness(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        client.post(f"/api/session/{token}/item/1/page1",
                    json={"accurate": 3, "complete": 2, "concise": 2, "elapsed_seconds": 30})
        resp = client.get(f"/api/session/{token}/item/1/page2")
        body = resp.json()
        assert [o["label"] for o in body["question"]["options"]] == ["Summary 1", "Summary 2", UNDECIDED_LABEL]
        assert "summary_1" in body and "summary_2" in body
        assert_blind(body)

    def test_full_session_flow_and_completion(self, tmp_path):
        client, store = self.make_client(tmp_path, items=3)
        token = self.start_session(client)["token"]
        for item in (1, 2, 3):
            r1 = client.post(f"/api/session/{token}/item/{item}/page1",
                             json={"accurate": 4, "complete": 1, "concise": 2, "elapsed_seconds": 35})
            assert r1.status_code == 200
            r2 = client.post(f"/api/session/{token}/item/{item}/page2",
                             json={"preference": "first", "rationale": "better detail", "elapsed_seconds": 21})
            assert r2.status_code == 200
        final = r2.json()
        assert final["completed"] is True
        assert final["completion_code"]
        state = client.get(f"/api/session/{token}/state").json()
        assert state["completed"] and state["completion_code"] == final["completion_code"]
        assert len(store.responses()) == 3

    def test_likert_out_of_range_rejected(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        resp = client.post(f"/api/session/{token}/item/1/page1",
                           json={"accurate": 0, "complete": 2, "concise": 2, "elapsed_seconds": 5})
        assert resp.status_code == 422

    def test_missing_rationale_rejected(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        client.post(f"/api/session/{token}/item/1/page1",
                    json={"accurate": 3, "complete": 2, "concise": 2, "elapsed_seconds": 5})
        resp = client.post(f"/api/session/{token}/item/1/page2",
                           json={"preference": "first", "rationale": "  ", "elapsed_seconds": 5})
        assert resp.status_code == 400

    def test_duplicate_submission_conflict(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        body = {"accurate": 3, "complete": 2, "concise": 2, "elapsed_seconds": 5}
        assert client.post(f"/api/session/{token}/item/1/page1", json=body).status_code == 200
        assert client.post(f"/api/session/{token}/item/1/page1", json=body).status_code == 409

    def test_unknown_session_404(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        assert client.get("/api/session/nope/item/1/page1").status_code == 404

    def test_export_endpoint(self, tmp_path):
        client, _ = self.make_client(tmp_path)
        token = self.start_session(client)["token"]
        client.post(f"/api/session/{token}/item/1/page1",
                    json={"accurate": 3, "complete": 2, "concise": 2, "elapsed_seconds": 31})
        client.post(f"/api/session/{token}/item/1/page2",
                    json={"preference": "undecided", "rationale": "cannot tell", "elapsed_seconds": 9})
        resp = client.get("/api/export")
        assert resp.status_code == 200
        records = import_responses(resp.text)
        assert len(records) == 1
        assert records[0]["preference"] == "undecided"

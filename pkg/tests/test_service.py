"""HTTP integration tests for the draft service."""

import pytest
from fastapi.testclient import TestClient

from draftrank.cards import CardDb
from draftrank.model import CprModel, ModelConfig
from draftrank.representation import FeaturesChannel, RepresentationConfig, TextMode, Vectorizer
from draftrank.service import ModelRegistry, create_app
from draftrank.synthetic import make_card_set


@pytest.fixture(scope="module")
def registry():
    cards = make_card_set("SYA", 30, seed=1) + make_card_set("SYB", 20, seed=2)
    db = CardDb(cards)
    config = RepresentationConfig((FeaturesChannel(text_mode=TextMode("hashed", 8)),))
    vz = Vectorizer(config, db)
    model = CprModel(ModelConfig(input_dim=vz.total_dim, config_hash=vz.config_hash,
                                 embedding_dim=16, card_width=24, trunk_width=16,
                                 conv_channels=(1, 1, 2, 2, 2, 2), seed=3))
    registry = ModelRegistry(db)
    registry.add("m1", model, vz)
    return registry


@pytest.fixture()
def client(registry, tmp_path):
    app = create_app(registry, tmp_path)
    with TestClient(app) as c:
        yield c


def some_pack(client, n=3, set_code="SYA"):
    cards = client.get(f"/api/sets/{set_code}/cards").json()["cards"]
    return [c["card_id"] for c in cards[:n]]


def new_session(client, set_code="SYA"):
    resp = client.post("/api/sessions", json={"set_code": set_code, "model_id": "m1"})
    assert resp.status_code == 201
    return resp.json()["session_id"]


class TestSessionLifecycle:
    def test_create_fresh_session(self, client):
        resp = client.post("/api/sessions", json={"set_code": "SYA", "model_id": "m1"})
        assert resp.status_code == 201
        body = resp.json()
        assert body["pool_size"] == 0
        assert body["pack_number"] == 1 and body["pick_number"] == 1
        assert body["pending_pack"] is None

    def test_unknown_model_404(self, client):
        resp = client.post("/api/sessions", json={"set_code": "SYA", "model_id": "nope"})
        assert resp.status_code == 404
        assert resp.json() == {"code": "unknown_model",
                               "message": resp.json()["message"]}

    def test_unknown_set_404(self, client):
        resp = client.post("/api/sessions", json={"set_code": "ZZZ", "model_id": "m1"})
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_set"

    def test_two_creates_distinct_ids(self, client):
        assert new_session(client) != new_session(client)


class TestRankPack:
    def test_ranking_ascending_with_names(self, client):
        sid = new_session(client)
        pack = some_pack(client, 3)
        resp = client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
        assert resp.status_code == 200
        ranking = resp.json()["ranking"]
        assert len(ranking) == 3
        dists = [r["distance"] for r in ranking]
        assert dists == sorted(dists)
        assert [r["rank"] for r in ranking] == [1, 2, 3]
        assert all("name" in r for r in ranking)

    def test_rank_does_not_mutate_pool(self, client):
        sid = new_session(client)
        pack = some_pack(client, 4)
        before = client.get(f"/api/sessions/{sid}").json()
        client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
        after = client.get(f"/api/sessions/{sid}").json()
        assert before["pool"] == after["pool"] == []
        assert after["pending_pack"] == pack

    def test_rerank_same_pack_idempotent(self, client):
        sid = new_session(client)
        pack = some_pack(client, 3)
        r1 = client.post(f"/api/sessions/{sid}/pack", json={"pack": pack}).json()
        r2 = client.post(f"/api/sessions/{sid}/pack", json={"pack": pack}).json()
        assert r1["ranking"] == r2["ranking"]

    def test_empty_deck_ranking_matches_strength_order(self, client):
        sid = new_session(client)
        pack = some_pack(client, 5)
        ranking = client.post(f"/api/sessions/{sid}/pack",
                              json={"pack": pack}).json()["ranking"]
        strength = client.get("/api/sets/SYA/strength").json()["ranking"]
        strength_order = [r["card_id"] for r in strength if r["card_id"] in pack]
        assert [r["card_id"] for r in ranking] == strength_order

    def test_oversized_pack_rejected(self, client):
        sid = new_session(client)
        pack = some_pack(client, 16) + ["sya-016"]
        resp = client.post(f"/api/sessions/{sid}/pack", json={"pack": pack[:16]})
        assert resp.status_code == 400
        assert resp.json()["code"] == "pack_too_large"

    def test_unknown_card_rejected(self, client):
        sid = new_session(client)
        resp = client.post(f"/api/sessions/{sid}/pack", json={"pack": ["nope"]})
        assert resp.status_code == 400
        assert resp.json()["code"] == "unknown_card"

    def test_empty_pack_rejected(self, client):
        sid = new_session(client)
        resp = client.post(f"/api/sessions/{sid}/pack", json={"pack": []})
        assert resp.status_code == 400
        assert resp.json()["code"] == "empty_pack"

    def test_unknown_session_404(self, client):
        resp = client.post("/api/sessions/missing/pack", json={"pack": ["x"]})
        assert resp.status_code == 404


class TestPickAndUndo:
    def test_pick_grows_pool(self, client):
        sid = new_session(client)
        pack = some_pack(client, 3)
        ranking = client.post(f"/api/sessions/{sid}/pack",
                              json={"pack": pack}).json()["ranking"]
        best = ranking[0]["card_id"]
        body = client.post(f"/api/sessions/{sid}/pick", json={"card_id": best}).json()
        assert body["pool"] == [best]
        assert body["pending_pack"] is None
        assert body["pick_number"] == 2

    def test_pick_without_pending_pack(self, client):
        sid = new_session(client)
        resp = client.post(f"/api/sessions/{sid}/pick", json={"card_id": "x"})
        assert resp.status_code == 409
        assert resp.json()["code"] == "no_pending_pack"

    def test_pick_outside_pack(self, client):
        sid = new_session(client)
        pack = some_pack(client, 3)
        client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
        other = some_pack(client, 5)[4]
        resp = client.post(f"/api/sessions/{sid}/pick", json={"card_id": other})
        assert resp.status_code == 400
        assert resp.json()["code"] == "pick_not_in_pack"

    def test_pick_then_undo_is_identity(self, client):
        sid = new_session(client)
        pack = some_pack(client, 3)
        client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
        snapshot = client.get(f"/api/sessions/{sid}").json()
        client.post(f"/api/sessions/{sid}/pick", json={"card_id": pack[0]})
        restored = client.post(f"/api/sessions/{sid}/undo").json()
        for key in ("pool", "pending_pack", "pending_ranking", "history_length"):
            assert restored[key] == snapshot[key], key

    def test_undo_fresh_session_errors(self, client):
        sid = new_session(client)
        resp = client.post(f"/api/sessions/{sid}/undo")
        assert resp.status_code == 409
        assert resp.json()["code"] == "nothing_to_undo"

    def test_undo_twice_empties_pool(self, client):
        sid = new_session(client)
        for _ in range(2):
            pack = some_pack(client, 3)
            client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
            client.post(f"/api/sessions/{sid}/pick", json={"card_id": pack[0]})
        client.post(f"/api/sessions/{sid}/undo")
        body = client.post(f"/api/sessions/{sid}/undo").json()
        assert body["pool"] == []
        assert body["can_undo"] is False


class TestPersistence:
    def test_sessions_survive_restart(self, registry, tmp_path):
        app = create_app(registry, tmp_path)
        with TestClient(app) as client:
            sid = new_session(client)
            pack = some_pack(client, 3)
            client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
            client.post(f"/api/sessions/{sid}/pick", json={"card_id": pack[1]})
            expected = client.get(f"/api/sessions/{sid}").json()

        app2 = create_app(registry, tmp_path)
        with TestClient(app2) as client2:
            restored = client2.get(f"/api/sessions/{sid}").json()
        for key in ("pool", "pending_pack", "history_length", "set_code", "model_id"):
            assert restored[key] == expected[key], key

    def test_undo_replays_correctly(self, registry, tmp_path):
        app = create_app(registry, tmp_path)
        with TestClient(app) as client:
            sid = new_session(client)
            pack = some_pack(client, 4)
            client.post(f"/api/sessions/{sid}/pack", json={"pack": pack})
            client.post(f"/api/sessions/{sid}/pick", json={"card_id": pack[0]})
            expected = client.post(f"/api/sessions/{sid}/undo").json()

        with TestClient(create_app(registry, tmp_path)) as client2:
            restored = client2.get(f"/api/sessions/{sid}").json()
        assert restored["pool"] == expected["pool"] == []
        assert restored["pending_pack"] == pack


class TestSetEndpoints:
    def test_cards_listing(self, client):
        body = client.get("/api/sets/SYA/cards").json()
        assert len(body["cards"]) == 30
        assert all({"card_id", "name", "colors", "mana_value"} <= set(c)
                   for c in body["cards"])

    def test_strength_covers_set_and_is_cached(self, client):
        r1 = client.get("/api/sets/SYB/strength").json()
        r2 = client.get("/api/sets/SYB/strength").json()
        assert r1 == r2
        assert len(r1["ranking"]) == 20
        dists = [r["distance"] for r in r1["ranking"]]
        assert dists == sorted(dists)

    def test_projection_payload(self, client):
        body = client.get("/api/sets/SYA/projection").json()
        assert len(body["points"]) == 30
        assert {"x", "y", "colors", "card_id"} <= set(body["points"][0])
        assert "empty_deck" in body and {"x", "y"} <= set(body["empty_deck"])
        assert len(body["explained_variance"]) == 2

    def test_unknown_set(self, client):
        assert client.get("/api/sets/ZZZ/cards").status_code == 404
        assert client.get("/api/sets/ZZZ/strength").status_code == 404

    def test_models_listing(self, client):
        body = client.get("/api/models").json()
        assert body["models"][0]["model_id"] == "m1"
        assert set(body["models"][0]["sets"]) == {"SYA", "SYB"}

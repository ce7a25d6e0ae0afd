"""Walkthrough: a scripted draft against the HTTP service.

Spins the FastAPI app up in-process, creates a session, submits packs,
records picks (following the recommendation), undoes one pick, and reads
the set-strength and projection payloads the UI consumes.
"""

import tempfile

from fastapi.testclient import TestClient

from draftrank.cards import CardDb
from draftrank.model import CprModel, ModelConfig
from draftrank.representation import FeaturesChannel, RepresentationConfig, TextMode, Vectorizer
from draftrank.service import ModelRegistry, create_app
from draftrank.synthetic import make_card_set, simulate_drafts


def main():
    cards = make_card_set("DEM", n_cards=40, seed=13)
    db = CardDb(cards)
    config = RepresentationConfig((FeaturesChannel(text_mode=TextMode("hashed", 8)),))
    vz = Vectorizer(config, db)
    model = CprModel(ModelConfig(input_dim=vz.total_dim, config_hash=vz.config_hash,
                                 embedding_dim=32, card_width=48, trunk_width=32,
                                 conv_channels=(1, 1, 2, 2, 2, 2), seed=14))
    registry = ModelRegistry(db)
    registry.add("demo", model, vz)
    state_dir = tempfile.mkdtemp()

    drafts = simulate_drafts(cards, n_drafts=1, seed=15)
    with TestClient(create_app(registry, state_dir)) as client:
        print("models:", client.get("/api/models").json()["models"])
        sid = client.post("/api/sessions",
                          json={"set_code": "DEM", "model_id": "demo"}).json()["session_id"]
        print(f"session {sid[:8]}...")

        for event in drafts[:4]:
            payload = client.post(f"/api/sessions/{sid}/pack",
                                  json={"pack": list(event.pack)}).json()
            best = payload["ranking"][0]
            print(f"  P{event.pack_number}P{event.pick_number}: pack of "
                  f"{len(event.pack)}, best {best['name']} at {best['distance']:.3f}")
            client.post(f"/api/sessions/{sid}/pick", json={"card_id": best["card_id"]})

        summary = client.get(f"/api/sessions/{sid}").json()
        print(f"pool after 4 picks: {summary['pool']}")
        client.post(f"/api/sessions/{sid}/undo")
        print(f"after undo: pool size "
              f"{client.get(f'/api/sessions/{sid}').json()['pool_size']}")

        strength = client.get("/api/sets/DEM/strength").json()["ranking"][:3]
        print("strongest by empty-deck distance:",
              [(r["name"], round(r["distance"], 3)) for r in strength])
        projection = client.get("/api/sets/DEM/projection").json()
        print(f"projection: {len(projection['points'])} points, empty-deck anchor "
              f"at ({projection['empty_deck']['x']:.2f}, "
              f"{projection['empty_deck']['y']:.2f})")


if __name__ == "__main__":
    main()

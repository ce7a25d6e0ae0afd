"""HTTP service hosting loaded models and live draft sessions.

A session tracks one human draft: the client submits each pack as it
arrives, receives the distance ranking for the current pool, records the
pick (growing the pool), and may undo. Sessions persist as append-only
JSONL event logs (create/pack/pick/undo) replayed on startup; the log
doubles as pick data in the canonical format.

Models are shared read-only across requests; per-session mutations are
serialized by a session lock.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .cards import CardDb
from .evaluation import ModelBackend, pca_project, rank_candidates, strength_ranking
from .model import CprModel
from .representation import Vectorizer

MAX_POOL = 45
MAX_PACK = 15


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class ModelBundle:
    model_id: str
    model: CprModel
    vectorizer: Vectorizer
    backend: ModelBackend = field(init=False)
    covered_sets: set[str] = field(init=False)

    def __post_init__(self):
        self.backend = ModelBackend(self.model, self.vectorizer)
        self.covered_sets = set()
        db = self.vectorizer.card_db
        for set_code in db.sets():
            try:
                for card in db.set_cards(set_code):
                    self.vectorizer.vector(card.card_id)
            except Exception:
                continue
            self.covered_sets.add(set_code)


class ModelRegistry:
    """model_id -> loaded bundle over one shared card database."""

    def __init__(self, card_db: CardDb):
        self.card_db = card_db
        self.bundles: dict[str, ModelBundle] = {}
        self._derived_cache: dict[tuple, dict] = {}
        self._lock = threading.Lock()

    def add(self, model_id: str, model: CprModel, vectorizer: Vectorizer) -> ModelBundle:
        bundle = ModelBundle(model_id=model_id, model=model, vectorizer=vectorizer)
        self.bundles[model_id] = bundle
        return bundle

    def get(self, model_id: str) -> ModelBundle:
        bundle = self.bundles.get(model_id)
        if bundle is None:
            raise ServiceError(404, "unknown_model", f"no model {model_id!r}")
        return bundle

    def bundle_for_set(self, set_code: str, model_id: str | None = None) -> ModelBundle:
        if set_code not in self.card_db.sets():
            raise ServiceError(404, "unknown_set", f"no set {set_code!r}")
        if model_id is not None:
            bundle = self.get(model_id)
            if set_code not in bundle.covered_sets:
                raise ServiceError(409, "set_not_covered",
                                   f"model {model_id!r} does not cover set {set_code!r}")
            return bundle
        for mid in sorted(self.bundles):
            if set_code in self.bundles[mid].covered_sets:
                return self.bundles[mid]
        raise ServiceError(409, "set_not_covered", f"no model covers set {set_code!r}")

    def strength(self, set_code: str, model_id: str | None = None) -> dict:
        bundle = self.bundle_for_set(set_code, model_id)
        key = ("strength", set_code, bundle.model_id)
        with self._lock:
            if key not in self._derived_cache:
                cards = self.card_db.set_cards(set_code)
                ranking = strength_ranking(bundle.model,
                                           [c.card_id for c in cards],
                                           bundle.vectorizer)
                self._derived_cache[key] = {
                    "set_code": set_code,
                    "model_id": bundle.model_id,
                    "ranking": [{"card_id": cid,
                                 "name": self.card_db[cid].name,
                                 "colors": self.card_db[cid].colors,
                                 "distance": dist}
                                for cid, dist in ranking],
                }
            return self._derived_cache[key]

    def projection(self, set_code: str, model_id: str | None = None) -> dict:
        bundle = self.bundle_for_set(set_code, model_id)
        key = ("projection", set_code, bundle.model_id)
        with self._lock:
            if key not in self._derived_cache:
                cards = sorted(self.card_db.set_cards(set_code),
                               key=lambda c: c.card_id)
                emb = bundle.backend.card_embeddings([c.card_id for c in cards])
                anchor = bundle.backend.deck_embeddings([[]])[0]
                points, ratio = pca_project(np.vstack([emb, anchor[None]]))
                dists = np.sqrt(((emb - anchor) ** 2).sum(axis=1))
                self._derived_cache[key] = {
                    "set_code": set_code,
                    "model_id": bundle.model_id,
                    "explained_variance": [float(r) for r in ratio],
                    "points": [{"card_id": c.card_id, "name": c.name,
                                "colors": c.colors,
                                "x": float(points[i, 0]), "y": float(points[i, 1]),
                                "distance_to_empty": float(dists[i])}
                               for i, c in enumerate(cards)],
                    "empty_deck": {"x": float(points[-1, 0]),
                                   "y": float(points[-1, 1])},
                }
            return self._derived_cache[key]


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

@dataclass
class HistoryEntry:
    pack: list[str]
    ranking: list[tuple[str, float]]
    picked: str


@dataclass
class DraftSession:
    session_id: str
    set_code: str
    model_id: str
    pool: list[str] = field(default_factory=list)
    history: list[HistoryEntry] = field(default_factory=list)
    pending_pack: list[str] | None = None
    pending_ranking: list[tuple[str, float]] | None = None
    created_at: float = 0.0
    updated_at: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def summary(self, card_db: CardDb) -> dict:
        picks_made = len(self.pool)
        return {
            "session_id": self.session_id,
            "set_code": self.set_code,
            "model_id": self.model_id,
            "pool": list(self.pool),
            "pool_size": picks_made,
            "picks_made": picks_made,
            "pack_number": min(picks_made // 15 + 1, 3),
            "pick_number": picks_made % 15 + 1,
            "pending_pack": list(self.pending_pack) if self.pending_pack else None,
            "pending_ranking": _ranking_payload(self.pending_ranking, card_db),
            "history_length": len(self.history),
            "can_undo": bool(self.history),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


def _ranking_payload(ranking, card_db: CardDb):
    if ranking is None:
        return None
    return [{"card_id": cid,
             "name": card_db[cid].name if cid in card_db else cid,
             "distance": float(dist),
             "rank": i + 1}
            for i, (cid, dist) in enumerate(ranking)]


class SessionStore:
    """Append-only JSONL event logs, one file per session."""

    def __init__(self, state_dir):
        self.dir = Path(state_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)

    def append(self, session_id: str, event: dict) -> None:
        with open(self.dir / f"{session_id}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def replay(self) -> dict[str, DraftSession]:
        sessions: dict[str, DraftSession] = {}
        for path in sorted(self.dir.glob("*.jsonl")):
            session = self._replay_one(path)
            if session is not None:
                sessions[session.session_id] = session
        return sessions

    def _replay_one(self, path: Path) -> DraftSession | None:
        session: DraftSession | None = None
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event.get("type")
                if kind == "create":
                    session = DraftSession(
                        session_id=path.stem,
                        set_code=event["set_code"],
                        model_id=event["model_id"],
                        created_at=event.get("ts", 0.0),
                        updated_at=event.get("ts", 0.0),
                    )
                elif session is None:
                    return None
                elif kind == "pack":
                    session.pending_pack = list(event["pack"])
                    session.pending_ranking = [tuple(r) for r in event["ranking"]]
                elif kind == "pick":
                    session.history.append(HistoryEntry(
                        pack=list(session.pending_pack or ()),
                        ranking=list(session.pending_ranking or ()),
                        picked=event["card_id"]))
                    session.pool.append(event["card_id"])
                    session.pending_pack = None
                    session.pending_ranking = None
                elif kind == "undo":
                    entry = session.history.pop()
                    session.pool.pop()
                    session.pending_pack = entry.pack
                    session.pending_ranking = entry.ranking
                if session is not None:
                    session.updated_at = event.get("ts", session.updated_at)
        return session


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------

class CreateSessionRequest(BaseModel):
    set_code: str
    model_id: str


class PackRequest(BaseModel):
    pack: list[str]


class PickRequest(BaseModel):
    card_id: str


def create_app(registry: ModelRegistry, state_dir, static_dir=None) -> FastAPI:
    app = FastAPI(title="draftrank", docs_url=None, redoc_url=None)
    store = SessionStore(state_dir)
    sessions = store.replay()
    card_db = registry.card_db

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> DraftSession:
        session = sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return session

    @app.get("/api/models")
    def list_models():
        return {"models": [{"model_id": b.model_id,
                            "config_hash": b.model.config_hash,
                            "embedding_dim": b.model.embedding_dim,
                            "sets": sorted(b.covered_sets)}
                           for b in registry.bundles.values()]}

    @app.get("/api/sets/{set_code}/cards")
    def set_cards(set_code: str):
        if set_code not in card_db.sets():
            raise ServiceError(404, "unknown_set", f"no set {set_code!r}")
        cards = sorted(card_db.set_cards(set_code), key=lambda c: c.card_id)
        return {"set_code": set_code,
                "cards": [{"card_id": c.card_id, "name": c.name,
                           "colors": c.colors, "mana_value": c.mana_value,
                           "rarity": c.rarity, "types": list(c.types)}
                          for c in cards]}

    @app.get("/api/sets/{set_code}/strength")
    def set_strength(set_code: str, model_id: str | None = None):
        return registry.strength(set_code, model_id)

    @app.get("/api/sets/{set_code}/projection")
    def set_projection(set_code: str, model_id: str | None = None):
        return registry.projection(set_code, model_id)

    @app.post("/api/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        bundle = registry.get(req.model_id)
        if req.set_code not in card_db.sets():
            raise ServiceError(404, "unknown_set", f"no set {req.set_code!r}")
        if req.set_code not in bundle.covered_sets:
            raise ServiceError(409, "set_not_covered",
                               f"model {req.model_id!r} does not cover {req.set_code!r}")
        session_id = uuid.uuid4().hex
        now = time.time()
        session = DraftSession(session_id=session_id, set_code=req.set_code,
                               model_id=req.model_id, created_at=now, updated_at=now)
        sessions[session_id] = session
        store.append(session_id, {"type": "create", "set_code": req.set_code,
                                  "model_id": req.model_id, "ts": now})
        return session.summary(card_db)

    @app.get("/api/sessions/{session_id}")
    def get_session_summary(session_id: str):
        return get_session(session_id).summary(card_db)

    @app.post("/api/sessions/{session_id}/pack")
    def rank_pack(session_id: str, req: PackRequest):
        session = get_session(session_id)
        if not req.pack:
            raise ServiceError(400, "empty_pack", "pack must contain at least one card")
        if len(req.pack) > MAX_PACK:
            raise ServiceError(400, "pack_too_large",
                               f"pack of {len(req.pack)} exceeds {MAX_PACK}")
        unknown = [cid for cid in req.pack if cid not in card_db]
        if unknown:
            raise ServiceError(400, "unknown_card", f"unknown cards: {unknown}")
        bundle = registry.get(session.model_id)
        with session.lock:
            if session.pending_pack != list(req.pack):
                ranked = rank_candidates(bundle.backend, session.pool, list(req.pack))
                session.pending_pack = list(req.pack)
                session.pending_ranking = list(ranked.ranking)
                session.updated_at = time.time()
                store.append(session_id, {"type": "pack", "pack": list(req.pack),
                                          "ranking": session.pending_ranking,
                                          "ts": session.updated_at})
            return {"session_id": session_id,
                    "pool_size": len(session.pool),
                    "pack": list(session.pending_pack),
                    "ranking": _ranking_payload(session.pending_ranking, card_db)}

    @app.post("/api/sessions/{session_id}/pick")
    def record_pick(session_id: str, req: PickRequest):
        session = get_session(session_id)
        with session.lock:
            if session.pending_pack is None:
                raise ServiceError(409, "no_pending_pack",
                                   "rank a pack before recording a pick")
            if req.card_id not in session.pending_pack:
                raise ServiceError(400, "pick_not_in_pack",
                                   f"{req.card_id!r} is not in the pending pack")
            if len(session.pool) >= MAX_POOL:
                raise ServiceError(409, "pool_full", f"pool already holds {MAX_POOL}")
            session.history.append(HistoryEntry(pack=list(session.pending_pack),
                                                ranking=list(session.pending_ranking),
                                                picked=req.card_id))
            session.pool.append(req.card_id)
            session.pending_pack = None
            session.pending_ranking = None
            session.updated_at = time.time()
            store.append(session_id, {"type": "pick", "card_id": req.card_id,
                                      "ts": session.updated_at})
            return session.summary(card_db)

    @app.post("/api/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        with session.lock:
            if not session.history:
                raise ServiceError(409, "nothing_to_undo", "history is empty")
            entry = session.history.pop()
            session.pool.pop()
            session.pending_pack = entry.pack
            session.pending_ranking = entry.ranking
            session.updated_at = time.time()
            store.append(session_id, {"type": "undo", "ts": session.updated_at})
            return session.summary(card_db)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app

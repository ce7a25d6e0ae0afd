"""Ranking, accuracy reporting, and embedding exports.

A pick is scored by embedding the current pool and every candidate card,
then choosing the candidate at minimal Euclidean distance; accuracy is the
fraction of events where that candidate equals the human pick, sliced by
(pack, pick) cell and by set.

Backends: the trained model is the normal case, and a frozen-random
backend (keyed random unit embeddings for cards and decks) provides the
chance-level reference that a representation with no shared structure
collapses to on unseen cards.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cards import CardDb, PickEvent
from .model import CprModel
from .representation import DECK_ROWS, encode_random


class ModelBackend:
    """Embeds cards and pools through a CprModel, caching card embeddings.

    The cache keys on the model's parameter state at construction; create a
    fresh backend after further training.
    """

    def __init__(self, model: CprModel, vectors, batch_size: int = 512):
        self.model = model
        self.vectors = vectors
        self.batch_size = batch_size
        self._card_cache: dict[str, int] = {}
        self._card_rows: list[np.ndarray] = []
        self._dim = model.config.input_dim

    def _vector(self, card_id: str) -> np.ndarray:
        if hasattr(self.vectors, "vector"):
            return self.vectors.vector(card_id)
        return np.asarray(self.vectors[card_id], dtype=np.float32)

    def card_embeddings(self, card_ids: Sequence[str]) -> np.ndarray:
        missing = [cid for cid in card_ids if cid not in self._card_cache]
        if missing:
            mat = np.stack([self._vector(cid) for cid in missing])
            for start in range(0, len(missing), self.batch_size):
                chunk = missing[start:start + self.batch_size]
                emb = self.model.embed_cards(mat[start:start + self.batch_size])
                for cid, e in zip(chunk, emb):
                    self._card_cache[cid] = len(self._card_rows)
                    self._card_rows.append(e)
        rows = [self._card_rows[self._card_cache[cid]] for cid in card_ids]
        return np.stack(rows)

    def deck_embeddings(self, pools: Sequence[Sequence[str]]) -> np.ndarray:
        out = np.empty((len(pools), self.model.embedding_dim), dtype=np.float32)
        tensors = np.zeros((len(pools), DECK_ROWS, self._dim), dtype=np.float32)
        for i, pool in enumerate(pools):
            for row, cid in enumerate(sorted(pool)):
                tensors[i, row] = self._vector(cid)
        for start in range(0, len(pools), self.batch_size):
            out[start:start + self.batch_size] = \
                self.model.embed_decks(tensors[start:start + self.batch_size])
        return out


class FrozenRandomBackend:
    """Keyed random embeddings; ranks candidates with no learned structure."""

    def __init__(self, dim: int = 512, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _emb(self, key: str) -> np.ndarray:
        found = self._cache.get(key)
        if found is None:
            found = encode_random(key, self.dim, self.seed)
            self._cache[key] = found
        return found

    def card_embeddings(self, card_ids: Sequence[str]) -> np.ndarray:
        return np.stack([self._emb(f"card\x00{cid}") for cid in card_ids])

    def deck_embeddings(self, pools: Sequence[Sequence[str]]) -> np.ndarray:
        out = np.empty((len(pools), self.dim), dtype=np.float32)
        for i, pool in enumerate(pools):
            key = "deck\x00" + "\x00".join(sorted(pool))
            out[i] = encode_random(key, self.dim, self.seed)
        return out


def _as_backend(model, vectors) -> ModelBackend | FrozenRandomBackend:
    if hasattr(model, "card_embeddings"):
        return model
    return ModelBackend(model, vectors)


@dataclass
class RankedPick:
    """Candidates ordered by (distance, card_id); first entry is chosen."""

    ranking: list[tuple[str, float]]

    @property
    def chosen(self) -> str:
        return self.ranking[0][0]

    def distances(self) -> dict[str, float]:
        return dict(self.ranking)


def rank_candidates(model, pool: Sequence[str], candidates: Sequence[str],
                    vectors=None) -> RankedPick:
    """Order candidates by embedding distance to the embedded pool."""
    if not candidates:
        raise ValueError("no candidates to rank")
    backend = _as_backend(model, vectors)
    card_emb = backend.card_embeddings(list(candidates))
    deck_emb = backend.deck_embeddings([list(pool)])[0]
    dists = np.sqrt(((card_emb - deck_emb) ** 2).sum(axis=1))
    order = sorted(zip(candidates, dists.tolist()), key=lambda t: (t[1], t[0]))
    return RankedPick(ranking=[(cid, float(d)) for cid, d in order])


@dataclass
class EvalReport:
    """Accuracy aggregated overall, per (pack, pick) cell, and per set."""

    cells: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    per_set: dict[str, tuple[int, int]] = field(default_factory=dict)

    def add(self, pack_number: int, pick_number: int, correct: bool,
            set_code: str | None = None) -> None:
        key = (pack_number, pick_number)
        c, t = self.cells.get(key, (0, 0))
        self.cells[key] = (c + int(correct), t + 1)
        if set_code is not None:
            c, t = self.per_set.get(set_code, (0, 0))
            self.per_set[set_code] = (c + int(correct), t + 1)

    @property
    def total_events(self) -> int:
        return sum(t for _, t in self.cells.values())

    @property
    def overall_accuracy(self) -> float | None:
        total = self.total_events
        if total == 0:
            return None
        return sum(c for c, _ in self.cells.values()) / total

    def cell_accuracy(self, pack_number: int, pick_number: int) -> float | None:
        cell = self.cells.get((pack_number, pick_number))
        if not cell or cell[1] == 0:
            return None
        return cell[0] / cell[1]

    def set_accuracy(self, set_code: str) -> float | None:
        cell = self.per_set.get(set_code)
        return None if not cell else cell[0] / cell[1]

    def to_dict(self) -> dict:
        cells = {f"P{p}P{q}": {"correct": c, "total": t,
                               "accuracy": (c / t if t else None)}
                 for (p, q), (c, t) in sorted(self.cells.items())}
        sets = {s: {"correct": c, "total": t, "accuracy": (c / t if t else None)}
                for s, (c, t) in sorted(self.per_set.items())}
        return {"overall_accuracy": self.overall_accuracy,
                "total_events": self.total_events,
                "cells": cells, "sets": sets}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def matrix_csv(self) -> str:
        """Plot-ready 3x15 accuracy matrix; absent cells stay empty."""
        lines = ["pack," + ",".join(f"pick_{q}" for q in range(1, 16))]
        for p in (1, 2, 3):
            row = [str(p)]
            for q in range(1, 16):
                acc = self.cell_accuracy(p, q)
                row.append("" if acc is None else f"{acc:.6f}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def top1_accuracy(model, events: Sequence[PickEvent], vectors=None,
                  card_db: CardDb | None = None,
                  batch_size: int = 512) -> EvalReport:
    """Score every event: correct iff the argmin-distance candidate is the
    human pick (ties by ascending card_id)."""
    from .nn import single_threaded_blas
    backend = _as_backend(model, vectors)
    report = EvalReport()
    unique = sorted({cid for ev in events for cid in ev.pack})
    if unique:
        backend.card_embeddings(unique)  # warm the cache in one pass
    with single_threaded_blas():
        for start in range(0, len(events), batch_size):
            chunk = events[start:start + batch_size]
            deck_emb = backend.deck_embeddings([ev.pool for ev in chunk])
            for ev, anchor in zip(chunk, deck_emb):
                card_emb = backend.card_embeddings(ev.pack)
                dists = np.sqrt(((card_emb - anchor) ** 2).sum(axis=1))
                best = min(zip(dists.tolist(), ev.pack))
                set_code = card_db[ev.picked].set_code if card_db and ev.picked in card_db else None
                report.add(ev.pack_number, ev.pick_number, best[1] == ev.picked, set_code)
    return report


# ---------------------------------------------------------------------------
# Embedding exports, projection, strength
# ---------------------------------------------------------------------------

EMPTY_DECK_LABEL = "__empty_deck__"


def export_embeddings(model: CprModel, vectors, card_ids: Iterable[str],
                      pools: Mapping[str, Sequence[str]] | None = None,
                      include_empty_deck: bool = False) -> list[tuple[str, np.ndarray]]:
    """Rows of (label, embedding) for cards, optional pools, and the
    empty-deck anchor."""
    backend = ModelBackend(model, vectors)
    ids = sorted(card_ids)
    rows: list[tuple[str, np.ndarray]] = []
    if ids:
        emb = backend.card_embeddings(ids)
        rows.extend(zip(ids, emb))
    if pools:
        labels = sorted(pools)
        deck_emb = backend.deck_embeddings([pools[k] for k in labels])
        rows.extend(zip(labels, deck_emb))
    if include_empty_deck:
        rows.append((EMPTY_DECK_LABEL, backend.deck_embeddings([[]])[0]))
    return rows


def write_embeddings_csv(rows: Sequence[tuple[str, np.ndarray]], sink) -> None:
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(fh)
        for label, vec in rows:
            writer.writerow([label] + [repr(float(v)) for v in vec])
    finally:
        if own:
            fh.close()


def pca_project(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top-2 principal directions of the centered data.

    Returns (points of shape (n, 2), explained variance ratio of shape (2,)).
    Sign convention: each direction's largest-magnitude loading is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError("pca_project needs at least 3 vectors")
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        raise ValueError("pca_project: all points identical (rank < 1)")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:  # fewer than 2 directions available
        comps = np.vstack([comps, np.zeros_like(comps[0])])
        s = np.concatenate([s, [0.0]])
    for i in range(2):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    points = centered @ comps.T
    total = float((s ** 2).sum())
    ratio = (s[:2] ** 2) / total if total > 0 else np.zeros(2)
    return points, ratio


def strength_ranking(model: CprModel, card_ids: Iterable[str],
                     vectors) -> list[tuple[str, float]]:
    """Cards ordered by distance to the empty-deck embedding (ascending).

    The all-zero deck is the anchor of "no context"; proximity to it is a
    proxy for context-free card strength.
    """
    backend = ModelBackend(model, vectors)
    ids = sorted(card_ids)
    anchor = backend.deck_embeddings([[]])[0]
    emb = backend.card_embeddings(ids)
    dists = np.sqrt(((emb - anchor) ** 2).sum(axis=1))
    return sorted(((cid, float(d)) for cid, d in zip(ids, dists)),
                  key=lambda t: (t[1], t[0]))

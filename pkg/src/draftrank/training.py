"""Triplet generation and the training/fine-tuning loops.

Every pick event with k offered cards yields exactly k-1 preference
triplets: the pool is the anchor, the picked card the positive, and each
non-picked card in turn the negative. Triplets are enumerated as index
arrays rather than materialized records inside the loop, since they
outnumber picks roughly ninefold on full packs.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import evaluation, nn
from .cards import PickEvent
from .model import CprModel, ModelConfig, load_checkpoint, save_checkpoint, train_step
from .representation import DECK_ROWS, Vectorizer

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    margin: float = 1.0
    batch_size: int = 256
    epochs: int = 1
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    warm_start: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")


@dataclass(frozen=True)
class TripletRecord:
    anchor: tuple[str, ...]  # pool multiset
    positive: str
    negative: str
    event_index: int


def generate_triplets(events: Sequence[PickEvent]) -> list[TripletRecord]:
    """Materialize all preference triplets (debugging/export path)."""
    out: list[TripletRecord] = []
    for i, ev in enumerate(events):
        for cid in ev.pack:
            if cid != ev.picked:
                out.append(TripletRecord(anchor=ev.pool, positive=ev.picked,
                                         negative=cid, event_index=i))
    return out


def count_triplets(events: Sequence[PickEvent]) -> int:
    return sum(len(ev.pack) - 1 for ev in events)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    zero_hinge_fraction: float
    eval_top1: float | None
    seconds: float


def history_csv(history: Sequence[EpochStats]) -> str:
    lines = ["epoch,mean_loss,eval_top1"]
    for h in history:
        top1 = "" if h.eval_top1 is None else f"{h.eval_top1:.6f}"
        lines.append(f"{h.epoch},{h.mean_loss:.6f},{top1}")
    return "\n".join(lines) + "\n"


def dataset_digest(events: Sequence[PickEvent]) -> str:
    h = hashlib.sha256()
    for ev in events:
        h.update(ev.to_json().encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()[:16]


class _TripletArrays:
    """Index-array view of a pick corpus against a card-vector matrix."""

    def __init__(self, events: Sequence[PickEvent], vectorizer: Vectorizer):
        ids = sorted({cid for ev in events for cid in (*ev.pack, *ev.pool)})
        self.matrix = vectorizer.matrix(ids) if ids else \
            np.zeros((0, vectorizer.total_dim), dtype=np.float32)
        row = {cid: i for i, cid in enumerate(ids)}
        self.pool_rows = [np.array(sorted(row[c] for c in ev.pool), dtype=np.int32)
                          for ev in events]
        self.picked_rows = np.array([row[ev.picked] for ev in events], dtype=np.int32)
        ev_idx, neg_rows = [], []
        for i, ev in enumerate(events):
            for cid in ev.pack:
                if cid != ev.picked:
                    ev_idx.append(i)
                    neg_rows.append(row[cid])
        self.event_idx = np.array(ev_idx, dtype=np.int64)
        self.neg_rows = np.array(neg_rows, dtype=np.int32)
        self.dim = self.matrix.shape[1] if ids else vectorizer.total_dim

    def __len__(self):
        return len(self.event_idx)

    def batch(self, sel: np.ndarray):
        events = self.event_idx[sel]
        decks = np.zeros((len(sel), DECK_ROWS, self.dim), dtype=np.float32)
        for b, e in enumerate(events):
            rows = self.pool_rows[e]
            if len(rows):
                decks[b, :len(rows)] = self.matrix[rows]
        pos = self.matrix[self.picked_rows[events]]
        neg = self.matrix[self.neg_rows[sel]]
        return decks, pos, neg


def _run_epochs(model: CprModel, arrays: _TripletArrays, config: TrainingConfig,
                eval_events, eval_vectors, card_db,
                start_epoch: int = 1) -> list[EpochStats]:
    opt = nn.Adam(lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(1,)))
    n = len(arrays)
    history: list[EpochStats] = []
    for epoch in range(start_epoch, start_epoch + config.epochs):
        t0 = time.monotonic()
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        zero_hinge = 0
        batches = bad_batches = 0
        with nn.single_threaded_blas():
            for start in range(0, n, config.batch_size):
                sel = order[start:start + config.batch_size]
                decks, pos, neg = arrays.batch(sel)
                stats = train_step(model, decks, pos, neg, config.margin, opt)
                batches += 1
                if not stats.applied:
                    bad_batches += 1
                    continue
                loss_sum += stats.loss * len(sel)
                zero_hinge += int(round((1.0 - stats.active_fraction) * len(sel)))
        if batches and bad_batches / batches > 0.01:
            raise TrainingError(
                f"epoch {epoch}: {bad_batches}/{batches} batches had non-finite "
                f"loss or gradients")
        top1 = None
        if eval_events:
            backend = evaluation.ModelBackend(model, eval_vectors)
            top1 = evaluation.top1_accuracy(backend, eval_events,
                                            card_db=card_db).overall_accuracy
        history.append(EpochStats(
            epoch=epoch,
            mean_loss=loss_sum / max(n, 1),
            zero_hinge_fraction=zero_hinge / max(n, 1),
            eval_top1=top1,
            seconds=time.monotonic() - t0,
        ))
        log.info("epoch %d: loss %.4f, zero-hinge %.3f, top1 %s (%.1fs)",
                 epoch, history[-1].mean_loss, history[-1].zero_hinge_fraction,
                 f"{top1:.4f}" if top1 is not None else "-", history[-1].seconds)
    return history


def train(events: Sequence[PickEvent], vectorizer: Vectorizer,
          config: TrainingConfig, eval_events: Sequence[PickEvent] | None = None,
          card_db=None, model_config: ModelConfig | None = None,
          out_path=None, eval_vectorizer: Vectorizer | None = None,
          ) -> tuple[CprModel, list[EpochStats]]:
    """Train a model from scratch (or from config.warm_start) on pick events.

    ``eval_events`` may reference cards outside the training card DB (the
    unseen-set case); pass an ``eval_vectorizer`` covering them, built from
    the same representation config. Returns the model and per-epoch
    history; saves a checkpoint when ``out_path`` is given.
    """
    if not events:
        raise TrainingError("no training events")
    if count_triplets(events) == 0:
        raise TrainingError("training events yield no triplets (all packs size 1)")
    if config.warm_start:
        model = load_checkpoint(config.warm_start,
                                expect_config_hash=vectorizer.config_hash)
    else:
        if model_config is None:
            model_config = ModelConfig(input_dim=vectorizer.total_dim,
                                       config_hash=vectorizer.config_hash,
                                       seed=config.seed)
        if model_config.input_dim != vectorizer.total_dim:
            raise TrainingError(
                f"model input_dim {model_config.input_dim} != representation "
                f"total_dim {vectorizer.total_dim}")
        model = CprModel(model_config)
    arrays = _TripletArrays(events, vectorizer)
    history = _run_epochs(model, arrays, config, eval_events,
                          eval_vectorizer or vectorizer, card_db)
    if out_path is not None:
        save_checkpoint(model, out_path, metadata={
            "seed": config.seed,
            "epochs": config.epochs,
            "step": len(history) and history[-1].epoch,
            "dataset_digest": dataset_digest(events),
            "warm_start": config.warm_start or "",
        })
    return model, history


def fine_tune(base, events: Sequence[PickEvent], vectorizer: Vectorizer,
              config: TrainingConfig, eval_events=None, card_db=None,
              out_path=None, eval_vectorizer: Vectorizer | None = None,
              ) -> tuple[CprModel, list[EpochStats]]:
    """Continue training a pre-trained model on one set's events.

    ``base`` is a checkpoint path or a loaded model. Zero epochs returns the
    base parameters untouched. No layers are frozen; the loop is identical
    to a cold start apart from initialization.
    """
    if isinstance(base, CprModel):
        model = base
        if model.config_hash != vectorizer.config_hash:
            raise TrainingError(
                f"base model config {model.config_hash} != representation "
                f"config {vectorizer.config_hash}")
    else:
        model = load_checkpoint(base, expect_config_hash=vectorizer.config_hash)
    if config.epochs == 0:
        if out_path is not None:
            save_checkpoint(model, out_path, metadata={
                "seed": config.seed, "epochs": 0,
                "dataset_digest": dataset_digest(events)})
        return model, []
    if not events:
        raise TrainingError("no fine-tuning events")
    arrays = _TripletArrays(events, vectorizer)
    history = _run_epochs(model, arrays, config, eval_events,
                          eval_vectorizer or vectorizer, card_db)
    if out_path is not None:
        save_checkpoint(model, out_path, metadata={
            "seed": config.seed, "epochs": config.epochs,
            "dataset_digest": dataset_digest(events),
            "fine_tuned_from": str(base) if not isinstance(base, CprModel) else "<model>",
        })
    return model, history

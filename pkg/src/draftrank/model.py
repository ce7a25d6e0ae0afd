"""The three-network embedding model.

A card encoder (dense stack) and a deck encoder (convolutional stack over
the 45-row deck matrix) project their inputs to the embedding width; both
feed one shared trunk whose tanh output is a 512-dimensional embedding in
(-1, 1). Preference training pushes the picked card's embedding closer to
the current deck's embedding than the rejected card's, through three
weight-sharing applications of the trunk.

The trunk is a single object, so weight sharing holds by construction; a
training step runs it once on the concatenation of the deck/positive/
negative activations, which also accumulates its gradients from all three
paths in one backward pass.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import nn
from .representation import CardVector, DeckTensor

# Embeddings are clamped one step inside [-1, 1] so that float32 tanh
# saturation can never produce an exact endpoint.
EMBED_LIMIT = 1.0 - 1e-6

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or incompatible checkpoint."""


class ConfigMismatchError(ValueError):
    """Input was produced under a different representation config."""


class _OpenIntervalClamp(nn.Layer):
    """Clip into (-limit, limit); gradient passes through unclamped cells."""

    def __init__(self, limit: float = EMBED_LIMIT):
        super().__init__()
        self.limit = limit

    def forward(self, x, train=False):
        self._inside = np.abs(x) < self.limit
        return np.clip(x, -self.limit, self.limit)

    def backward(self, dout):
        return dout * self._inside


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and seed; defaults follow the published network shapes."""

    input_dim: int
    config_hash: str = ""
    embedding_dim: int = 512
    card_width: int = 1024
    card_blocks: int = 4
    trunk_width: int = 512
    trunk_blocks: int = 4  # hidden blocks; the tanh output layer makes 5 dense layers
    conv_channels: tuple[int, ...] = (1, 2, 4, 8, 16, 16)
    pool_after: tuple[int, ...] = (2, 4, 6)
    kernel: int = 3
    dropout_rate: float = 0.2
    deck_rows: int = 45
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("conv_channels", "pool_after"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class CprModel:
    def __init__(self, config: ModelConfig):
        n_pools = len(config.pool_after)
        if config.input_dim < 2 ** n_pools:
            raise ValueError(
                f"input_dim {config.input_dim} too small for {n_pools} pooling stages")
        self.config = config
        streams = nn.seed_streams(config.seed,
                                  ["card_init", "deck_init", "trunk_init", "dropout"])
        self._dropout_rng = streams["dropout"]
        self.card_net = self._build_card(streams["card_init"])
        self.deck_net = self._build_deck(streams["deck_init"])
        self.trunk = self._build_trunk(streams["trunk_init"])

    # -- construction -------------------------------------------------------

    def _block(self, layers, in_dim, width, rng):
        layers += [nn.Dense(in_dim, width, rng), nn.LayerNorm(width), nn.Elu(),
                   nn.Dropout(self.config.dropout_rate, self._dropout_rng)]
        return width

    def _build_card(self, rng) -> nn.Sequential:
        cfg = self.config
        layers: list[nn.Layer] = []
        dim = cfg.input_dim
        for _ in range(cfg.card_blocks):
            dim = self._block(layers, dim, cfg.card_width, rng)
        layers.append(nn.Dense(dim, cfg.embedding_dim, rng))
        return nn.Sequential(layers)

    def _build_deck(self, rng) -> nn.Sequential:
        cfg = self.config
        layers: list[nn.Layer] = []
        c, h, w = 1, cfg.deck_rows, cfg.input_dim
        for i, out_ch in enumerate(cfg.conv_channels, start=1):
            layers += [nn.Conv2d(c, out_ch, cfg.kernel, rng, pad=cfg.kernel // 2),
                       nn.LayerNorm((out_ch, h, w)), nn.Elu()]
            c = out_ch
            if i in cfg.pool_after:
                layers.append(nn.MaxPool2d(2))
                h, w = h // 2, w // 2
        layers += [nn.Flatten(), nn.Dense(c * h * w, cfg.embedding_dim, rng)]
        return nn.Sequential(layers)

    def _build_trunk(self, rng) -> nn.Sequential:
        cfg = self.config
        layers: list[nn.Layer] = []
        dim = cfg.embedding_dim
        for _ in range(cfg.trunk_blocks):
            dim = self._block(layers, dim, cfg.trunk_width, rng)
        layers += [nn.Dense(dim, cfg.embedding_dim, rng), nn.Tanh(),
                   _OpenIntervalClamp()]
        return nn.Sequential(layers)

    # -- embedding ----------------------------------------------------------

    @property
    def config_hash(self) -> str:
        return self.config.config_hash

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def embed_cards(self, matrix: np.ndarray, train: bool = False) -> np.ndarray:
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[1] != self.config.input_dim:
            raise ValueError(f"card batch must be (B, {self.config.input_dim}), "
                             f"got {matrix.shape}")
        return self.trunk.forward(self.card_net.forward(matrix, train), train)

    def embed_decks(self, tensors: np.ndarray, train: bool = False) -> np.ndarray:
        tensors = np.asarray(tensors)
        expect = (self.config.deck_rows, self.config.input_dim)
        if tensors.ndim != 3 or tensors.shape[1:] != expect:
            raise ValueError(f"deck batch must be (B, {expect[0]}, {expect[1]}), "
                             f"got {tensors.shape}")
        hidden = self.deck_net.forward(tensors[:, None, :, :], train)
        return self.trunk.forward(hidden, train)

    def embed_card(self, card_vector: CardVector, mode: str = "eval") -> np.ndarray:
        if card_vector.config_hash != self.config_hash:
            raise ConfigMismatchError(
                f"card vector config {card_vector.config_hash} != model "
                f"config {self.config_hash}")
        return self.embed_cards(card_vector.values[None], train=(mode == "train"))[0]

    def embed_deck(self, deck: DeckTensor, mode: str = "eval") -> np.ndarray:
        return self.embed_decks(deck.matrix[None], train=(mode == "train"))[0]

    # -- parameters ---------------------------------------------------------

    def _components(self):
        return (("card.", self.card_net), ("deck.", self.deck_net),
                ("trunk.", self.trunk))

    def named_params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for prefix, net in self._components():
            out.update(net.named_params(prefix))
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for prefix, net in self._components():
            out.update(net.named_grads(prefix))
        return out

    def params_digest(self) -> str:
        # trailing digest of the serialized blob, identical to what a save would record
        return nn.dump_params(self.named_params())[-32:].hex()

    def trunk_digest(self) -> str:
        return nn.dump_params(dict(self.trunk.named_params()))[-32:].hex()


@dataclass
class StepStats:
    loss: float
    active_fraction: float
    applied: bool


def train_step(model: CprModel, deck_tensors: np.ndarray, positives: np.ndarray,
               negatives: np.ndarray, margin: float, optimizer: nn.Adam) -> StepStats:
    """One optimizer step on the mean triplet loss of a batch.

    The trunk runs once over the stacked [deck; positive; negative]
    activations, so its gradient accumulates from all three paths of the
    weight-shared composition.
    """
    b = deck_tensors.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    card_h = model.card_net.forward(np.concatenate([positives, negatives]), train=True)
    deck_h = model.deck_net.forward(deck_tensors[:, None, :, :], train=True)
    out = model.trunk.forward(np.concatenate([deck_h, card_h]), train=True)
    anchor, pos, neg = out[:b], out[b:2 * b], out[2 * b:]
    loss, per, (da, dp, dn) = nn.triplet_loss(anchor, pos, neg, margin)
    if not np.isfinite(loss):
        optimizer.skipped += 1
        return StepStats(loss=float(loss), active_fraction=float("nan"), applied=False)
    d_hidden = model.trunk.backward(np.concatenate([da, dp, dn]))
    model.deck_net.backward(d_hidden[:b])
    model.card_net.backward(d_hidden[b:])
    applied = optimizer.step(model.named_params(), model.named_grads())
    return StepStats(loss=loss, active_fraction=float((per > 0).mean()), applied=applied)


def composite_loss(model: CprModel, deck_tensors, positives, negatives,
                   margin: float) -> float:
    """Eval-mode (dropout-free) triplet loss of the full composition."""
    b = deck_tensors.shape[0]
    card_h = model.card_net.forward(np.concatenate([positives, negatives]), train=False)
    deck_h = model.deck_net.forward(deck_tensors[:, None, :, :], train=False)
    out = model.trunk.forward(np.concatenate([deck_h, card_h]), train=False)
    return nn.triplet_loss(out[:b], out[b:2 * b], out[2 * b:], margin)[0]


def composite_gradient_check(model: CprModel, deck_tensors, positives, negatives,
                             margin: float = 1.0, tolerance: float = 1e-4,
                             h: float = 1e-6, max_components: int | None = 40,
                             rng: np.random.Generator | None = None) -> nn.GradientCheckReport:
    """Finite-difference check through encoders, trunk, and triplet loss."""
    rng = rng or np.random.default_rng(0)
    nets = [model.card_net, model.deck_net, model.trunk]
    saved_dtypes = [net.dtype for net in nets]
    saved_params = []
    for net in nets:
        net.set_dtype(np.float64)
        for layer in net.layers:
            saved_params.append((layer, layer.params))
            layer.params = {k: v.astype(np.float64) for k, v in layer.params.items()}
    deck64 = np.asarray(deck_tensors, dtype=np.float64)
    pos64 = np.asarray(positives, dtype=np.float64)
    neg64 = np.asarray(negatives, dtype=np.float64)
    try:
        b = deck64.shape[0]
        card_h = model.card_net.forward(np.concatenate([pos64, neg64]), train=False)
        deck_h = model.deck_net.forward(deck64[:, None, :, :], train=False)
        out = model.trunk.forward(np.concatenate([deck_h, card_h]), train=False)
        _, _, (da, dp, dn) = nn.triplet_loss(out[:b], out[b:2 * b], out[2 * b:], margin)
        d_hidden = model.trunk.backward(np.concatenate([da, dp, dn]))
        model.deck_net.backward(d_hidden[:b])
        model.card_net.backward(d_hidden[b:])
        analytic = model.named_grads()

        errors: dict[str, float] = {}
        for name, p in model.named_params().items():
            ga = analytic[name]
            flat_idx = np.arange(p.size)
            if max_components is not None and p.size > max_components:
                flat_idx = rng.choice(p.size, size=max_components, replace=False)
            worst = 0.0
            for idx in flat_idx:
                orig = p.flat[idx]
                p.flat[idx] = orig + h
                f_plus = composite_loss(model, deck64, pos64, neg64, margin)
                p.flat[idx] = orig - h
                f_minus = composite_loss(model, deck64, pos64, neg64, margin)
                p.flat[idx] = orig
                fd = (f_plus - f_minus) / (2 * h)
                worst = max(worst, nn._rel_error(float(ga.flat[idx]), fd))
            errors[name] = worst
        return nn.GradientCheckReport(errors, tolerance)
    finally:
        for layer, params in saved_params:
            layer.params = params
        for net, dtype in zip(nets, saved_dtypes):
            net.set_dtype(dtype)


# ---------------------------------------------------------------------------
# Checkpoints: parameter blob + JSON sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(path) -> str:
    return f"{path}.json"


def save_checkpoint(model: CprModel, path, metadata: Mapping | None = None) -> str:
    """Write ``path`` (parameter blob) and ``path``.json; returns the digest."""
    digest = nn.save_params(path, model.named_params())
    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "params_digest": digest,
        "config_hash": model.config_hash,
        "model_config": model.config.to_dict(),
        "metadata": dict(metadata or {}),
        "saved_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
    return digest


def load_checkpoint(path, expect_config_hash: str | None = None) -> CprModel:
    try:
        with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint sidecar: {exc}") from exc
    version = sidecar.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    config = ModelConfig.from_dict(sidecar["model_config"])
    if expect_config_hash is not None and config.config_hash != expect_config_hash:
        raise ConfigMismatchError(
            f"checkpoint was trained under representation config "
            f"{config.config_hash}, active config is {expect_config_hash}")
    try:
        params = nn.load_params(path)
    except (OSError, nn.BlobFormatError) as exc:
        raise CheckpointError(f"cannot read checkpoint parameters: {exc}") from exc
    model = CprModel(config)
    model.card_net.load_named_params(params, "card.")
    model.deck_net.load_named_params(params, "deck.")
    model.trunk.load_named_params(params, "trunk.")
    if model.params_digest() != sidecar.get("params_digest"):
        raise CheckpointError("checkpoint digest mismatch after load")
    return model


def checkpoint_metadata(path) -> dict:
    with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
        return json.load(fh)

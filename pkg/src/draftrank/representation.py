"""Card vectors and deck tensors.

A representation config is an ordered list of channels; a card's vector is
the concatenation of its channel encodings. Channels:

- ``random``: keyed, counter-based standard-normal vector. Deterministic in
  (card_id, seed), so vectors never need storage, but carries no semantics
  and cannot generalize to unseen cards.
- ``features``: scaled numerics, multi-hot categoricals, and a text block
  (either signed hashed token unigrams+bigrams of the rules text, or a
  precomputed per-card vector supplied from outside).
- ``meta``: the 16 usage statistics, counts log1p-scaled, rates raw.
- ``image_latent``: a precomputed autoencoder latent looked up by card id.

Partial decks become a fixed 45-row matrix: one card vector per occupied
row in canonical (sorted by card_id) order, remaining rows zero.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .cards import Card, CardDb, MetaStats, MetaTable, META_FIELD_NAMES, META_FIELD_KINDS

DECK_ROWS = 45

DEFAULT_RANDOM_DIM = 1024
DEFAULT_TEXT_DIM = 384

DEFAULT_NUMERIC_SPEC: tuple[tuple[str, float], ...] = (
    ("mana_value", 16.0),
    ("power", 16.0),
    ("toughness", 16.0),
)
FLAG_FIELDS = ("power_present", "power_star", "toughness_present", "toughness_star")
DEFAULT_TYPE_VOCAB = ("artifact", "battle", "creature", "enchantment", "instant",
                      "kindred", "land", "planeswalker", "sorcery", "tribal")
DEFAULT_SUPERTYPE_VOCAB = ("basic", "legendary", "snow", "world")

COLOR_ORDER = "WUBRG"
RARITY_ORDER = ("common", "uncommon", "rare", "mythic", "special")


class RepresentationError(ValueError):
    """Missing source data or malformed representation config."""


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TextMode:
    kind: str = "hashed"  # "hashed" | "precomputed"
    dim: int = DEFAULT_TEXT_DIM

    def __post_init__(self):
        if self.kind not in ("hashed", "precomputed"):
            raise RepresentationError(f"unknown text mode {self.kind!r}")
        if self.dim < 0:
            raise RepresentationError("text dim must be >= 0")


@dataclass(frozen=True)
class RandomChannel:
    dim: int = DEFAULT_RANDOM_DIM
    seed: int = 0
    kind: str = field(default="random", init=False)


@dataclass(frozen=True)
class FeaturesChannel:
    numeric_spec: tuple[tuple[str, float], ...] = DEFAULT_NUMERIC_SPEC
    type_vocab: tuple[str, ...] = DEFAULT_TYPE_VOCAB
    supertype_vocab: tuple[str, ...] = DEFAULT_SUPERTYPE_VOCAB
    text_mode: TextMode = TextMode()
    kind: str = field(default="features", init=False)

    @property
    def structured_dim(self) -> int:
        return (len(self.numeric_spec) + len(FLAG_FIELDS) + len(COLOR_ORDER)
                + len(RARITY_ORDER) + len(self.type_vocab) + len(self.supertype_vocab))

    @property
    def dim(self) -> int:
        return self.structured_dim + self.text_mode.dim


@dataclass(frozen=True)
class MetaChannel:
    kind: str = field(default="meta", init=False)

    @property
    def dim(self) -> int:
        return len(META_FIELD_NAMES)


@dataclass(frozen=True)
class ImageLatentChannel:
    dim: int = 1024
    kind: str = field(default="image_latent", init=False)


Channel = RandomChannel | FeaturesChannel | MetaChannel | ImageLatentChannel


def _channel_to_dict(ch: Channel) -> dict:
    if isinstance(ch, RandomChannel):
        return {"kind": "random", "dim": ch.dim, "seed": ch.seed}
    if isinstance(ch, FeaturesChannel):
        return {"kind": "features",
                "numeric_spec": [[n, s] for n, s in ch.numeric_spec],
                "type_vocab": list(ch.type_vocab),
                "supertype_vocab": list(ch.supertype_vocab),
                "text_mode": {"kind": ch.text_mode.kind, "dim": ch.text_mode.dim}}
    if isinstance(ch, MetaChannel):
        return {"kind": "meta"}
    if isinstance(ch, ImageLatentChannel):
        return {"kind": "image_latent", "dim": ch.dim}
    raise RepresentationError(f"unknown channel {ch!r}")


def _channel_from_dict(d: dict) -> Channel:
    kind = d.get("kind")
    if kind == "random":
        return RandomChannel(dim=int(d.get("dim", DEFAULT_RANDOM_DIM)),
                             seed=int(d.get("seed", 0)))
    if kind == "features":
        tm = d.get("text_mode", {})
        return FeaturesChannel(
            numeric_spec=tuple((str(n), float(s))
                               for n, s in d.get("numeric_spec", DEFAULT_NUMERIC_SPEC)),
            type_vocab=tuple(d.get("type_vocab", DEFAULT_TYPE_VOCAB)),
            supertype_vocab=tuple(d.get("supertype_vocab", DEFAULT_SUPERTYPE_VOCAB)),
            text_mode=TextMode(kind=tm.get("kind", "hashed"),
                               dim=int(tm.get("dim", DEFAULT_TEXT_DIM))))
    if kind == "meta":
        return MetaChannel()
    if kind == "image_latent":
        return ImageLatentChannel(dim=int(d.get("dim", 1024)))
    raise RepresentationError(f"unknown channel kind {kind!r}")


@dataclass(frozen=True)
class RepresentationConfig:
    channels: tuple[Channel, ...]

    def __post_init__(self):
        if not self.channels:
            raise RepresentationError("representation needs at least one channel")
        if self.total_dim <= 0:
            raise RepresentationError("total_dim must be positive")

    @property
    def total_dim(self) -> int:
        return sum(ch.dim for ch in self.channels)

    def to_dict(self) -> dict:
        return {"channels": [_channel_to_dict(ch) for ch in self.channels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "RepresentationConfig":
        return cls(channels=tuple(_channel_from_dict(c) for c in d.get("channels", [])))

    @classmethod
    def from_json(cls, text: str) -> "RepresentationConfig":
        return cls.from_dict(json.loads(text))

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def features_config(text_dim: int = DEFAULT_TEXT_DIM) -> RepresentationConfig:
    return RepresentationConfig((FeaturesChannel(text_mode=TextMode("hashed", text_dim)),))


def features_meta_config(text_dim: int = DEFAULT_TEXT_DIM) -> RepresentationConfig:
    return RepresentationConfig((FeaturesChannel(text_mode=TextMode("hashed", text_dim)),
                                 MetaChannel()))


def random_config(dim: int = DEFAULT_RANDOM_DIM, seed: int = 0) -> RepresentationConfig:
    return RepresentationConfig((RandomChannel(dim=dim, seed=seed),))


# ---------------------------------------------------------------------------
# Channel encoders
# ---------------------------------------------------------------------------

def encode_random(card_id: str, dim: int = DEFAULT_RANDOM_DIM, seed: int = 0) -> np.ndarray:
    """Standard-normal vector keyed by (card_id, seed).

    Uses a counter-based generator (Philox) keyed by a digest of the id, so
    the result is a pure function of its arguments in any process.
    """
    if dim < 1:
        raise RepresentationError(f"random dim must be >= 1, got {dim}")
    digest = hashlib.blake2b(f"{seed}\x00{card_id}".encode("utf-8"),
                             digest_size=16).digest()
    key = int.from_bytes(digest, "little")
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(dim).astype(np.float32)


_TOKEN_RE = re.compile(r"[a-z0-9'+/-]+")


def _text_tokens(text: str) -> list[str]:
    unigrams = _TOKEN_RE.findall(text.lower())
    bigrams = [f"{a} {b}" for a, b in zip(unigrams, unigrams[1:])]
    return unigrams + bigrams


def hashed_text_vector(text: str, dim: int) -> np.ndarray:
    """Signed feature hashing of token unigrams+bigrams, L2-normalized."""
    vec = np.zeros(dim, dtype=np.float32)
    if dim == 0:
        return vec
    for token in _text_tokens(text):
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"),
                                           digest_size=8).digest(), "little")
        sign = 1.0 if h & (1 << 63) else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def encode_features(card: Card, channel: FeaturesChannel,
                    text_vectors: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """[scaled numerics | presence/star flags | colors | rarity | types |
    supertypes | text block]."""
    numerics = []
    for name, scale in channel.numeric_spec:
        raw = getattr(card, name, None)
        numerics.append(0.0 if raw is None else float(raw) / scale)
    flags = [
        1.0 if card.power is not None else 0.0,
        1.0 if card.power_star else 0.0,
        1.0 if card.toughness is not None else 0.0,
        1.0 if card.toughness_star else 0.0,
    ]
    colors = [1.0 if c in card.colors else 0.0 for c in COLOR_ORDER]
    rarity = [1.0 if card.rarity == r else 0.0 for r in RARITY_ORDER]
    lower_types = {t.lower() for t in card.types}
    lower_supers = {t.lower() for t in card.supertypes}
    types = [1.0 if t in lower_types else 0.0 for t in channel.type_vocab]
    supers = [1.0 if t in lower_supers else 0.0 for t in channel.supertype_vocab]
    structured = np.array(numerics + flags + colors + rarity + types + supers,
                          dtype=np.float32)
    tm = channel.text_mode
    if tm.kind == "hashed":
        text = hashed_text_vector(card.oracle_text, tm.dim)
    else:
        if text_vectors is None or card.card_id not in text_vectors:
            raise RepresentationError(
                f"no precomputed text vector for card {card.card_id!r}")
        text = np.asarray(text_vectors[card.card_id], dtype=np.float32)
        if text.shape != (tm.dim,):
            raise RepresentationError(
                f"text vector for {card.card_id!r} has dim {text.shape}, "
                f"expected ({tm.dim},)")
    return np.concatenate([structured, text])


def encode_meta(stats: MetaStats) -> np.ndarray:
    """Counts log1p-scaled, rates passed through, schema order."""
    out = np.empty(len(META_FIELD_NAMES), dtype=np.float32)
    for i, name in enumerate(META_FIELD_NAMES):
        v = stats.values[i]
        out[i] = np.log1p(v) if META_FIELD_KINDS[name] == "count" else v
    return out


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CardVector:
    card_id: str
    values: np.ndarray
    config_hash: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise RepresentationError(f"non-finite card vector for {self.card_id!r}")


@dataclass
class CardSources:
    """External per-card data feeding channels that need lookups."""

    meta: MetaTable | None = None
    text_vectors: dict[str, np.ndarray] | None = None
    image_latents: dict[str, np.ndarray] | None = None


class Vectorizer:
    """Caches the card_id -> vector map for one config over one card DB."""

    def __init__(self, config: RepresentationConfig, card_db: CardDb,
                 sources: CardSources | None = None):
        self.config = config
        self.card_db = card_db
        self.sources = sources or CardSources()
        self._cache: dict[str, np.ndarray] = {}

    @property
    def total_dim(self) -> int:
        return self.config.total_dim

    @property
    def config_hash(self) -> str:
        return self.config.config_hash

    def _encode(self, card: Card) -> np.ndarray:
        parts = []
        for ch in self.config.channels:
            if isinstance(ch, RandomChannel):
                parts.append(encode_random(card.card_id, ch.dim, ch.seed))
            elif isinstance(ch, FeaturesChannel):
                parts.append(encode_features(card, ch, self.sources.text_vectors))
            elif isinstance(ch, MetaChannel):
                if self.sources.meta is None:
                    raise RepresentationError("meta channel configured but no meta table")
                parts.append(encode_meta(self.sources.meta.get(card.card_id)))
            elif isinstance(ch, ImageLatentChannel):
                latents = self.sources.image_latents
                if latents is None or card.card_id not in latents:
                    raise RepresentationError(
                        f"no image latent for card {card.card_id!r}")
                latent = np.asarray(latents[card.card_id], dtype=np.float32)
                if latent.shape != (ch.dim,):
                    raise RepresentationError(
                        f"image latent for {card.card_id!r} has shape {latent.shape}, "
                        f"expected ({ch.dim},)")
                parts.append(latent)
        vec = np.concatenate(parts)
        if vec.shape != (self.total_dim,):
            raise RepresentationError(
                f"composed vector dim {vec.shape} != config total {self.total_dim}")
        return vec

    def vector(self, card_id: str) -> np.ndarray:
        cached = self._cache.get(card_id)
        if cached is None:
            if card_id not in self.card_db:
                raise RepresentationError(f"unknown card {card_id!r}")
            cached = self._encode(self.card_db[card_id])
            self._cache[card_id] = cached
        return cached

    def card_vector(self, card_id: str) -> CardVector:
        return CardVector(card_id=card_id, values=self.vector(card_id),
                          config_hash=self.config_hash)

    def matrix(self, card_ids: Iterable[str]) -> np.ndarray:
        return np.stack([self.vector(cid) for cid in card_ids])


def compose_card_vector(card: Card, config: RepresentationConfig,
                        sources: CardSources | None = None) -> CardVector:
    """One-off composition without a persistent cache."""
    db = CardDb([card])
    return Vectorizer(config, db, sources).card_vector(card.card_id)


# ---------------------------------------------------------------------------
# Deck tensors
# ---------------------------------------------------------------------------

@dataclass
class DeckTensor:
    matrix: np.ndarray  # (DECK_ROWS, total_dim) float32
    occupied_rows: int


def build_deck_tensor(pool: Iterable[str], vectors, dim: int | None = None) -> DeckTensor:
    """Stack the pool's card vectors in canonical order, zero-padded to 45.

    ``vectors`` is a Vectorizer or any mapping card_id -> vector. Sorting by
    card_id makes equal multisets produce bitwise-equal tensors regardless
    of input order.
    """
    ids = sorted(pool)
    if len(ids) > DECK_ROWS:
        raise ValueError(f"pool of {len(ids)} exceeds {DECK_ROWS} cards")
    lookup = vectors.vector if hasattr(vectors, "vector") else vectors.__getitem__
    if dim is None:
        if hasattr(vectors, "total_dim"):
            dim = vectors.total_dim
        elif ids:
            dim = len(lookup(ids[0]))
        else:
            raise ValueError("empty pool with a plain mapping needs an explicit dim")
    out = np.zeros((DECK_ROWS, dim), dtype=np.float32)
    for row, cid in enumerate(ids):
        vec = np.asarray(lookup(cid), dtype=np.float32)
        if vec.shape != (dim,):
            raise ValueError(f"vector for {cid!r} has shape {vec.shape}, expected ({dim},)")
        out[row] = vec
    return DeckTensor(matrix=out, occupied_rows=len(ids))


# ---------------------------------------------------------------------------
# Precomputed vector files: JSONL of {card_id, values}
# ---------------------------------------------------------------------------

def load_vector_jsonl(source) -> dict[str, np.ndarray]:
    from .cards import _read_text
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(_read_text(source).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            out[str(rec["card_id"])] = np.asarray(rec["values"], dtype=np.float32)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise RepresentationError(f"vector JSONL line {lineno}: {exc}") from exc
    return out


def write_vector_jsonl(vectors: Mapping[str, np.ndarray], sink) -> None:
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for card_id in sorted(vectors):
            values = [float(v) for v in np.asarray(vectors[card_id]).ravel()]
            fh.write(json.dumps({"card_id": card_id, "values": values}) + "\n")
    finally:
        if own:
            fh.close()

"""Synthetic card sets and simulated drafts.

Desk-scale stand-ins for real pick logs: cards with randomized but
plausible attributes, and drafters that either pick uniformly (the chance
baseline) or follow a planted utility that is linear in the card's
structured features plus a color-synergy bonus with the current pool. The
planted utility is shared across generated sets, so a model trained on one
set can in principle generalize to another through features alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cards import Card, PickEvent
from .representation import FeaturesChannel, TextMode, encode_features

PACKS_PER_DRAFT = 3
PICKS_PER_PACK = 15

_WORDS = ("flying", "vigilance", "haste", "deathtouch", "lifelink", "menace",
          "ward", "draw", "card", "damage", "target", "creature", "destroy",
          "exile", "counter", "token", "sacrifice", "scry", "gain", "life")
_TYPES = ("creature", "instant", "sorcery", "enchantment", "artifact", "land")
_RARITY_WEIGHTS = (("common", 0.55), ("uncommon", 0.28), ("rare", 0.13),
                   ("mythic", 0.03), ("special", 0.01))

# Structured features only: the planted utility never depends on rules text.
STRUCTURED_CHANNEL = FeaturesChannel(text_mode=TextMode("hashed", 0))


def make_card_set(set_code: str, n_cards: int, seed: int) -> list[Card]:
    """Generate a random card set with stable ids ``<set>-<index>``."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    rarities = [r for r, _ in _RARITY_WEIGHTS]
    rarity_p = np.array([w for _, w in _RARITY_WEIGHTS])
    cards = []
    for i in range(n_cards):
        n_colors = int(rng.choice([0, 1, 1, 1, 2, 2, 3]))
        chosen = set(rng.choice(list("WUBRG"), size=n_colors, replace=False)) \
            if n_colors else set()
        colors = "".join(c for c in "WUBRG" if c in chosen)
        mana = int(rng.integers(0, 9))
        primary = str(rng.choice(_TYPES[:5]))
        power = toughness = None
        if primary == "creature":
            power = int(rng.integers(0, 7))
            toughness = int(rng.integers(1, 8))
        n_words = int(rng.integers(0, 9))
        text = " ".join(rng.choice(_WORDS, size=n_words)) if n_words else ""
        cards.append(Card(
            card_id=f"{set_code.lower()}-{i:03d}",
            name=f"{set_code} Card {i:03d}",
            set_code=set_code,
            mana_value=mana,
            colors=colors,
            rarity=str(rng.choice(rarities, p=rarity_p)),
            types=(primary,),
            supertypes=("legendary",) if rng.random() < 0.08 else (),
            power=power, toughness=toughness,
            oracle_text=text,
        ))
    return cards


class UniformPicker:
    """Chance drafter: picks uniformly at random from the pack."""

    def pick(self, pack: list[Card], pool: list[Card],
             rng: np.random.Generator) -> Card:
        return pack[int(rng.integers(0, len(pack)))]


class PlantedUtilityPicker:
    """Drafter with a fixed utility over structured card features plus a
    pool color-synergy term and optional pick noise.

    score(c, P) = w . phi(c) + q * phi(c)' M phi(c)
                  + synergy * |{p in P : colors(p) overlap colors(c)}| / max(|P|, 1)

    The quadratic interaction term makes the concept rich enough that a
    model cannot absorb it from a handful of batches. ``noise_temp`` adds
    Gumbel noise to the scores before the argmax, emulating inconsistent
    human decisions; noise comes from the simulation's generator, so the
    picker itself stays stateless. Weights depend only on ``weight_seed``,
    so sets generated with different card seeds share one preference model.
    """

    def __init__(self, weight_seed: int = 0, synergy: float = 0.35,
                 quad: float = 1.0, noise_temp: float = 0.0):
        rng = np.random.default_rng(np.random.SeedSequence(weight_seed, spawn_key=(13,)))
        dim = STRUCTURED_CHANNEL.dim
        self.weights = rng.normal(0.0, 1.0, size=dim)
        self.interactions = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, dim))
        self.quad = quad
        self.synergy = synergy
        self.noise_temp = noise_temp
        self._utility_cache: dict[str, float] = {}
        self._mask_cache: dict[str, int] = {}

    def utility(self, card: Card) -> float:
        found = self._utility_cache.get(card.card_id)
        if found is None:
            phi = encode_features(card, STRUCTURED_CHANNEL).astype(np.float64)
            found = float(self.weights @ phi + self.quad * phi @ self.interactions @ phi)
            self._utility_cache[card.card_id] = found
        return found

    def _mask(self, card: Card) -> int:
        found = self._mask_cache.get(card.card_id)
        if found is None:
            found = sum(1 << i for i, color in enumerate("WUBRG")
                        if color in card.colors)
            self._mask_cache[card.card_id] = found
        return found

    def score(self, card: Card, pool: list[Card]) -> float:
        base = self.utility(card)
        cmask = self._mask(card)
        if not pool or not cmask:
            return base
        shared = sum(1 for p in pool if self._mask(p) & cmask)
        return base + self.synergy * shared / len(pool)

    def pick(self, pack: list[Card], pool: list[Card],
             rng: np.random.Generator | None = None) -> Card:
        pool_masks = [self._mask(p) for p in pool]
        scores = []
        for card in pack:
            base = self.utility(card)
            cmask = self._mask(card)
            if pool_masks and cmask:
                shared = sum(1 for m in pool_masks if m & cmask)
                base += self.synergy * shared / len(pool_masks)
            scores.append(base)
        if self.noise_temp > 0.0:
            if rng is None:
                raise ValueError("noisy picker needs the simulation generator")
            gumbel = -np.log(-np.log(rng.random(len(pack))))
            scores = [s + self.noise_temp * g for s, g in zip(scores, gumbel)]
        return min((-s, c.card_id, c) for s, c in zip(scores, pack))[2]


def simulate_drafts(cards: list[Card], n_drafts: int, seed: int,
                    picker=None, draft_prefix: str = "sim") -> list[PickEvent]:
    """Simulate standard drafts: 3 packs, picks 1..15, pack size 16 - pick.

    Each pack is sampled fresh without replacement from the set, which
    reproduces the standard pack-size distribution without modelling the
    other seats. ``picker`` defaults to the uniform drafter.
    """
    if len(cards) < PICKS_PER_PACK:
        raise ValueError(f"need at least {PICKS_PER_PACK} cards, got {len(cards)}")
    picker = picker or UniformPicker()
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(17,)))
    events: list[PickEvent] = []
    for d in range(n_drafts):
        draft_id = f"{draft_prefix}-{d:06d}"
        pool: list[Card] = []
        for pack_number in range(1, PACKS_PER_DRAFT + 1):
            for pick_number in range(1, PICKS_PER_PACK + 1):
                size = PICKS_PER_PACK + 1 - pick_number
                idx = rng.choice(len(cards), size=size, replace=False)
                pack = [cards[j] for j in idx]
                chosen = picker.pick(pack, pool, rng)
                events.append(PickEvent(
                    draft_id=draft_id,
                    pack_number=pack_number,
                    pick_number=pick_number,
                    pack=tuple(c.card_id for c in pack),
                    pool=tuple(c.card_id for c in pool),
                    picked=chosen.card_id,
                ))
                pool.append(chosen)
    return events


def uniform_random_baseline(pack_sizes=None) -> float:
    """Expected top-1 accuracy of chance predictions over the standard
    pack-size distribution: mean over sizes k of 1/k."""
    if pack_sizes is None:
        pack_sizes = [PICKS_PER_PACK + 1 - q for q in range(1, PICKS_PER_PACK + 1)]
    return float(np.mean([1.0 / k for k in pack_sizes]))


@dataclass
class PlantedBenchmark:
    """Two disjoint synthetic sets sharing one planted preference model."""

    cards_a: list[Card]
    cards_b: list[Card]
    picker: PlantedUtilityPicker


def make_planted_benchmark(seed: int = 0, n_cards: int = 150,
                           synergy: float = 0.35, quad: float = 1.0,
                           noise_temp: float = 0.0) -> PlantedBenchmark:
    picker = PlantedUtilityPicker(weight_seed=seed, synergy=synergy, quad=quad,
                                  noise_temp=noise_temp)
    return PlantedBenchmark(
        cards_a=make_card_set("SYA", n_cards, seed=seed * 2 + 1),
        cards_b=make_card_set("SYB", n_cards, seed=seed * 2 + 2),
        picker=picker,
    )

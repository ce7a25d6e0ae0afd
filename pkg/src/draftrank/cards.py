"""Card database, per-card meta statistics, and draft pick-log ingestion.

Three input families are canonicalized here:

- card databases: a JSON array of card records;
- meta statistics: a wide CSV with one row per card and a schema mapping
  the 16 stat names onto its headers;
- pick logs: either the canonical JSONL interchange format (one pick
  event per line) or vendor-style wide CSVs with per-card indicator and
  count columns, which the importer converts into the same events.

All parsers are pure functions over their input bytes and safe to run
per-file in parallel.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

COLOR_ORDER = "WUBRG"
RARITIES = ("common", "uncommon", "rare", "mythic", "special")

MAX_PACK = 15
MAX_POOL = 45


class CardDataError(ValueError):
    """Malformed card database, meta CSV, or pick log input."""


def _canonical_colors(raw) -> str:
    if raw is None:
        raw = ""
    if isinstance(raw, (list, tuple)):
        raw = "".join(raw)
    letters = set(str(raw).upper())
    bad = letters - set(COLOR_ORDER)
    if bad:
        raise CardDataError(f"unknown color letters {sorted(bad)!r}")
    return "".join(c for c in COLOR_ORDER if c in letters)


def _parse_pt(raw) -> tuple[int | None, bool]:
    """Power/toughness cell -> (value, star_flag).

    Plain integers parse; anything variable ("*", "1+*", "X") maps to the
    star flag with no numeric value; absent stays absent.
    """
    if raw is None or raw == "":
        return None, False
    try:
        return int(raw), False
    except (TypeError, ValueError):
        return None, True


@dataclass(frozen=True)
class Card:
    card_id: str
    name: str
    set_code: str
    mana_value: int
    colors: str  # canonical WUBRG-ordered subset
    rarity: str
    types: tuple[str, ...]
    supertypes: tuple[str, ...] = ()
    subtypes: tuple[str, ...] = ()
    power: int | None = None
    power_star: bool = False
    toughness: int | None = None
    toughness_star: bool = False
    oracle_text: str = ""
    image_ref: str | None = None

    def __post_init__(self):
        if self.mana_value < 0:
            raise CardDataError(f"{self.card_id}: mana_value must be >= 0")
        if self.rarity not in RARITIES:
            raise CardDataError(f"{self.card_id}: unknown rarity {self.rarity!r}")
        if self.power_star and self.power is not None:
            raise CardDataError(f"{self.card_id}: star power cannot carry a value")
        if self.toughness_star and self.toughness is not None:
            raise CardDataError(f"{self.card_id}: star toughness cannot carry a value")


def _card_from_record(rec: dict) -> Card:
    for required in ("card_id", "name", "set_code", "mana_value", "colors",
                     "rarity", "types"):
        if required not in rec:
            raise CardDataError(f"card record missing required field {required!r} "
                                f"(record: {rec.get('card_id') or rec.get('name') or '?'})")
    power, power_star = _parse_pt(rec.get("power"))
    toughness, toughness_star = _parse_pt(rec.get("toughness"))
    return Card(
        card_id=str(rec["card_id"]),
        name=str(rec["name"]),
        set_code=str(rec["set_code"]),
        mana_value=int(rec["mana_value"]),
        colors=_canonical_colors(rec["colors"]),
        rarity=str(rec["rarity"]).lower(),
        types=tuple(rec["types"]),
        supertypes=tuple(rec.get("supertypes", ())),
        subtypes=tuple(rec.get("subtypes", ())),
        power=power, power_star=power_star,
        toughness=toughness, toughness_star=toughness_star,
        oracle_text=str(rec.get("oracle_text", "")),
        image_ref=rec.get("image_ref"),
    )


def parse_card_db(source) -> list[Card]:
    """Parse a canonical JSON card database (bytes, text, or file object)."""
    text = _read_text(source)
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CardDataError(f"malformed card database JSON: {exc}") from exc
    if not isinstance(records, list):
        raise CardDataError("card database must be a JSON array")
    cards = [_card_from_record(rec) for rec in records]
    seen: set[str] = set()
    for card in cards:
        if card.card_id in seen:
            raise CardDataError(f"duplicate card_id {card.card_id!r}")
        seen.add(card.card_id)
    return cards


class CardDb:
    """Indexed card collection: by id, by name, grouped by set."""

    def __init__(self, cards: Iterable[Card]):
        self.by_id: dict[str, Card] = {}
        for card in cards:
            if card.card_id in self.by_id:
                raise CardDataError(f"duplicate card_id {card.card_id!r}")
            self.by_id[card.card_id] = card
        self.by_name: dict[str, str] = {}
        for card in self.by_id.values():
            self.by_name.setdefault(card.name, card.card_id)

    @classmethod
    def parse(cls, source) -> "CardDb":
        return cls(parse_card_db(source))

    def __len__(self):
        return len(self.by_id)

    def __contains__(self, card_id: str):
        return card_id in self.by_id

    def __getitem__(self, card_id: str) -> Card:
        return self.by_id[card_id]

    def cards(self) -> list[Card]:
        return list(self.by_id.values())

    def sets(self) -> list[str]:
        return sorted({c.set_code for c in self.by_id.values()})

    def set_cards(self, set_code: str) -> list[Card]:
        return [c for c in self.by_id.values() if c.set_code == set_code]

    def to_json(self) -> str:
        out = []
        for c in self.by_id.values():
            rec = {
                "card_id": c.card_id, "name": c.name, "set_code": c.set_code,
                "mana_value": c.mana_value, "colors": c.colors, "rarity": c.rarity,
                "types": list(c.types), "supertypes": list(c.supertypes),
                "subtypes": list(c.subtypes), "oracle_text": c.oracle_text,
            }
            if c.power_star:
                rec["power"] = "*"
            elif c.power is not None:
                rec["power"] = c.power
            if c.toughness_star:
                rec["toughness"] = "*"
            elif c.toughness is not None:
                rec["toughness"] = c.toughness
            if c.image_ref:
                rec["image_ref"] = c.image_ref
            out.append(rec)
        return json.dumps(out, indent=1)


# ---------------------------------------------------------------------------
# Meta statistics
# ---------------------------------------------------------------------------

# 16 per-card usage statistics. Counts are nonnegative magnitudes (log1p
# scaled downstream); rates live in [0,1] and are clamped on read.
DEFAULT_META_FIELDS: tuple[tuple[str, str], ...] = (
    ("seen_count", "count"),
    ("avg_seen", "count"),
    ("pick_count", "count"),
    ("avg_taken_at", "count"),
    ("game_count", "count"),
    ("play_rate", "rate"),
    ("win_rate", "rate"),
    ("opening_hand_game_count", "count"),
    ("opening_hand_win_rate", "rate"),
    ("drawn_game_count", "count"),
    ("drawn_win_rate", "rate"),
    ("ever_drawn_game_count", "count"),
    ("ever_drawn_win_rate", "rate"),
    ("never_drawn_game_count", "count"),
    ("never_drawn_win_rate", "rate"),
    ("pick_rate", "rate"),
)

META_FIELD_NAMES = tuple(name for name, _ in DEFAULT_META_FIELDS)
META_FIELD_KINDS = dict(DEFAULT_META_FIELDS)


@dataclass(frozen=True)
class MetaStats:
    """16 named scalars plus a flag telling real data from imputation."""

    values: tuple[float, ...]
    coverage_flag: bool

    def __post_init__(self):
        if len(self.values) != len(META_FIELD_NAMES):
            raise CardDataError(f"MetaStats needs {len(META_FIELD_NAMES)} values, "
                                f"got {len(self.values)}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(META_FIELD_NAMES, self.values))


def _clamp_stat(name: str, value: float) -> float:
    if META_FIELD_KINDS[name] == "rate":
        return min(1.0, max(0.0, value))
    return max(0.0, value)


class MetaTable:
    """card_id -> MetaStats with per-file column means for imputation."""

    def __init__(self, stats: dict[str, MetaStats], column_means: tuple[float, ...]):
        self.stats = stats
        self.column_means = column_means

    def get(self, card_id: str) -> MetaStats:
        found = self.stats.get(card_id)
        if found is not None:
            return found
        return MetaStats(values=self.column_means, coverage_flag=False)

    def __len__(self):
        return len(self.stats)


def parse_meta_csv(source, schema: Mapping[str, str] | None = None,
                   id_column: str = "card_id") -> MetaTable:
    """Parse per-card statistics from a headered CSV.

    ``schema`` maps each of the 16 stat names to a CSV header; by default
    headers are expected to equal the stat names. Blank cells are imputed
    with the per-file column mean and mark the row as imputed.
    """
    schema = dict(schema) if schema else {name: name for name in META_FIELD_NAMES}
    missing_schema = [n for n in META_FIELD_NAMES if n not in schema]
    if missing_schema:
        raise CardDataError(f"meta schema missing stat names: {missing_schema}")
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CardDataError("meta CSV has no header row")
    headers = set(reader.fieldnames)
    if id_column not in headers:
        raise CardDataError(f"meta CSV missing id column {id_column!r}")
    for name in META_FIELD_NAMES:
        if schema[name] not in headers:
            raise CardDataError(f"meta CSV missing mapped column {schema[name]!r} "
                                f"for stat {name!r}")

    raw_rows: list[tuple[str, list[float | None]]] = []
    sums = [0.0] * len(META_FIELD_NAMES)
    counts = [0] * len(META_FIELD_NAMES)
    for row in reader:
        cells: list[float | None] = []
        for i, name in enumerate(META_FIELD_NAMES):
            raw = (row.get(schema[name]) or "").strip()
            if raw == "":
                cells.append(None)
                continue
            try:
                value = _clamp_stat(name, float(raw))
            except ValueError as exc:
                raise CardDataError(
                    f"meta CSV: bad value {raw!r} in column {schema[name]!r}") from exc
            cells.append(value)
            sums[i] += value
            counts[i] += 1
        raw_rows.append((row[id_column], cells))

    means = tuple(sums[i] / counts[i] if counts[i] else 0.0
                  for i in range(len(META_FIELD_NAMES)))
    stats: dict[str, MetaStats] = {}
    for card_id, cells in raw_rows:
        complete = all(c is not None for c in cells)
        values = tuple(c if c is not None else means[i] for i, c in enumerate(cells))
        stats[card_id] = MetaStats(values=values, coverage_flag=complete)
    return MetaTable(stats, means)


# ---------------------------------------------------------------------------
# Pick events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PickEvent:
    draft_id: str
    pack_number: int
    pick_number: int
    pack: tuple[str, ...]
    pool: tuple[str, ...]
    picked: str

    def to_json(self) -> str:
        return json.dumps({
            "draft_id": self.draft_id,
            "pack_number": self.pack_number,
            "pick_number": self.pick_number,
            "pack": list(self.pack),
            "pool": list(self.pool),
            "picked": self.picked,
        }, sort_keys=True)


def validate_event(event: PickEvent, known_ids=None) -> str | None:
    """Return a rejection reason, or None if the event is acceptable.

    Pool sizes inconsistent with pack/pick position are accepted with a
    warning; logs in the wild are missing picks.
    """
    if not event.pack:
        return "empty_pack"
    if len(event.pack) > MAX_PACK:
        return "pack_too_large"
    if len(set(event.pack)) != len(event.pack):
        return "duplicate_in_pack"
    if event.picked not in event.pack:
        return "picked_not_in_pack"
    if len(event.pool) > MAX_POOL:
        return "pool_too_large"
    if not 1 <= event.pack_number <= 3:
        return "bad_pack_number"
    if not 1 <= event.pick_number <= MAX_PACK:
        return "bad_pick_number"
    if known_ids is not None:
        for cid in (*event.pack, *event.pool):
            if cid not in known_ids:
                return "unknown_card"
    expected_pool = (event.pack_number - 1) * 15 + event.pick_number - 1
    if len(event.pool) != expected_pool:
        log.warning("draft %s P%dP%d: pool size %d, expected %d (kept)",
                    event.draft_id, event.pack_number, event.pick_number,
                    len(event.pool), expected_pool)
    return None


@dataclass
class ImportReport:
    rows: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    def summary(self) -> str:
        rej = ", ".join(f"{k}={v}" for k, v in sorted(self.rejected.items())) or "none"
        return f"{self.accepted}/{self.rows} rows accepted (rejections: {rej})"


@dataclass
class ImportResult:
    events: list[PickEvent]
    report: ImportReport


def _accept(event: PickEvent, known_ids, out: list[PickEvent], report: ImportReport):
    reason = validate_event(event, known_ids)
    if reason is None:
        out.append(event)
        report.accepted += 1
    else:
        report.rejected[reason] += 1


@dataclass(frozen=True)
class WideCsvConventions:
    """Column naming conventions for vendor wide-format pick CSVs."""

    pack_prefix: str = "pack_card_"
    pool_prefix: str = "pool_"
    zero_indexed: bool = False
    draft_id_column: str = "draft_id"
    pack_number_column: str = "pack_number"
    pick_number_column: str = "pick_number"
    pick_column: str = "pick"


def import_wide_pick_csv(source, conventions: WideCsvConventions,
                         name_to_id: Mapping[str, str]) -> ImportResult:
    """Import a wide CSV: one indicator column per pack card, one count
    column per pool card, plus draft/pack/pick columns.

    Rows whose picked card is not offered, or that reference names absent
    from the card database, are dropped and counted, never repaired.
    """
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CardDataError("pick CSV has no header row")
    conv = conventions
    for col in (conv.draft_id_column, conv.pack_number_column,
                conv.pick_number_column, conv.pick_column):
        if col not in reader.fieldnames:
            raise CardDataError(f"pick CSV missing column {col!r}")

    pack_cols: list[tuple[str, str | None, str]] = []  # (column, card_id, name)
    pool_cols: list[tuple[str, str | None, str]] = []
    for colname in reader.fieldnames:
        if colname.startswith(conv.pack_prefix):
            name = colname[len(conv.pack_prefix):]
            pack_cols.append((colname, name_to_id.get(name), name))
        elif colname.startswith(conv.pool_prefix):
            name = colname[len(conv.pool_prefix):]
            pool_cols.append((colname, name_to_id.get(name), name))
    if not pack_cols:
        raise CardDataError(f"pick CSV has no columns with prefix {conv.pack_prefix!r}")

    offset = 1 if conv.zero_indexed else 0
    events: list[PickEvent] = []
    report = ImportReport()
    for row in reader:
        report.rows += 1
        try:
            pack_number = int(row[conv.pack_number_column]) + offset
            pick_number = int(row[conv.pick_number_column]) + offset
        except ValueError:
            report.rejected["bad_numbers"] += 1
            continue
        pack: list[str] = []
        unknown = False
        for colname, cid, _ in pack_cols:
            raw = (row.get(colname) or "").strip()
            if raw and float(raw) > 0:
                if cid is None:
                    unknown = True
                    break
                pack.append(cid)
        if unknown:
            report.rejected["unknown_card"] += 1
            continue
        pool: list[str] = []
        for colname, cid, _ in pool_cols:
            raw = (row.get(colname) or "").strip()
            count = int(float(raw)) if raw else 0
            if count > 0:
                if cid is None:
                    unknown = True
                    break
                pool.extend([cid] * count)
        if unknown:
            report.rejected["unknown_card"] += 1
            continue
        picked_name = (row.get(conv.pick_column) or "").strip()
        picked_id = name_to_id.get(picked_name)
        if picked_id is None:
            report.rejected["unknown_card"] += 1
            continue
        if picked_id not in pack:
            report.rejected["picked_not_in_pack"] += 1
            continue
        event = PickEvent(
            draft_id=row[conv.draft_id_column],
            pack_number=pack_number, pick_number=pick_number,
            pack=tuple(pack), pool=tuple(pool), picked=picked_id,
        )
        _accept(event, None, events, report)
    return ImportResult(events, report)


def parse_pick_jsonl(source, known_ids=None) -> ImportResult:
    """Parse canonical JSONL pick events, one JSON object per line."""
    text = _read_text(source)
    events: list[PickEvent] = []
    report = ImportReport()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        report.rows += 1
        try:
            rec = json.loads(line)
            event = PickEvent(
                draft_id=str(rec["draft_id"]),
                pack_number=int(rec["pack_number"]),
                pick_number=int(rec["pick_number"]),
                pack=tuple(rec["pack"]),
                pool=tuple(rec.get("pool", ())),
                picked=str(rec["picked"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CardDataError(f"picks JSONL line {lineno}: {exc}") from exc
        _accept(event, known_ids, events, report)
    return ImportResult(events, report)


def write_picks_jsonl(events: Sequence[PickEvent], sink) -> None:
    """Write events in the canonical interchange format."""
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for event in events:
            fh.write(event.to_json() + "\n")
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# Train/test splitting
# ---------------------------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[PickEvent]
    test: list[PickEvent]
    split_seed: int
    fraction: float


def split_dataset(events: Sequence[PickEvent], fraction: float,
                  seed: int) -> DatasetSplit:
    """Deterministic split grouped by draft_id.

    Every event of one draft lands on the same side. The train share is
    round(fraction * n_drafts), clamped so both sides stay nonempty.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    draft_ids = sorted({e.draft_id for e in events})
    if len(draft_ids) < 2:
        raise CardDataError("split needs at least 2 distinct draft_ids")
    rng = random.Random(seed)
    rng.shuffle(draft_ids)
    n_train = round(fraction * len(draft_ids))
    n_train = min(max(n_train, 1), len(draft_ids) - 1)
    train_ids = set(draft_ids[:n_train])
    train = [e for e in events if e.draft_id in train_ids]
    test = [e for e in events if e.draft_id not in train_ids]
    return DatasetSplit(train=train, test=test, split_seed=seed, fraction=fraction)


def _read_text(source) -> str:
    """Accept bytes, str, a path, or a file object; return decoded text."""
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        # Heuristic: treat one-line strings that name an existing file as paths.
        if "\n" not in source:
            try:
                with open(source, "rb") as fh:
                    return fh.read().decode("utf-8")
            except (OSError, ValueError):
                pass
        return source
    if hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data

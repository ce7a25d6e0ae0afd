"""Walkthrough: card databases, pick logs, and draft-grouped splitting.

Builds a small synthetic card set, writes it through the canonical JSON and
JSONL interchange formats, re-parses everything, and splits the pick log
80/20 by draft so no draft straddles the boundary.
"""

import io

from draftrank.cards import CardDb, parse_pick_jsonl, split_dataset, write_picks_jsonl
from draftrank.synthetic import make_card_set, simulate_drafts


def main():
    cards = make_card_set("DEM", n_cards=60, seed=1)
    db = CardDb(cards)
    print(f"card database: {len(db)} cards in sets {db.sets()}")
    sample = cards[0]
    print(f"  example: {sample.name} [{sample.colors or 'colorless'}] "
          f"mana {sample.mana_value}, {sample.rarity}, text {sample.oracle_text!r}")

    # canonical JSON round trip
    reparsed = CardDb.parse(db.to_json())
    assert reparsed.by_id == db.by_id
    print("  JSON round trip: identical")

    events = simulate_drafts(cards, n_drafts=10, seed=2)
    print(f"\npick log: {len(events)} events from 10 simulated drafts")
    buf = io.StringIO()
    write_picks_jsonl(events, buf)
    result = parse_pick_jsonl(buf.getvalue(), known_ids=set(db.by_id))
    assert result.events == events
    print(f"  JSONL round trip: identical ({result.report.summary()})")

    split = split_dataset(events, fraction=0.8, seed=7)
    train_drafts = {e.draft_id for e in split.train}
    test_drafts = {e.draft_id for e in split.test}
    print(f"\nsplit: {len(split.train)} train / {len(split.test)} test events")
    print(f"  train drafts {sorted(train_drafts)}")
    print(f"  test drafts  {sorted(test_drafts)}")
    assert not train_drafts & test_drafts


if __name__ == "__main__":
    main()

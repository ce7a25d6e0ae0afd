import { describe, expect, it } from "vitest";

import { matchCards } from "../src/autocomplete.js";
import type { CardInfo } from "../src/types.js";

function card(name: string): CardInfo {
  return { card_id: name.toLowerCase().replace(/ /g, "-"), name,
           colors: "W", mana_value: 2, rarity: "common", types: ["creature"] };
}

const CARDS = [card("Searing Bolt"), card("Sea Serpent"), card("Bolt Hound"),
               card("Quiet Monastery")];

describe("matchCards", () => {
  it("returns nothing for an empty query", () => {
    expect(matchCards(CARDS, "")).toEqual([]);
    expect(matchCards(CARDS, "   ")).toEqual([]);
  });

  it("finds a unique exact name", () => {
    const matches = matchCards(CARDS, "quiet monastery");
    expect(matches.map((c) => c.name)).toEqual(["Quiet Monastery"]);
  });

  it("puts prefix matches before substring matches", () => {
    const matches = matchCards(CARDS, "bolt");
    expect(matches.map((c) => c.name)).toEqual(["Bolt Hound", "Searing Bolt"]);
  });

  it("is case-insensitive", () => {
    expect(matchCards(CARDS, "SEA").map((c) => c.name))
      .toEqual(["Sea Serpent", "Searing Bolt"]);
  });

  it("returns empty for unknown strings", () => {
    expect(matchCards(CARDS, "zzz")).toEqual([]);
  });

  it("honors the limit", () => {
    const many = Array.from({ length: 20 }, (_, i) => card(`Card ${i}`));
    expect(matchCards(many, "card", 5)).toHaveLength(5);
  });
});

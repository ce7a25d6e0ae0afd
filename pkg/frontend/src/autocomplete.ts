/** Card-name autocomplete: case-insensitive, prefix matches before
 * substring matches, ties by name. */

import type { CardInfo } from "./types.js";

export function matchCards(
  cards: CardInfo[], query: string, limit = 8,
): CardInfo[] {
  const needle = query.trim().toLowerCase();
  if (!needle) return [];
  const prefix: CardInfo[] = [];
  const substring: CardInfo[] = [];
  for (const card of cards) {
    const name = card.name.toLowerCase();
    if (name.startsWith(needle)) prefix.push(card);
    else if (name.includes(needle)) substring.push(card);
  }
  const byName = (a: CardInfo, b: CardInfo) => a.name.localeCompare(b.name);
  prefix.sort(byName);
  substring.sort(byName);
  return [...prefix, ...substring].slice(0, limit);
}

/** Browser wiring: binds the API client, session state machine, and the
 * string renderers to the page. One drafting session per tab. */

import { ApiFailure, DraftApi } from "./api.js";
import { matchCards } from "./autocomplete.js";
import { DraftSessionController } from "./state.js";
import type { CardInfo } from "./types.js";
import {
  renderCounters, renderEmbeddingMap, renderError, renderPool, renderRanking,
  renderStrength,
} from "./view.js";

const api = new DraftApi("");

let controller: DraftSessionController | null = null;
let cards: CardInfo[] = [];
let cardIndex = new Map<string, CardInfo>();
let entryPack: string[] = [];

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function showError(err: unknown): void {
  const message = err instanceof ApiFailure
    ? `${err.code}: ${err.message}`
    : String(err);
  el("errors").innerHTML = renderError(message);
  setTimeout(() => { el("errors").innerHTML = ""; }, 6000);
}

function redraw(): void {
  if (!controller) return;
  const view = controller.view();
  el("counters").innerHTML = renderCounters(view.counterLabel, view.pool.length);
  el("ranking").innerHTML = renderRanking(view.pendingRanking ?? []);
  el("pool").innerHTML = renderPool(view.pool, cardIndex);
  el<HTMLButtonElement>("undo").disabled = !view.canUndo;
  el<HTMLButtonElement>("submit-pack").disabled = entryPack.length === 0;
  el("entry-pack").textContent = entryPack.length
    ? entryPack.map((id) => cardIndex.get(id)?.name ?? id).join(", ")
    : "(empty)";
  for (const item of el("ranking").querySelectorAll("li.ranked")) {
    item.addEventListener("click", () => {
      void pick((item as HTMLElement).dataset.card!);
    });
  }
}

async function pick(cardId: string): Promise<void> {
  if (!controller) return;
  try {
    await controller.pick(cardId);
  } catch (err) {
    showError(err);
  }
  redraw();
}

async function boot(): Promise<void> {
  try {
    const { models } = await api.listModels();
    if (!models.length) throw new Error("service hosts no models");
    const model = models[0];
    const setSelect = el<HTMLSelectElement>("set-select");
    setSelect.innerHTML = model.sets
      .map((s) => `<option value="${s}">${s}</option>`).join("");

    el("new-session").addEventListener("click", async () => {
      try {
        const setCode = setSelect.value;
        controller = await DraftSessionController.create(api, setCode, model.model_id);
        const listing = await api.setCards(setCode);
        cards = listing.cards;
        cardIndex = new Map(cards.map((c) => [c.card_id, c]));
        entryPack = [];
        el("session-label").textContent =
          `session ${controller.view().sessionId.slice(0, 8)} (${setCode})`;
        const [strength, projection] = await Promise.all([
          api.setStrength(setCode), api.setProjection(setCode),
        ]);
        el("strength").innerHTML = renderStrength(strength.ranking);
        el("map").innerHTML = renderEmbeddingMap(projection);
        redraw();
      } catch (err) {
        showError(err);
      }
    });

    const search = el<HTMLInputElement>("card-search");
    search.addEventListener("input", () => {
      const matches = matchCards(cards, search.value);
      el("suggestions").innerHTML = matches
        .map((c) => `<li data-card="${c.card_id}">${c.name}</li>`).join("");
      for (const item of el("suggestions").querySelectorAll("li")) {
        item.addEventListener("click", () => {
          entryPack.push((item as HTMLElement).dataset.card!);
          search.value = "";
          el("suggestions").innerHTML = "";
          redraw();
        });
      }
    });

    el("submit-pack").addEventListener("click", async () => {
      if (!controller || !entryPack.length) return;
      try {
        await controller.rankPack(entryPack);
        entryPack = [];
      } catch (err) {
        showError(err);
      }
      redraw();
    });

    el("undo").addEventListener("click", async () => {
      if (!controller) return;
      try {
        await controller.undo();
      } catch (err) {
        showError(err);
      }
      redraw();
    });
  } catch (err) {
    showError(err);
  }
}

document.addEventListener("DOMContentLoaded", () => { void boot(); });

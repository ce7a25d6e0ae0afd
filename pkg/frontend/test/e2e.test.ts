/** Scripted end-to-end session against a live Python service.
 *
 * Drives the same client stack the browser runs (API client, session state
 * machine, renderer) over real HTTP: create a session, enter a 3-card
 * pack, verify the rendered order equals the service order, pick, undo.
 * Requires python3 with the draftrank package installed; run via
 * `npm run test:e2e` (sets DRAFTRANK_E2E=1).
 */

import { type ChildProcess, spawn } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { DraftApi } from "../src/api.js";
import { DraftSessionController } from "../src/state.js";
import { orderDigest, rankingOrder, renderRanking } from "../src/view.js";

const PORT = 8711;
const BASE = `http://127.0.0.1:${PORT}`;
const enabled = process.env.DRAFTRANK_E2E === "1";

async function waitForService(url: string, timeoutMs = 45_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(url);
      if (response.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service did not come up: ${lastError}`);
}

function renderedOrder(html: string): string[] {
  return [...html.matchAll(/data-card="([^"]+)"/g)].map((m) => m[1]);
}

(enabled ? describe : describe.skip)("live service session", () => {
  let service: ChildProcess;

  beforeAll(async () => {
    const here = dirname(fileURLToPath(import.meta.url));
    service = spawn("python3", [join(here, "serve_fixture.py")], {
      env: { ...process.env, PORT: String(PORT) },
      stdio: ["ignore", "inherit", "inherit"],
    });
    await waitForService(`${BASE}/api/models`);
  }, 60_000);

  afterAll(() => {
    service?.kill();
  });

  it("create -> rank 3-card pack -> rendered order == service order -> pick -> undo", async () => {
    const api = new DraftApi(BASE);
    const { models } = await api.listModels();
    expect(models.length).toBeGreaterThan(0);
    const model = models[0];
    const setCode = model.sets[0];

    const controller = await DraftSessionController.create(api, setCode, model.model_id);
    expect(controller.view().counterLabel).toBe("P1P1");

    const { cards } = await api.setCards(setCode);
    const pack = cards.slice(0, 3).map((c) => c.card_id);
    const ranking = await controller.rankPack(pack);
    expect(ranking).toHaveLength(3);
    const distances = ranking.map((r) => r.distance);
    expect([...distances].sort((a, b) => a - b)).toEqual(distances);

    const html = renderRanking(ranking);
    expect(orderDigest(renderedOrder(html))).toBe(orderDigest(rankingOrder(ranking)));

    const best = ranking[0].card_id;
    await controller.pick(best);
    expect(controller.view().pool).toEqual([best]);
    expect(controller.view().counterLabel).toBe("P1P2");
    let serverSide = await api.getSession(controller.view().sessionId);
    expect(serverSide.pool).toEqual([best]);

    await controller.undo();
    expect(controller.view().pool).toEqual([]);
    expect(controller.view().pendingPack).toEqual(pack);
    serverSide = await api.getSession(controller.view().sessionId);
    expect(serverSide.pool).toEqual([]);
    expect(serverSide.pending_pack).toEqual(pack);
  }, 30_000);

  it("ranking payloads from the service render in service order (many packs)", async () => {
    const api = new DraftApi(BASE);
    const { models } = await api.listModels();
    const setCode = models[0].sets[0];
    const controller = await DraftSessionController.create(api, setCode,
                                                           models[0].model_id);
    const { cards } = await api.setCards(setCode);
    for (let i = 0; i < 12; i++) {
      const size = 2 + ((i * 7) % 9);
      const pack = cards.slice(i % 10, (i % 10) + size).map((c) => c.card_id);
      const ranking = await controller.rankPack(pack);
      const html = renderRanking(ranking);
      expect(orderDigest(renderedOrder(html)))
        .toBe(orderDigest(rankingOrder(ranking)));
    }
  }, 30_000);
});

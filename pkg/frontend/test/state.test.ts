import { describe, expect, it } from "vitest";

import { DraftApi } from "../src/api.js";
import { DraftSessionController, deriveCounters } from "../src/state.js";
import type { PackResponse, RankingEntry, SessionSummary } from "../src/types.js";

/** In-memory stand-in for the service, mimicking its session semantics. */
class FakeService {
  pool: string[] = [];
  pending: string[] | null = null;
  history: { pack: string[]; picked: string }[] = [];
  failNextPick = false;
  failNextUndo = false;
  pickCalls = 0;

  api(): DraftApi {
    // never used for network in these tests
    const never = () => { throw new Error("unexpected fetch"); };
    const api = new DraftApi("", never as never);
    api.rankPack = async (_sid, pack): Promise<PackResponse> => {
      this.pending = [...pack];
      const ranking: RankingEntry[] = pack.map((card_id, i) => ({
        card_id, name: card_id, distance: 0.5 + i, rank: i + 1,
      }));
      return { session_id: "s", pool_size: this.pool.length, pack, ranking };
    };
    api.recordPick = async (_sid, cardId) => {
      this.pickCalls += 1;
      if (this.failNextPick) {
        this.failNextPick = false;
        throw new Error("boom");
      }
      if (!this.pending?.includes(cardId)) throw new Error("not pending");
      this.history.push({ pack: this.pending, picked: cardId });
      this.pool.push(cardId);
      this.pending = null;
      return this.summary();
    };
    api.undo = async () => {
      if (this.failNextUndo) {
        this.failNextUndo = false;
        throw new Error("boom");
      }
      const entry = this.history.pop();
      if (!entry) throw new Error("nothing to undo");
      this.pool.pop();
      this.pending = entry.pack;
      return this.summary();
    };
    return api;
  }

  summary(): SessionSummary {
    return {
      session_id: "s", set_code: "TST", model_id: "m",
      pool: [...this.pool], pool_size: this.pool.length,
      picks_made: this.pool.length,
      pack_number: Math.min(Math.floor(this.pool.length / 15) + 1, 3),
      pick_number: (this.pool.length % 15) + 1,
      pending_pack: this.pending ? [...this.pending] : null,
      pending_ranking: null, history_length: this.history.length,
      can_undo: this.history.length > 0,
    };
  }
}

function freshController(service: FakeService): DraftSessionController {
  const controller = new DraftSessionController(service.api(), "s", "TST");
  controller.absorb(service.summary());
  return controller;
}

describe("deriveCounters", () => {
  it("derives pack and pick from picks made, never user input", () => {
    expect(deriveCounters(0)).toEqual({ pack: 1, pick: 1 });
    expect(deriveCounters(14)).toEqual({ pack: 1, pick: 15 });
    expect(deriveCounters(15)).toEqual({ pack: 2, pick: 1 });
    expect(deriveCounters(44)).toEqual({ pack: 3, pick: 15 });
  });
});

describe("DraftSessionController", () => {
  it("walks idle -> pack-pending -> idle on pick", async () => {
    const service = new FakeService();
    const controller = freshController(service);
    expect(controller.view().phase).toBe("idle");
    await controller.rankPack(["a", "b", "c"]);
    expect(controller.view().phase).toBe("pack-pending");
    await controller.pick("b");
    const view = controller.view();
    expect(view.phase).toBe("idle");
    expect(view.pool).toEqual(["b"]);
    expect(view.counterLabel).toBe("P1P2");
    expect(service.pool).toEqual(["b"]);
  });

  it("refuses picks outside the pending pack", async () => {
    const service = new FakeService();
    const controller = freshController(service);
    await controller.rankPack(["a", "b"]);
    await expect(controller.pick("zz")).rejects.toThrow("not in the pending pack");
  });

  it("submits exactly once per pending pack", async () => {
    const service = new FakeService();
    const controller = freshController(service);
    await controller.rankPack(["a", "b"]);
    const first = controller.pick("a");
    await expect(controller.pick("b")).rejects.toThrow(/no pack is pending|already submitted/);
    await first;
    expect(service.pickCalls).toBe(1);
  });

  it("rolls back the optimistic pick on service error and re-arms", async () => {
    const service = new FakeService();
    const controller = freshController(service);
    await controller.rankPack(["a", "b"]);
    service.failNextPick = true;
    await expect(controller.pick("a")).rejects.toThrow("boom");
    const view = controller.view();
    expect(view.pool).toEqual([]);
    expect(view.phase).toBe("pack-pending");
    expect(view.pendingPack).toEqual(["a", "b"]);
    await controller.pick("a"); // token re-armed, retry succeeds
    expect(service.pool).toEqual(["a"]);
  });

  it("undo restores the previous pack and rolls back on error", async () => {
    const service = new FakeService();
    const controller = freshController(service);
    await controller.rankPack(["a", "b"]);
    await controller.pick("a");
    await controller.undo();
    let view = controller.view();
    expect(view.pool).toEqual([]);
    expect(view.pendingPack).toEqual(["a", "b"]);
    expect(service.pool).toEqual([]);

    await controller.pick("b");
    service.failNextUndo = true;
    await expect(controller.undo()).rejects.toThrow("boom");
    view = controller.view();
    expect(view.pool).toEqual(["b"]); // rollback kept the optimistic state out
    expect(view.canUndo).toBe(true);
  });

  it("undo on a fresh session throws", async () => {
    const controller = freshController(new FakeService());
    await expect(controller.undo()).rejects.toThrow("nothing to undo");
  });
});

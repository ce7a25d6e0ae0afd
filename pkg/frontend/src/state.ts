/** Client-side session state machine.
 *
 * Mirrors the service's session exactly (idle -> pack-pending -> idle, with
 * undo restoring the previous pack) so that undo is never ambiguous. Picks
 * are optimistic: the pool updates immediately and rolls back if the
 * service rejects the call. A one-shot token per pending pack makes pick
 * submission exactly-once even under double-clicks.
 */

import { DraftApi } from "./api.js";
import type { RankingEntry, SessionSummary } from "./types.js";

export type Phase = "idle" | "pack-pending";

export interface UiSessionView {
  sessionId: string;
  setCode: string;
  phase: Phase;
  pool: string[];
  packNumber: number;
  pickNumber: number;
  counterLabel: string;
  pendingPack: string[] | null;
  pendingRanking: RankingEntry[] | null;
  canUndo: boolean;
}

interface HistoryEntry {
  pack: string[];
  ranking: RankingEntry[];
  picked: string;
}

export function deriveCounters(poolSize: number): { pack: number; pick: number } {
  // counters always derive from how many picks were made, never from input
  return {
    pack: Math.min(Math.floor(poolSize / 15) + 1, 3),
    pick: (poolSize % 15) + 1,
  };
}

export class DraftSessionController {
  private pool: string[] = [];
  private history: HistoryEntry[] = [];
  private pendingPack: string[] | null = null;
  private pendingRanking: RankingEntry[] | null = null;
  private pickToken: string | null = null;

  constructor(
    private api: DraftApi,
    private sessionId: string,
    private setCode: string,
  ) {}

  static async create(api: DraftApi, setCode: string, modelId: string) {
    const summary = await api.createSession(setCode, modelId);
    const controller = new DraftSessionController(api, summary.session_id, setCode);
    controller.absorb(summary);
    return controller;
  }

  /** Adopt the service's view of the session (source of truth). */
  absorb(summary: SessionSummary): void {
    this.pool = [...summary.pool];
    this.pendingPack = summary.pending_pack ? [...summary.pending_pack] : null;
    this.pendingRanking = summary.pending_ranking
      ? [...summary.pending_ranking] : null;
    this.pickToken = this.pendingPack ? this.tokenFor(this.pendingPack) : null;
  }

  private tokenFor(pack: string[]): string {
    return `${this.pool.length}:${pack.join("|")}`;
  }

  get phase(): Phase {
    return this.pendingPack ? "pack-pending" : "idle";
  }

  view(): UiSessionView {
    const { pack, pick } = deriveCounters(this.pool.length);
    return {
      sessionId: this.sessionId,
      setCode: this.setCode,
      phase: this.phase,
      pool: [...this.pool],
      packNumber: pack,
      pickNumber: pick,
      counterLabel: `P${pack}P${pick}`,
      pendingPack: this.pendingPack ? [...this.pendingPack] : null,
      pendingRanking: this.pendingRanking ? [...this.pendingRanking] : null,
      canUndo: this.history.length > 0,
    };
  }

  /** Rank a pack; the service stores it as pending. Never touches the pool. */
  async rankPack(pack: string[]): Promise<RankingEntry[]> {
    const payload = await this.api.rankPack(this.sessionId, pack);
    this.pendingPack = [...payload.pack];
    // rendered order is the service order, verbatim
    this.pendingRanking = [...payload.ranking];
    this.pickToken = this.tokenFor(this.pendingPack);
    return this.pendingRanking;
  }

  /** Record a pick, optimistically and exactly once per pending pack. */
  async pick(cardId: string): Promise<void> {
    if (!this.pendingPack || !this.pendingRanking) {
      throw new Error("no pack is pending");
    }
    if (!this.pendingPack.includes(cardId)) {
      throw new Error(`${cardId} is not in the pending pack`);
    }
    if (this.pickToken === null) {
      throw new Error("pick already submitted for this pack");
    }
    const token = this.pickToken;
    this.pickToken = null; // consume before awaiting: exactly-once
    const snapshot = {
      pool: [...this.pool],
      pack: this.pendingPack,
      ranking: this.pendingRanking,
      history: this.history.length,
    };
    // optimistic local apply
    this.history.push({ pack: snapshot.pack, ranking: snapshot.ranking,
                        picked: cardId });
    this.pool.push(cardId);
    this.pendingPack = null;
    this.pendingRanking = null;
    try {
      await this.api.recordPick(this.sessionId, cardId);
    } catch (err) {
      // roll back and re-arm the token
      this.pool = snapshot.pool;
      this.history.length = snapshot.history;
      this.pendingPack = snapshot.pack;
      this.pendingRanking = snapshot.ranking;
      this.pickToken = token;
      throw err;
    }
  }

  /** Undo the last pick, optimistically; its pack becomes pending again. */
  async undo(): Promise<void> {
    const entry = this.history.pop();
    if (!entry) throw new Error("nothing to undo");
    const snapshot = { pool: [...this.pool], pending: this.pendingPack,
                       ranking: this.pendingRanking, token: this.pickToken };
    this.pool.pop();
    this.pendingPack = entry.pack;
    this.pendingRanking = entry.ranking;
    this.pickToken = this.tokenFor(entry.pack);
    try {
      await this.api.undo(this.sessionId);
    } catch (err) {
      this.history.push(entry);
      this.pool = snapshot.pool;
      this.pendingPack = snapshot.pending;
      this.pendingRanking = snapshot.ranking;
      this.pickToken = snapshot.token;
      throw err;
    }
  }
}

/** Thin typed client for the draftrank service. No retries, no caching:
 * the state machine above decides what to do with failures. */

import type {
  CardInfo, ModelInfo, PackResponse, ProjectionPayload, SessionSummary,
  StrengthPayload,
} from "./types.js";

export class ApiFailure extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class DraftApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ApiFailure(
        response.status,
        body?.code ?? "unknown_error",
        body?.message ?? `request failed with ${response.status}`,
      );
    }
    return body as T;
  }

  listModels(): Promise<{ models: ModelInfo[] }> {
    return this.request("/api/models");
  }

  setCards(setCode: string): Promise<{ set_code: string; cards: CardInfo[] }> {
    return this.request(`/api/sets/${encodeURIComponent(setCode)}/cards`);
  }

  setStrength(setCode: string): Promise<StrengthPayload> {
    return this.request(`/api/sets/${encodeURIComponent(setCode)}/strength`);
  }

  setProjection(setCode: string): Promise<ProjectionPayload> {
    return this.request(`/api/sets/${encodeURIComponent(setCode)}/projection`);
  }

  createSession(setCode: string, modelId: string): Promise<SessionSummary> {
    return this.request("/api/sessions", {
      method: "POST",
      body: JSON.stringify({ set_code: setCode, model_id: modelId }),
    });
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.request(`/api/sessions/${sessionId}`);
  }

  rankPack(sessionId: string, pack: string[]): Promise<PackResponse> {
    return this.request(`/api/sessions/${sessionId}/pack`, {
      method: "POST",
      body: JSON.stringify({ pack }),
    });
  }

  recordPick(sessionId: string, cardId: string): Promise<SessionSummary> {
    return this.request(`/api/sessions/${sessionId}/pick`, {
      method: "POST",
      body: JSON.stringify({ card_id: cardId }),
    });
  }

  undo(sessionId: string): Promise<SessionSummary> {
    return this.request(`/api/sessions/${sessionId}/undo`, { method: "POST" });
  }
}

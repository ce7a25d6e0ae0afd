/** Payload shapes of the draftrank HTTP API, mirrored verbatim. */

export interface CardInfo {
  card_id: string;
  name: string;
  colors: string; // canonical WUBRG-ordered subset, "" for colorless
  mana_value: number;
  rarity: string;
  types: string[];
}

export interface RankingEntry {
  card_id: string;
  name: string;
  distance: number;
  rank: number;
}

export interface SessionSummary {
  session_id: string;
  set_code: string;
  model_id: string;
  pool: string[];
  pool_size: number;
  picks_made: number;
  pack_number: number;
  pick_number: number;
  pending_pack: string[] | null;
  pending_ranking: RankingEntry[] | null;
  history_length: number;
  can_undo: boolean;
}

export interface PackResponse {
  session_id: string;
  pool_size: number;
  pack: string[];
  ranking: RankingEntry[];
}

export interface StrengthEntry {
  card_id: string;
  name: string;
  colors: string;
  distance: number;
}

export interface StrengthPayload {
  set_code: string;
  model_id: string;
  ranking: StrengthEntry[];
}

export interface ProjectionPoint {
  card_id: string;
  name: string;
  colors: string;
  x: number;
  y: number;
  distance_to_empty: number;
}

export interface ProjectionPayload {
  set_code: string;
  model_id: string;
  explained_variance: number[];
  points: ProjectionPoint[];
  empty_deck: { x: number; y: number };
}

export interface ModelInfo {
  model_id: string;
  config_hash: string;
  embedding_dim: number;
  sets: string[];
}

export interface ApiError {
  code: string;
  message: string;
}

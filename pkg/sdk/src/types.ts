/** Wire types of the /v1 HTTP API. Series identities behind aliases are
 * never part of any payload the SDK needs before reveal. */

export interface ModelCard {
  declaredNameVersion: string;
  architectureClass: string;
  approxSize: string;
  externalDataUsed: boolean;
  mode?: "byop" | "containerized";
}

export interface Credentials {
  baseUrl: string;
  modelId: string;
  apiKey: string;
}

export interface ChallengeSummary {
  challenge_id: string;
  bucket: { domain: string; frequency: string; horizon: string };
  stage: "announced" | "registration" | "active" | "closed";
  t_p: string;
  announce_at: string;
  registration_open_at: string;
  context_length: number;
  horizon_h: number;
  selection_mode: string;
  aliases: string[];
  series?: Array<{
    alias: string;
    provider: string;
    external_id: string;
    display_name: string;
  }>;
}

export interface ContextPoint {
  event_time: string;
  value: number;
}

export interface ContextPayload {
  challenge_id: string;
  series_alias: string;
  frequency: string;
  t_p: string;
  served_at: string;
  horizon_h: number;
  points: ContextPoint[];
}

export interface SubmissionReceipt {
  received_at: string;
  accepted: boolean;
}

export interface LeaderboardEntry {
  model_id: string;
  raw_mase: number;
  adjusted_mase: number;
  participation_rate: number;
  coverage_count: number;
  n_available: number;
}

export interface ChallengeScores {
  challenge_id: string;
  stage: string;
  finalized: boolean;
  series_scores: Array<{
    series_alias: string | null;
    model_id: string;
    mase: number | null;
    scale: number | null;
    steps_observed: number;
    steps_scored: number;
    status: string;
  }>;
  challenge_scores: Array<{
    model_id: string;
    aggregate_mase: number;
    series_count_scored: number;
    finalized_at: string;
  }>;
}

export interface ChallengeFilters {
  state?: string;
  domain?: string;
  frequency?: string;
  horizon?: string;
}

/** User-supplied forecaster: context in, horizon_h values out. */
export type PredictFn = (
  context: ContextPayload
) => number[] | Promise<number[]>;

import {
  ChallengeFilters,
  ChallengeScores,
  ChallengeSummary,
  ContextPayload,
  Credentials,
  LeaderboardEntry,
  ModelCard,
  SubmissionReceipt,
} from "./types.js";

/** A structured error from the gateway, with the server's error code
 * preserved verbatim (e.g. "MissingDisclosure", "DeadlinePassed"). */
export class ArenaApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly status: number,
    public readonly detail: string
  ) {
    super(`${code} (${status}): ${detail}`);
    this.name = "ArenaApiError";
  }
}

export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ValidationError";
  }
}

export interface ClientOptions {
  baseUrl: string;
  apiKey?: string;
  modelId?: string;
  operatorToken?: string;
  timeoutMs?: number;
  /** Attempts beyond the first for transient failures (network, 5xx, 429). */
  maxRetries?: number;
  retryBaseMs?: number;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/** Client errors are final: the request was understood and refused, so a
 * retry can only duplicate work — in the submission case it could even
 * land after the cutoff, so a DeadlinePassed response is never retried. */
function isRetryable(status: number): boolean {
  return status === 429 || status >= 500;
}

export class ArenaClient {
  readonly baseUrl: string;
  apiKey?: string;
  modelId?: string;
  private readonly operatorToken?: string;
  private readonly timeoutMs: number;
  private readonly maxRetries: number;
  private readonly retryBaseMs: number;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.apiKey = options.apiKey;
    this.modelId = options.modelId;
    this.operatorToken = options.operatorToken;
    this.timeoutMs = options.timeoutMs ?? 10_000;
    this.maxRetries = options.maxRetries ?? 3;
    this.retryBaseMs = options.retryBaseMs ?? 250;
  }

  static fromCredentials(credentials: Credentials, options: Partial<ClientOptions> = {}): ArenaClient {
    return new ArenaClient({
      baseUrl: credentials.baseUrl,
      apiKey: credentials.apiKey,
      modelId: credentials.modelId,
      ...options,
    });
  }

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    options: { body?: unknown; query?: Record<string, string | undefined> } = {}
  ): Promise<T> {
    const url = new URL(this.baseUrl + path);
    for (const [key, value] of Object.entries(options.query ?? {})) {
      if (value !== undefined) url.searchParams.set(key, value);
    }
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.apiKey) headers["x-api-key"] = this.apiKey;
    if (this.operatorToken) headers["x-operator-token"] = this.operatorToken;

    let lastFailure: unknown;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      if (attempt > 0) await sleep(this.backoffMs(attempt, lastFailure));
      let response: Response;
      try {
        response = await fetch(url, {
          method,
          headers,
          body: options.body === undefined ? undefined : JSON.stringify(options.body),
          signal: AbortSignal.timeout(this.timeoutMs),
        });
      } catch (err) {
        lastFailure = err; // network error or timeout: retry
        continue;
      }
      if (response.ok) {
        return (await response.json()) as T;
      }
      const failure = await this.toApiError(response);
      if (!isRetryable(response.status)) throw failure;
      lastFailure = failure;
    }
    if (lastFailure instanceof Error) throw lastFailure;
    throw new Error(`request to ${path} failed after ${this.maxRetries + 1} attempts`);
  }

  private backoffMs(attempt: number, lastFailure: unknown): number {
    if (lastFailure instanceof ArenaApiError && lastFailure.status === 429) {
      const hinted = Number(lastFailure.detail.match(/retry after ([\d.]+)/i)?.[1]);
      if (Number.isFinite(hinted)) return hinted * 1000;
    }
    return this.retryBaseMs * 2 ** (attempt - 1);
  }

  private async toApiError(response: Response): Promise<ArenaApiError> {
    let code = `HTTP${response.status}`;
    let detail = "";
    try {
      const body = (await response.json()) as { error?: string; detail?: string };
      code = body.error ?? code;
      detail = body.detail ?? "";
    } catch {
      /* non-JSON error body */
    }
    const retryAfter = response.headers.get("retry-after");
    if (retryAfter && !detail.includes("retry after")) {
      detail = `${detail} retry after ${retryAfter}s`.trim();
    }
    return new ArenaApiError(code, response.status, detail);
  }

  // -- registration --------------------------------------------------------

  /** Registers a model card and binds the returned credentials to this
   * client. Required disclosures are validated before any request. */
  async register(card: ModelCard): Promise<Credentials> {
    const required: Array<[keyof ModelCard, string]> = [
      ["declaredNameVersion", "declared_name_version"],
      ["architectureClass", "architecture_class"],
      ["approxSize", "approx_size"],
    ];
    for (const [field, wireName] of required) {
      const value = card[field];
      if (typeof value !== "string" || value.trim() === "") {
        throw new ValidationError(`model card field ${wireName} must be a non-empty string`);
      }
    }
    if (typeof card.externalDataUsed !== "boolean") {
      throw new ValidationError("model card field external_data_used must be disclosed");
    }
    const body = {
      declared_name_version: card.declaredNameVersion,
      architecture_class: card.architectureClass,
      approx_size: card.approxSize,
      external_data_used: card.externalDataUsed,
      mode: card.mode ?? "byop",
    };
    const created = await this.request<{ model_id: string; api_key: string }>(
      "POST",
      "/v1/models",
      { body }
    );
    this.modelId = created.model_id;
    this.apiKey = created.api_key;
    return { baseUrl: this.baseUrl, modelId: created.model_id, apiKey: created.api_key };
  }

  // -- challenges ------------------------------------------------------------

  async listChallenges(filters: ChallengeFilters = {}): Promise<ChallengeSummary[]> {
    const data = await this.request<{ challenges: ChallengeSummary[] }>(
      "GET",
      "/v1/challenges",
      { query: { ...filters } }
    );
    return data.challenges;
  }

  async getChallenge(challengeId: string): Promise<ChallengeSummary> {
    return this.request("GET", `/v1/challenges/${challengeId}`);
  }

  async getContext(challengeId: string, alias: string): Promise<ContextPayload> {
    return this.request("GET", `/v1/challenges/${challengeId}/context/${alias}`);
  }

  /** Uploads one forecast. DeadlinePassed surfaces immediately: the request
   * layer never retries 4xx responses, so a late submission stays rejected. */
  async submitForecast(
    challengeId: string,
    alias: string,
    values: number[],
    clientSubmitTime?: Date
  ): Promise<SubmissionReceipt> {
    if (!this.modelId || !this.apiKey) {
      throw new ValidationError("register() or fromCredentials() before submitting");
    }
    return this.request("POST", `/v1/challenges/${challengeId}/forecasts`, {
      body: {
        alias,
        model_id: this.modelId,
        values,
        client_submit_time: (clientSubmitTime ?? new Date()).toISOString(),
      },
    });
  }

  // -- read side ---------------------------------------------------------------

  async scores(challengeId: string): Promise<ChallengeScores> {
    return this.request("GET", `/v1/challenges/${challengeId}/scores`);
  }

  async leaderboard(
    window = "7d",
    scope: Omit<ChallengeFilters, "state"> = {}
  ): Promise<LeaderboardEntry[]> {
    const data = await this.request<{ entries: LeaderboardEntry[] }>(
      "GET",
      "/v1/leaderboard",
      { query: { window, ...scope } }
    );
    return data.entries;
  }

  async health(): Promise<{ status: string; now: string }> {
    return this.request("GET", "/v1/health");
  }

  /** Virtual-clock instances only; requires the operator token. */
  async advanceClock(duration: string): Promise<{ now: string }> {
    return this.request("POST", "/v1/admin/advance", { body: { duration } });
  }
}

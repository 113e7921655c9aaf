export { ArenaApiError, ArenaClient, ValidationError } from "./client.js";
export type { ClientOptions } from "./client.js";
export {
  defaultCredentialsPath,
  loadCredentials,
  saveCredentials,
} from "./credentials.js";
export { naivePredict, pollAndSubmit } from "./participant.js";
export type { PollResult, SubmissionOutcome } from "./participant.js";
export type {
  ChallengeFilters,
  ChallengeScores,
  ChallengeSummary,
  ContextPayload,
  ContextPoint,
  Credentials,
  LeaderboardEntry,
  ModelCard,
  PredictFn,
  SubmissionReceipt,
} from "./types.js";

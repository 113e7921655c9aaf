import { ArenaApiError, ArenaClient } from "./client.js";
import {
  ChallengeFilters,
  ContextPayload,
  PredictFn,
  SubmissionReceipt,
} from "./types.js";

export interface SubmissionOutcome {
  challengeId: string;
  alias: string;
  receipt?: SubmissionReceipt;
  error?: string;
}

export interface PollResult {
  receipts: SubmissionOutcome[];
  skipped: SubmissionOutcome[];
}

/** Reference forecaster: repeat the last context value across the horizon. */
export const naivePredict: PredictFn = (context: ContextPayload) => {
  const last = context.points.at(-1);
  if (!last) throw new Error("empty context");
  return Array<number>(context.horizon_h).fill(last.value);
};

/** One polling pass: fetch every alias context of every challenge currently
 * in registration (within scope), run predictFn, and upload the forecasts.
 *
 * A predictFn failure or a server rejection on one series never blocks the
 * others; DeadlinePassed is recorded and, like every client error, not
 * retried.
 */
export async function pollAndSubmit(
  client: ArenaClient,
  predictFn: PredictFn,
  scope: Omit<ChallengeFilters, "state"> = {},
  log: (message: string) => void = () => {}
): Promise<PollResult> {
  const receipts: SubmissionOutcome[] = [];
  const skipped: SubmissionOutcome[] = [];
  const open = await client.listChallenges({ ...scope, state: "registration" });
  for (const challenge of open) {
    for (const alias of challenge.aliases) {
      const outcome: SubmissionOutcome = {
        challengeId: challenge.challenge_id,
        alias,
      };
      try {
        const context = await client.getContext(challenge.challenge_id, alias);
        const values = await predictFn(context);
        outcome.receipt = await client.submitForecast(
          challenge.challenge_id,
          alias,
          values
        );
        receipts.push(outcome);
      } catch (err) {
        outcome.error =
          err instanceof ArenaApiError ? err.code : String(err);
        log(`skipping ${challenge.challenge_id}/${alias}: ${outcome.error}`);
        skipped.push(outcome);
      }
    }
  }
  return { receipts, skipped };
}

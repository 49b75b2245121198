/**
 * View state derivation. The server's records are the only source of
 * truth: every displayed number is computed from them, and rebuilding
 * from a full /history response must equal the state reached by applying
 * step results one at a time (so a page reload reconstructs the exact
 * same view).
 */

import type { HistoryResponse, SessionInfo, StepRecord } from './types';

export interface ViewState {
  sessionId: string;
  domain: string;
  maxSteps: number;
  steps: StepRecord[];
  /** Index of the step whose scene is displayed (latest persisted). */
  currentStep: number | null;
  budgetRemaining: number;
  inputLocked: boolean;
  lastError: { code: string; message: string } | null;
}

export function emptyView(session: SessionInfo): ViewState {
  return {
    sessionId: session.session_id,
    domain: session.domain,
    maxSteps: session.max_steps,
    steps: [],
    currentStep: null,
    budgetRemaining: session.max_steps,
    inputLocked: false,
    lastError: null,
  };
}

function recompute(view: ViewState): ViewState {
  const used = view.steps.length;
  const budget = Math.max(0, view.maxSteps - used);
  const lastOk = [...view.steps].reverse().find((s) => s.status === 'ok') ?? null;
  const lastRecord = view.steps[view.steps.length - 1];
  return {
    ...view,
    currentStep: lastOk ? lastOk.index : null,
    budgetRemaining: budget,
    inputLocked: budget === 0,
    lastError: lastRecord && lastRecord.status === 'failed' ? lastRecord.error : null,
  };
}

/** Fold one committed step record into the view. */
export function applyStepResult(view: ViewState, record: StepRecord): ViewState {
  return recompute({ ...view, steps: [...view.steps, record] });
}

/** Rebuild the complete view from a /history response. */
export function viewFromHistory(history: HistoryResponse): ViewState {
  return recompute({
    ...emptyView(history.session),
    steps: [...history.steps],
  });
}

/** The step record whose scene/programs the panes should show. */
export function displayedRecord(view: ViewState): StepRecord | null {
  if (view.currentStep === null) {
    return null;
  }
  return view.steps.find((s) => s.index === view.currentStep) ?? null;
}

/** Candidate method ids for a step (ranking needs at least two). */
export function candidateMethods(record: StepRecord): string[] {
  return Object.keys(record.candidates ?? {});
}

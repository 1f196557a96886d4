// Player state machine. A single pure reducer serializes every transition:
// loading -> ready -> in_test -> finished -> uploading -> done,
// with uploading -> upload_failed -> uploading on retry. Records grow
// append-only while in_test; all timestamps are monotonic-clock values
// converted to milliseconds since session start.

import type {
  IngestReport,
  Item,
  ResponseRecord,
  SessionEnvelope,
  TestDefinition,
  TestPackage,
} from "./types.js";
import { seededShuffle } from "./prng.js";

export type Phase =
  | "loading"
  | "ready"
  | "in_test"
  | "finished"
  | "uploading"
  | "done"
  | "upload_failed";

export interface PresentationStep {
  test: TestDefinition;
  item: Item;
}

export interface AnswerDraft {
  item_id: string;
  value: unknown;
  shown_at: number; // monotonic ms
  answered_at: number; // monotonic ms
}

export interface PlayerState {
  phase: Phase;
  pkg: TestPackage | null;
  session: SessionEnvelope | null;
  presentation: PresentationStep[];
  cursor: number;
  sessionStartMono: number;
  records: ResponseRecord[];
  uploadReport: IngestReport | null;
  lastError: string | null;
}

export type Action =
  | { type: "package_loaded"; pkg: TestPackage; session: SessionEnvelope }
  | { type: "start"; atMono: number }
  | { type: "answer"; draft: AnswerDraft }
  | { type: "upload_start" }
  | { type: "upload_ok"; report: IngestReport }
  | { type: "upload_failed"; reason: string };

export class IllegalTransition extends Error {
  constructor(message: string) {
    super(message);
    this.name = "IllegalTransition";
  }
}

export class OutOfOrderAnswer extends Error {
  constructor(message: string) {
    super(message);
    this.name = "OutOfOrderAnswer";
  }
}

export function initialState(): PlayerState {
  return {
    phase: "loading",
    pkg: null,
    session: null,
    presentation: [],
    cursor: 0,
    sessionStartMono: 0,
    records: [],
    uploadReport: null,
    lastError: null,
  };
}

/** Presentation order: tests in package order; items shuffled per test when
 * randomize_items, seeded by (session_id, test_id) so the order is
 * reproducible from the envelope. */
export function buildPresentation(pkg: TestPackage, sessionId: string): PresentationStep[] {
  const steps: PresentationStep[] = [];
  for (const test of pkg.tests) {
    const items = test.randomize_items ? seededShuffle(test.items, sessionId, test.test_id) : test.items;
    for (const item of items) {
      steps.push({ test, item });
    }
  }
  return steps;
}

export function currentStep(state: PlayerState): PresentationStep | null {
  return state.phase === "in_test" ? (state.presentation[state.cursor] ?? null) : null;
}

function expectPhase(state: PlayerState, allowed: Phase[], action: string): void {
  if (!allowed.includes(state.phase)) {
    throw new IllegalTransition(`${action} is not legal in phase '${state.phase}'`);
  }
}

export function reduce(state: PlayerState, action: Action): PlayerState {
  switch (action.type) {
    case "package_loaded": {
      expectPhase(state, ["loading"], "package_loaded");
      return {
        ...state,
        phase: "ready",
        pkg: action.pkg,
        session: action.session,
        presentation: buildPresentation(action.pkg, action.session.session_id),
        cursor: 0,
        records: [],
        lastError: null,
      };
    }
    case "start": {
      expectPhase(state, ["ready"], "start");
      return { ...state, phase: "in_test", cursor: 0, sessionStartMono: action.atMono };
    }
    case "answer": {
      expectPhase(state, ["in_test"], "answer");
      const step = state.presentation[state.cursor];
      if (step === undefined) {
        throw new IllegalTransition("no current item");
      }
      if (action.draft.item_id !== step.item.item_id) {
        throw new OutOfOrderAnswer(
          `answer for '${action.draft.item_id}' but current item is '${step.item.item_id}'`,
        );
      }
      if (action.draft.answered_at < action.draft.shown_at) {
        throw new OutOfOrderAnswer("answered_at precedes shown_at");
      }
      const record: ResponseRecord = {
        test_id: step.test.test_id,
        item_id: step.item.item_id,
        answer: action.draft.value,
        shown_at_client: action.draft.shown_at - state.sessionStartMono,
        answered_at_client: action.draft.answered_at - state.sessionStartMono,
      };
      const cursor = state.cursor + 1;
      return {
        ...state,
        records: [...state.records, record],
        cursor,
        phase: cursor >= state.presentation.length ? "finished" : "in_test",
      };
    }
    case "upload_start": {
      expectPhase(state, ["finished", "upload_failed"], "upload_start");
      return { ...state, phase: "uploading", lastError: null };
    }
    case "upload_ok": {
      expectPhase(state, ["uploading"], "upload_ok");
      return { ...state, phase: "done", uploadReport: action.report };
    }
    case "upload_failed": {
      expectPhase(state, ["uploading"], "upload_failed");
      return { ...state, phase: "upload_failed", lastError: action.reason };
    }
  }
}

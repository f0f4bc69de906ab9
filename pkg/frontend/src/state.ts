// View-state reducer: folds the session message stream into everything
// the console renders. State is derived solely from received messages —
// there is no client-side simulation — so replaying a recorded log
// reconstructs the exact view the live session showed.

import {
  AgentUtterancePayload,
  EpisodeResultPayload,
  ErrorPayload,
  SceneFrame,
  SchemaError,
  SessionMessage,
  Signal,
  UserAnswerPayload,
  parseMessage,
} from "./types.js";

export interface ChatEntry {
  speaker: "user" | "agent";
  text: string[];
  /** trailing signal token, present on every agent entry */
  signal?: Signal;
  /** the seq of the message this entry came from */
  seq: number;
}

export type DerivedPhase =
  | "await_instruction"
  | "await_answer"
  | "confirm"
  | "acting"
  | "rejected"
  | "done"
  | "error";

export interface ViewState {
  frame: SceneFrame | null;
  transcript: ChatEntry[];
  phase: DerivedPhase;
  /** true exactly when the service would accept post_user_input */
  inputEnabled: boolean;
  refused: boolean;
  result: EpisodeResultPayload | null;
  errorBanner: string | null;
  lastSeq: number;
  /** seqs of signal messages, for timeline markers */
  signalMarks: { seq: number; signal: Signal }[];
}

export function initialState(): ViewState {
  return {
    frame: null,
    transcript: [],
    phase: "await_instruction",
    inputEnabled: true,
    refused: false,
    result: null,
    errorBanner: null,
    lastSeq: -1,
    signalMarks: [],
  };
}

function phaseAfterSignal(signal: Signal): DerivedPhase {
  switch (signal) {
    case "<AMBG>":
      return "await_answer";
    case "<NOT_AMBG>":
      return "confirm";
    case "<ACT>":
      return "acting";
    case "<REJ>":
      return "rejected";
  }
}

/** Fold one message into the view state. Pure: returns a new state. */
export function reduce(state: ViewState, raw: unknown): ViewState {
  const msg = parseMessage(raw);
  if (msg.seq <= state.lastSeq) {
    throw new SchemaError(
      `sequence number ${msg.seq} not after ${state.lastSeq}`,
    );
  }
  const next: ViewState = { ...state, lastSeq: msg.seq };
  switch (msg.kind) {
    case "scene_frame":
    case "action_progress":
      next.frame = msg.payload as SceneFrame;
      break;
    case "user_answer": {
      const p = msg.payload as UserAnswerPayload;
      next.transcript = [
        ...state.transcript,
        { speaker: "user", text: p.text, seq: msg.seq },
      ];
      break;
    }
    case "agent_utterance": {
      const p = msg.payload as AgentUtterancePayload;
      next.transcript = [
        ...state.transcript,
        { speaker: "agent", text: p.text, signal: p.signal, seq: msg.seq },
      ];
      break;
    }
    case "signal": {
      const p = msg.payload as { signal: Signal };
      next.phase = phaseAfterSignal(p.signal);
      next.refused = state.refused || p.signal === "<REJ>";
      next.signalMarks = [
        ...state.signalMarks,
        { seq: msg.seq, signal: p.signal },
      ];
      break;
    }
    case "episode_result": {
      const p = msg.payload as EpisodeResultPayload;
      next.result = p;
      if (next.phase !== "rejected" && next.phase !== "error") {
        next.phase = "done";
      }
      break;
    }
    case "error": {
      const p = msg.payload as ErrorPayload;
      next.phase = "error";
      next.errorBanner = p.reason;
      break;
    }
  }
  next.inputEnabled =
    next.phase === "await_instruction" || next.phase === "await_answer";
  return next;
}

/** Fold a whole message log, e.g. a fetched replay. */
export function reduceAll(messages: unknown[]): ViewState {
  return messages.reduce(reduce, initialState());
}

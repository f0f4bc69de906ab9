// Wire types mirroring the deskagent service message schema. The console
// never simulates anything itself: every field here is received as-is.

export type Signal = "<AMBG>" | "<NOT_AMBG>" | "<ACT>" | "<REJ>";

export const SIGNALS: readonly Signal[] = [
  "<AMBG>",
  "<NOT_AMBG>",
  "<ACT>",
  "<REJ>",
];

export type Phase =
  | "await_instruction"
  | "generate"
  | "await_answer"
  | "confirm"
  | "acting"
  | "rejected"
  | "done"
  | "error";

export type MessageKind =
  | "scene_frame"
  | "agent_utterance"
  | "signal"
  | "user_answer"
  | "action_progress"
  | "episode_result"
  | "error";

export interface SceneObject {
  id: string;
  category: string;
  color: string;
  x: number;
  y: number;
  radius: number;
  water: number;
  held: boolean;
}

export interface EffectorState {
  x: number;
  y: number;
  gripper: number;
  tilt: number;
}

export interface SceneFrame {
  objects: SceneObject[];
  effector: EffectorState;
  brightness: number;
  step_count: number;
}

export interface AgentUtterancePayload {
  text: string[];
  signal: Signal;
}

export interface UserAnswerPayload {
  role: "instruction" | "answer";
  text: string[];
}

export interface EpisodeResultPayload {
  success: boolean;
  refused: boolean;
  rounds: number;
  world_steps?: number;
  error?: string;
  resolved_instruction?: string[] | null;
  transcript: [string, string[]][];
}

export interface ErrorPayload {
  reason: string;
}

export interface SessionMessage {
  seq: number;
  kind: MessageKind;
  payload:
    | SceneFrame
    | AgentUtterancePayload
    | UserAnswerPayload
    | EpisodeResultPayload
    | ErrorPayload
    | { signal: Signal };
}

export interface CreateSessionResponse {
  session_id: number;
  phase: Phase;
  messages: SessionMessage[];
}

export interface PostInputResponse {
  phase: Phase;
  messages: SessionMessage[];
}

export interface PollResponse {
  phase: Phase;
  closed: boolean;
  messages: SessionMessage[];
}

export interface ReplayResponse {
  messages: SessionMessage[];
  result: EpisodeResultPayload | null;
}

export class SchemaError extends Error {}

const KINDS: readonly string[] = [
  "scene_frame",
  "agent_utterance",
  "signal",
  "user_answer",
  "action_progress",
  "episode_result",
  "error",
];

/** Validate one raw object against the message schema; throws SchemaError. */
export function parseMessage(raw: unknown): SessionMessage {
  if (typeof raw !== "object" || raw === null) {
    throw new SchemaError("message is not an object");
  }
  const m = raw as Record<string, unknown>;
  if (typeof m.seq !== "number" || !Number.isInteger(m.seq)) {
    throw new SchemaError("missing integer seq");
  }
  if (typeof m.kind !== "string" || !KINDS.includes(m.kind)) {
    throw new SchemaError(`unknown message kind: ${String(m.kind)}`);
  }
  if (typeof m.payload !== "object" || m.payload === null) {
    throw new SchemaError("missing payload");
  }
  if (m.kind === "agent_utterance") {
    const p = m.payload as Record<string, unknown>;
    if (!SIGNALS.includes(p.signal as Signal)) {
      throw new SchemaError("agent utterance without a valid signal");
    }
  }
  if (m.kind === "scene_frame" || m.kind === "action_progress") {
    const p = m.payload as Record<string, unknown>;
    if (!Array.isArray(p.objects) || typeof p.effector !== "object") {
      throw new SchemaError("malformed scene frame");
    }
  }
  return m as unknown as SessionMessage;
}

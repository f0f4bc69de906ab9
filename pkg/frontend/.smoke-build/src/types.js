// Wire types mirroring the deskagent service message schema. The console
// never simulates anything itself: every field here is received as-is.
export const SIGNALS = [
    "<AMBG>",
    "<NOT_AMBG>",
    "<ACT>",
    "<REJ>",
];
export class SchemaError extends Error {
}
const KINDS = [
    "scene_frame",
    "agent_utterance",
    "signal",
    "user_answer",
    "action_progress",
    "episode_result",
    "error",
];
/** Validate one raw object against the message schema; throws SchemaError. */
export function parseMessage(raw) {
    if (typeof raw !== "object" || raw === null) {
        throw new SchemaError("message is not an object");
    }
    const m = raw;
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
        const p = m.payload;
        if (!SIGNALS.includes(p.signal)) {
            throw new SchemaError("agent utterance without a valid signal");
        }
    }
    if (m.kind === "scene_frame" || m.kind === "action_progress") {
        const p = m.payload;
        if (!Array.isArray(p.objects) || typeof p.effector !== "object") {
            throw new SchemaError("malformed scene frame");
        }
    }
    return m;
}

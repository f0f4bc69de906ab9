// Live smoke test: spin up the real service, run one human-answered
// ambiguous episode end to end over the WebSocket stream, and verify
// the console's reducer tracked it to a terminal state.
//
// Usage: node --experimental-strip-types scripts/smoke.ts CKPT_DIR CKPT_ID
// The scenario/seed pair is fixed; the scripted "human" answer below is
// the truthful one for that seed's scene.

import { spawn, type ChildProcess } from "node:child_process";
import process from "node:process";

import { WebSocket as NodeWebSocket } from "ws";

// Node 20 has no global WebSocket; the browser build uses the native one
if (typeof globalThis.WebSocket === "undefined") {
  (globalThis as Record<string, unknown>).WebSocket = NodeWebSocket;
}

import { ServiceClient } from "../src/client.js";
import { initialState, reduce, ViewState } from "../src/state.js";
import { SessionMessage } from "../src/types.js";

const args = process.argv.slice(2);
if (args.length < 2) {
  console.error("usage: smoke.ts CKPT_DIR CKPT_ID");
  process.exit(2);
}
const ckptDir = args[0] as string;
const ckptId = args[1] as string;

const PORT = 8731;
const BASE = `http://127.0.0.1:${PORT}`;
const SCENARIO = "place-ambiguous";
const SEED = 5;
// truthful clarification answer for the seed-5 place-ambiguous scene
const ANSWER = "the orange";
const INSTRUCTION = "put the fruit on the plate";

function fail(msg: string): never {
  console.error(`SMOKE FAIL: ${msg}`);
  process.exit(1);
}

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const res = await fetch(`${BASE}/scenarios`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 300));
  }
  fail("service did not come up");
}

async function main(): Promise<void> {
  const server: ChildProcess = spawn(
    "deskagent",
    ["serve", "--checkpoints", ckptDir, "--port", String(PORT)],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  try {
    await waitForService();
    const client = new ServiceClient(BASE);

    const checkpoints = await client.listCheckpoints();
    if (!checkpoints.includes(ckptId)) {
      fail(`checkpoint ${ckptId} not served (got ${checkpoints})`);
    }

    const created = await client.createSession(ckptId, SCENARIO, SEED);
    let state: ViewState = initialState();
    for (const m of created.messages) state = reduce(state, m);

    const done = new Promise<void>((resolve, reject) => {
      const ws = client.openStream(
        created.session_id,
        (m: SessionMessage) => {
          if (m.seq <= state.lastSeq) return;
          try {
            state = reduce(state, m);
          } catch (err) {
            reject(err);
            return;
          }
          // play the human: answer exactly when the input box opens
          if (state.inputEnabled && state.phase === "await_answer") {
            ws.send(ANSWER);
          }
        },
        () => resolve(),
      );
      ws.onopen = () => ws.send(INSTRUCTION);
      setTimeout(() => reject(new Error("smoke timed out")), 120_000);
    });
    await done;

    const agentTurns = state.transcript.filter((e) => e.speaker === "agent");
    if (!agentTurns.some((e) => e.signal === "<AMBG>")) {
      fail("no clarifying question was asked");
    }
    if (!agentTurns.some((e) => e.signal === "<ACT>")) {
      fail("the episode never reached ACT");
    }
    if (state.result === null) fail("no episode result received");
    if (state.frame === null) fail("no final scene frame received");
    if (state.errorBanner !== null) fail(`error: ${state.errorBanner}`);
    if (!state.result.world_steps || state.result.world_steps <= 0) {
      fail("no world steps were executed");
    }
    console.log(
      `SMOKE PASS: rounds=${state.result.rounds} ` +
        `success=${state.result.success} ` +
        `world_steps=${state.result.world_steps} ` +
        `messages=${state.lastSeq + 1}`,
    );
  } finally {
    server.kill();
  }
}

main().catch((err) => fail(String(err)));

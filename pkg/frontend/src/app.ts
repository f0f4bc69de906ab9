// Browser wiring: one session per tab, a single rendering loop fed by
// the WebSocket stream, and a replay scrubber over the fetched log.

import { ServiceClient } from "./client.js";
import { renderScene } from "./render.js";
import { Replay } from "./replay.js";
import { ViewState, initialState, reduce } from "./state.js";
import { Signal } from "./types.js";

const BADGE_CLASS: Record<Signal, string> = {
  "<AMBG>": "badge badge-ambg",
  "<NOT_AMBG>": "badge badge-notambg",
  "<ACT>": "badge badge-act",
  "<REJ>": "badge badge-rej",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function main(): void {
  const client = new ServiceClient(window.location.origin);
  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d")!;
  const chat = el<HTMLDivElement>("chat");
  const phaseEl = el<HTMLSpanElement>("phase");
  const banner = el<HTMLDivElement>("banner");
  const input = el<HTMLInputElement>("user-input");
  const send = el<HTMLButtonElement>("send");
  const scrub = el<HTMLInputElement>("scrub");
  const checkpointSel = el<HTMLSelectElement>("checkpoint");
  const scenarioSel = el<HTMLSelectElement>("scenario");
  const startBtn = el<HTMLButtonElement>("start");
  const replayBtn = el<HTMLButtonElement>("load-replay");

  let state: ViewState = initialState();
  let sessionId: number | null = null;
  let replay: Replay | null = null;

  function draw(view: ViewState): void {
    phaseEl.textContent = view.phase;
    input.disabled = !view.inputEnabled || replay !== null;
    send.disabled = input.disabled;
    if (view.errorBanner) {
      banner.textContent = `error: ${view.errorBanner}`;
      banner.className = "banner banner-error";
    } else if (view.refused) {
      banner.textContent = "the agent refused: target not on the table";
      banner.className = "banner banner-refused";
    } else if (view.result) {
      banner.textContent = view.result.success
        ? "episode succeeded"
        : "episode finished without success";
      banner.className = "banner";
    } else {
      banner.textContent = "";
      banner.className = "banner banner-hidden";
    }
    chat.replaceChildren(
      ...view.transcript.map((entry) => {
        const row = document.createElement("div");
        row.className = `msg msg-${entry.speaker}`;
        const body = entry.signal
          ? entry.text.slice(0, -1)
          : entry.text;
        row.textContent = `${entry.speaker}: ${body.join(" ")} `;
        if (entry.signal) {
          const badge = document.createElement("span");
          badge.className = BADGE_CLASS[entry.signal];
          badge.textContent = entry.signal;
          row.appendChild(badge);
        }
        return row;
      }),
    );
    chat.scrollTop = chat.scrollHeight;
    if (view.frame) renderScene(ctx, view.frame);
  }

  function onStreamClosed(): void {
    if (state.result === null && state.errorBanner === null) {
      banner.textContent = "connection lost — reload to reconnect " +
        "(transcript preserved)";
      banner.className = "banner banner-error";
    }
  }

  async function start(): Promise<void> {
    replay = null;
    state = initialState();
    const created = await client.createSession(
      checkpointSel.value,
      scenarioSel.value,
    );
    sessionId = created.session_id;
    for (const m of created.messages) state = reduce(state, m);
    draw(state);
    client.openStream(
      sessionId,
      (m) => {
        if (m.seq > state.lastSeq) {
          state = reduce(state, m);
          draw(state);
        }
      },
      onStreamClosed,
    );
  }

  async function submit(): Promise<void> {
    if (sessionId === null || !input.value.trim()) return;
    const text = input.value;
    input.value = "";
    try {
      const res = await client.postInput(sessionId, text);
      for (const m of res.messages) {
        if (m.seq > state.lastSeq) state = reduce(state, m);
      }
      draw(state);
    } catch (err) {
      banner.textContent = String(err);
      banner.className = "banner banner-error";
    }
  }

  async function loadReplay(): Promise<void> {
    if (sessionId === null) return;
    const rec = await client.fetchReplay(sessionId);
    replay = new Replay(rec.messages);
    scrub.max = String(Math.max(replay.length - 1, 0));
    scrub.value = scrub.max;
    scrub.disabled = replay.length === 0;
    draw(replay.final());
  }

  startBtn.addEventListener("click", () => void start());
  send.addEventListener("click", () => void submit());
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") void submit();
  });
  scrub.addEventListener("input", () => {
    if (replay) draw(replay.at(Number(scrub.value)));
  });
  replayBtn.addEventListener("click", () => void loadReplay());

  void (async () => {
    const [checkpoints, scenarios] = await Promise.all([
      client.listCheckpoints(),
      client.listScenarios(),
    ]);
    checkpointSel.replaceChildren(
      ...checkpoints.map((c) => new Option(c, c)),
    );
    scenarioSel.replaceChildren(...scenarios.map((s) => new Option(s, s)));
  })();

  draw(state);
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", main);
}

// Thin client over the service's external interfaces: plain
// request/response endpoints plus the per-session WebSocket stream.
// Works both in the browser and under Node 20 (global fetch/WebSocket).

import {
  CreateSessionResponse,
  PollResponse,
  PostInputResponse,
  ReplayResponse,
  SessionMessage,
  parseMessage,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      detail = ((await res.json()) as { detail?: string }).detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(detail, res.status);
  }
  return (await res.json()) as T;
}

export class ServiceClient {
  constructor(public baseUrl: string) {}

  async listCheckpoints(): Promise<string[]> {
    const r = await request<{ checkpoints: string[] }>(
      `${this.baseUrl}/checkpoints`,
    );
    return r.checkpoints;
  }

  async listScenarios(): Promise<string[]> {
    const r = await request<{ scenarios: string[] }>(
      `${this.baseUrl}/scenarios`,
    );
    return r.scenarios;
  }

  async createSession(
    checkpoint: string,
    scenario: string,
    seed = 0,
  ): Promise<CreateSessionResponse> {
    const r = await request<CreateSessionResponse>(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ checkpoint, scenario, seed }),
    });
    r.messages.forEach(parseMessage);
    return r;
  }

  async postInput(sessionId: number, text: string): Promise<PostInputResponse> {
    const r = await request<PostInputResponse>(
      `${this.baseUrl}/sessions/${sessionId}/input`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
    r.messages.forEach(parseMessage);
    return r;
  }

  async pollMessages(sessionId: number, since: number): Promise<PollResponse> {
    return request<PollResponse>(
      `${this.baseUrl}/sessions/${sessionId}/messages?since=${since}`,
    );
  }

  async fetchReplay(sessionId: number): Promise<ReplayResponse> {
    return request<ReplayResponse>(
      `${this.baseUrl}/sessions/${sessionId}/replay`,
    );
  }

  /**
   * Open the session's WebSocket stream. Messages are parsed and handed
   * to `onMessage` in order; `onClose` fires when the server closes or
   * the connection drops (the caller decides whether to reconnect —
   * the transcript lives in the reducer state and survives).
   */
  openStream(
    sessionId: number,
    onMessage: (m: SessionMessage) => void,
    onClose: () => void,
  ): WebSocket {
    const ws = new WebSocket(
      `${this.baseUrl.replace(/^http/, "ws")}/sessions/${sessionId}/stream`,
    );
    ws.onmessage = (ev: MessageEvent) => {
      onMessage(parseMessage(JSON.parse(String(ev.data))));
    };
    ws.onclose = onClose;
    return ws;
  }
}

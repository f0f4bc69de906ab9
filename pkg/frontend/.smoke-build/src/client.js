// Thin client over the service's external interfaces: plain
// request/response endpoints plus the per-session WebSocket stream.
// Works both in the browser and under Node 20 (global fetch/WebSocket).
import { parseMessage, } from "./types.js";
export class ServiceError extends Error {
    status;
    constructor(message, status) {
        super(message);
        this.status = status;
    }
}
async function request(url, init) {
    const res = await fetch(url, init);
    if (!res.ok) {
        let detail = res.statusText;
        try {
            detail = (await res.json()).detail ?? detail;
        }
        catch {
            // non-JSON error body; keep the status text
        }
        throw new ServiceError(detail, res.status);
    }
    return (await res.json());
}
export class ServiceClient {
    baseUrl;
    constructor(baseUrl) {
        this.baseUrl = baseUrl;
    }
    async listCheckpoints() {
        const r = await request(`${this.baseUrl}/checkpoints`);
        return r.checkpoints;
    }
    async listScenarios() {
        const r = await request(`${this.baseUrl}/scenarios`);
        return r.scenarios;
    }
    async createSession(checkpoint, scenario, seed = 0) {
        const r = await request(`${this.baseUrl}/sessions`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ checkpoint, scenario, seed }),
        });
        r.messages.forEach(parseMessage);
        return r;
    }
    async postInput(sessionId, text) {
        const r = await request(`${this.baseUrl}/sessions/${sessionId}/input`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ text }),
        });
        r.messages.forEach(parseMessage);
        return r;
    }
    async pollMessages(sessionId, since) {
        return request(`${this.baseUrl}/sessions/${sessionId}/messages?since=${since}`);
    }
    async fetchReplay(sessionId) {
        return request(`${this.baseUrl}/sessions/${sessionId}/replay`);
    }
    /**
     * Open the session's WebSocket stream. Messages are parsed and handed
     * to `onMessage` in order; `onClose` fires when the server closes or
     * the connection drops (the caller decides whether to reconnect —
     * the transcript lives in the reducer state and survives).
     */
    openStream(sessionId, onMessage, onClose) {
        const ws = new WebSocket(`${this.baseUrl.replace(/^http/, "ws")}/sessions/${sessionId}/stream`);
        ws.onmessage = (ev) => {
            onMessage(parseMessage(JSON.parse(String(ev.data))));
        };
        ws.onclose = onClose;
        return ws;
    }
}

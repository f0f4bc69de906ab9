// Replay model: frame-accurate scrubbing over a recorded message log.
// The view at cursor k is simply the reducer folded over the first k+1
// messages, so scrubbed and live renderings agree by construction.
import { initialState, reduce } from "./state.js";
export class Replay {
    messages;
    /** prefix states: states[k] is the view after messages[0..k-1] */
    states;
    marks;
    constructor(messages) {
        this.messages = messages;
        this.states = [initialState()];
        this.marks = [];
        messages.forEach((m, i) => {
            this.states.push(reduce(this.states[i], m));
            if (m.kind === "signal") {
                this.marks.push({
                    index: i,
                    signal: m.payload.signal,
                });
            }
        });
    }
    get length() {
        return this.messages.length;
    }
    /** View state with the cursor just after message `index` (clamped). */
    at(index) {
        const k = Math.max(0, Math.min(index + 1, this.messages.length));
        return this.states[k];
    }
    /** Final view state: the whole episode applied. */
    final() {
        return this.states[this.states.length - 1];
    }
}

// Replay model: frame-accurate scrubbing over a recorded message log.
// The view at cursor k is simply the reducer folded over the first k+1
// messages, so scrubbed and live renderings agree by construction.

import { ViewState, initialState, reduce } from "./state.js";
import { SessionMessage, Signal } from "./types.js";

export interface TimelineMark {
  index: number;
  signal: Signal;
}

export class Replay {
  /** prefix states: states[k] is the view after messages[0..k-1] */
  private states: ViewState[];
  readonly marks: TimelineMark[];

  constructor(readonly messages: SessionMessage[]) {
    this.states = [initialState()];
    this.marks = [];
    messages.forEach((m, i) => {
      this.states.push(reduce(this.states[i]!, m));
      if (m.kind === "signal") {
        this.marks.push({
          index: i,
          signal: (m.payload as { signal: Signal }).signal,
        });
      }
    });
  }

  get length(): number {
    return this.messages.length;
  }

  /** View state with the cursor just after message `index` (clamped). */
  at(index: number): ViewState {
    const k = Math.max(0, Math.min(index + 1, this.messages.length));
    return this.states[k]!;
  }

  /** Final view state: the whole episode applied. */
  final(): ViewState {
    return this.states[this.states.length - 1]!;
  }
}

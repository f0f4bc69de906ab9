// Renderer tests against a recording mock context: deterministic
// drawing, dimming under low brightness, held objects at the effector.

import { describe, expect, it } from "vitest";

import { DEFAULT_OPTIONS, DrawContext, renderScene } from "../src/render.js";
import { SceneFrame } from "../src/types.js";

interface Call {
  op: string;
  args: unknown[];
  alpha: number;
  fill: string;
}

class RecordingContext implements DrawContext {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 1;
  font = "";
  textAlign = "";
  textBaseline = "";
  globalAlpha = 1;
  calls: Call[] = [];

  private rec(op: string, ...args: unknown[]) {
    this.calls.push({
      op,
      args,
      alpha: this.globalAlpha,
      fill: this.fillStyle,
    });
  }

  fillRect(x: number, y: number, w: number, h: number) {
    this.rec("fillRect", x, y, w, h);
  }
  beginPath() {
    this.rec("beginPath");
  }
  arc(x: number, y: number, r: number, a0: number, a1: number) {
    this.rec("arc", x, y, r, a0, a1);
  }
  fill() {
    this.rec("fill");
  }
  stroke() {
    this.rec("stroke");
  }
  fillText(text: string, x: number, y: number) {
    this.rec("fillText", text, x, y);
  }
  moveTo(x: number, y: number) {
    this.rec("moveTo", x, y);
  }
  lineTo(x: number, y: number) {
    this.rec("lineTo", x, y);
  }
}

function frame(partial: Partial<SceneFrame> = {}): SceneFrame {
  return {
    objects: [],
    effector: { x: 0.5, y: 0.9, gripper: 0.0, tilt: 0.0 },
    brightness: 1.0,
    step_count: 0,
    ...partial,
  };
}

describe("renderScene", () => {
  it("empty frame draws the table and the effector glyph only", () => {
    const ctx = new RecordingContext();
    renderScene(ctx, frame());
    expect(ctx.calls.filter((c) => c.op === "fillRect")).toHaveLength(1);
    expect(ctx.calls.filter((c) => c.op === "arc")).toHaveLength(0);
    // two gripper jaws
    expect(ctx.calls.filter((c) => c.op === "moveTo")).toHaveLength(2);
  });

  it("is deterministic: identical frames record identical calls", () => {
    const f = frame({
      objects: [
        {
          id: "apple-0",
          category: "apple",
          color: "red",
          x: 0.3,
          y: 0.4,
          radius: 0.03,
          water: 0,
          held: false,
        },
      ],
    });
    const a = new RecordingContext();
    const b = new RecordingContext();
    renderScene(a, f);
    renderScene(b, structuredClone(f));
    expect(a.calls).toEqual(b.calls);
  });

  it("dim frames get a darkening overlay; bright frames do not", () => {
    const dim = new RecordingContext();
    renderScene(dim, frame({ brightness: 0.5 }));
    const overlay = dim.calls.filter(
      (c) => c.op === "fillRect" && c.alpha === 0.5 && c.fill === "#000000",
    );
    expect(overlay).toHaveLength(1);

    const bright = new RecordingContext();
    renderScene(bright, frame({ brightness: 1.0 }));
    expect(
      bright.calls.filter((c) => c.fill === "#000000" && c.op === "fillRect"),
    ).toHaveLength(0);
  });

  it("a held apple is drawn at the effector position, on top", () => {
    const f = frame({
      effector: { x: 0.62, y: 0.35, gripper: 1.0, tilt: 0.0 },
      objects: [
        {
          id: "plate-0",
          category: "plate",
          color: "white",
          x: 0.53,
          y: 0.22,
          radius: 0.07,
          water: 0,
          held: false,
        },
        {
          id: "apple-0",
          category: "apple",
          color: "red",
          x: 0.62,
          y: 0.35,
          radius: 0.03,
          water: 0,
          held: true,
        },
      ],
    });
    const ctx = new RecordingContext();
    renderScene(ctx, f);
    const arcs = ctx.calls.filter((c) => c.op === "arc");
    // held object drawn last (on top of the plate)
    const lastArc = arcs[arcs.length - 1]!;
    const { scale, margin } = DEFAULT_OPTIONS;
    expect(lastArc.args[0]).toBeCloseTo(margin + 0.62 * scale);
    expect(lastArc.args[1]).toBeCloseTo(margin + (1 - 0.35) * scale);
    const glyphs = ctx.calls.filter((c) => c.op === "fillText");
    expect(glyphs.map((c) => c.args[0])).toContain("a");
  });
});

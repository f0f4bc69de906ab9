// Deterministic top-down canvas renderer for scene frames. Geometry
// matches the simulator: the table is the unit square, y up. Drawing is
// a pure function of the frame, so a replayed frame renders identically
// to the live one.
export const DEFAULT_OPTIONS = { scale: 420, margin: 20 };
const COLOR_CSS = {
    red: "#d64541",
    green: "#3f9b4f",
    white: "#f2f2f2",
    blue: "#3b6fd4",
    yellow: "#e0c341",
    natural: "#c8a06a",
};
// single-character glyph per category, drawn at the object centre
const GLYPHS = {
    apple: "a",
    peach: "h",
    orange: "o",
    pomegranate: "p",
    cup: "U",
    block: "B",
    plate: "P",
};
function toPx(x, y, opt) {
    // table y grows away from the operator; canvas y grows downward
    return {
        px: opt.margin + x * opt.scale,
        py: opt.margin + (1 - y) * opt.scale,
    };
}
function drawObject(ctx, o, opt) {
    const { px, py } = toPx(o.x, o.y, opt);
    ctx.beginPath();
    ctx.arc(px, py, o.radius * opt.scale, 0, 2 * Math.PI);
    ctx.fillStyle = COLOR_CSS[o.color] ?? "#999999";
    ctx.fill();
    ctx.strokeStyle = o.held ? "#ff00aa" : "#222222";
    ctx.lineWidth = o.held ? 3 : 1;
    ctx.stroke();
    ctx.fillStyle = "#111111";
    ctx.font = "12px monospace";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(GLYPHS[o.category] ?? "?", px, py);
    if (o.water > 0) {
        ctx.fillStyle = "#58c2e8";
        ctx.beginPath();
        ctx.arc(px, py - o.radius * opt.scale, 3, 0, 2 * Math.PI);
        ctx.fill();
    }
}
function drawEffector(ctx, frame, opt) {
    const { px, py } = toPx(frame.effector.x, frame.effector.y, opt);
    const open = frame.effector.gripper < 0.5;
    ctx.strokeStyle = "#000000";
    ctx.lineWidth = 2;
    const half = open ? 10 : 5;
    ctx.beginPath();
    ctx.moveTo(px - half, py - 10);
    ctx.lineTo(px - half, py + 10);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(px + half, py - 10);
    ctx.lineTo(px + half, py + 10);
    ctx.stroke();
}
/**
 * Render one frame. Brightness is visualized by dimming the whole
 * table with a semi-transparent overlay after drawing.
 */
export function renderScene(ctx, frame, opt = DEFAULT_OPTIONS) {
    const side = opt.scale + 2 * opt.margin;
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#e8dcc8";
    ctx.fillRect(0, 0, side, side);
    // plate and free objects first, held object last so it sits on top
    const ordered = [...frame.objects].sort((a, b) => Number(a.held) - Number(b.held));
    for (const o of ordered) {
        drawObject(ctx, o, opt);
    }
    drawEffector(ctx, frame, opt);
    if (frame.brightness < 1) {
        ctx.globalAlpha = 1 - frame.brightness;
        ctx.fillStyle = "#000000";
        ctx.fillRect(0, 0, side, side);
        ctx.globalAlpha = 1;
    }
}

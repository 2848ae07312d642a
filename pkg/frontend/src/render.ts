/** Canvas rendering of the map and one rollout step.
 *
 * The scene model consumed here is built verbatim from parsed trace records
 * (see sceneAt): the renderer adds no positional arithmetic beyond the
 * world-to-screen transform.
 */

import { MapDoc, Trace, TraceRecord } from "./types.js";
import { agentTrack } from "./trace.js";

export interface Viewport {
  centerX: number;
  centerY: number;
  scale: number; // px per meter
}

export interface AgentSprite {
  record: TraceRecord;       // the exact parsed record being drawn
  length: number;
  width: number;
  trail: [number, number][]; // positions up to this step, verbatim
}

export interface Scene {
  step: number;
  sprites: AgentSprite[];
}

const TYPE_STYLE: Record<string, { color: string; dash: number[]; width: number }> = {
  centerline: { color: "#c8c8c8", dash: [4, 6], width: 1 },
  dashed: { color: "#9a9a9a", dash: [6, 6], width: 1 },
  solid: { color: "#555555", dash: [], width: 1.5 },
  boundary: { color: "#1c1c1c", dash: [], width: 2 },
  stop_line: { color: "#d02020", dash: [], width: 3 },
  other: { color: "#808080", dash: [2, 4], width: 1 },
};

const AGENT_COLORS = ["#d81b60", "#1e88e5", "#43a047", "#fb8c00", "#8e24aa",
                      "#00acc1", "#f4511e", "#5e35b1"];

export function agentColor(index: number): string {
  return AGENT_COLORS[index % AGENT_COLORS.length];
}

/** Build the drawable scene for a step straight from the trace records. */
export function sceneAt(trace: Trace, step: number,
                        dims: Map<string, { length: number; width: number }>): Scene {
  const sprites: AgentSprite[] = [];
  for (const id of trace.agents) {
    const track = agentTrack(trace, id);
    const k = Math.min(step, track.length - 1);
    const dim = dims.get(id) ?? { length: 4.5, width: 1.8 };
    sprites.push({
      record: track[k],
      length: dim.length,
      width: dim.width,
      trail: track.slice(0, k + 1).map((r) => [r.x, r.y]),
    });
  }
  return { step, sprites };
}

export function worldToScreen(v: Viewport, canvas: { width: number; height: number },
                              x: number, y: number): [number, number] {
  return [
    canvas.width / 2 + (x - v.centerX) * v.scale,
    canvas.height / 2 - (y - v.centerY) * v.scale,
  ];
}

export function screenToWorld(v: Viewport, canvas: { width: number; height: number },
                              px: number, py: number): [number, number] {
  return [
    v.centerX + (px - canvas.width / 2) / v.scale,
    v.centerY - (py - canvas.height / 2) / v.scale,
  ];
}

export function drawMap(ctx: CanvasRenderingContext2D, map: MapDoc, v: Viewport): void {
  const canvas = ctx.canvas;
  ctx.save();
  for (const area of map.drivable_area) {
    ctx.beginPath();
    area.forEach(([x, y], i) => {
      const [px, py] = worldToScreen(v, canvas, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.fillStyle = "#f2f0ec";
    ctx.fill();
  }
  for (const pl of map.polylines) {
    const style = TYPE_STYLE[pl.type] ?? TYPE_STYLE.other;
    ctx.beginPath();
    pl.points.forEach(([x, y], i) => {
      const [px, py] = worldToScreen(v, canvas, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.strokeStyle = style.color;
    ctx.setLineDash(style.dash);
    ctx.lineWidth = style.width;
    ctx.stroke();
  }
  ctx.restore();
}

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene,
                          v: Viewport, selected: string | null,
                          divergentAgents: Set<string>): void {
  const canvas = ctx.canvas;
  ctx.save();
  scene.sprites.forEach((sprite, idx) => {
    const color = agentColor(idx);
    // trail
    ctx.beginPath();
    sprite.trail.forEach(([x, y], i) => {
      const [px, py] = worldToScreen(v, canvas, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.strokeStyle = color + "70";
    ctx.setLineDash([]);
    ctx.lineWidth = 2;
    ctx.stroke();

    const r = sprite.record;
    const [cx, cy] = worldToScreen(v, canvas, r.x, r.y);
    ctx.translate(cx, cy);
    ctx.rotate(-r.heading);
    const L = sprite.length * v.scale;
    const W = sprite.width * v.scale;
    ctx.globalAlpha = r.alive ? 1.0 : 0.25;
    ctx.fillStyle = color;
    ctx.fillRect(-L / 2, -W / 2, L, W);
    if (r.id === selected) {
      ctx.strokeStyle = "#000";
      ctx.lineWidth = 2;
      ctx.strokeRect(-L / 2, -W / 2, L, W);
    }
    if (divergentAgents.has(r.id)) {
      ctx.strokeStyle = "#ffd600";
      ctx.lineWidth = 3;
      ctx.strokeRect(-L / 2 - 3, -W / 2 - 3, L + 6, W + 6);
    }
    ctx.rotate(r.heading);
    ctx.globalAlpha = 1.0;
    ctx.fillStyle = "#111";
    ctx.font = "11px sans-serif";
    ctx.fillText(r.id, 6, -6);
    ctx.translate(-cx, -cy);
  });
  ctx.restore();
}

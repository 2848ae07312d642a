/** App shell: scenario viewer, plan editor, side-by-side comparison. */

import { ApiClient } from "./api.js";
import { Playback, buildComparison, divergentAgentSet, markerSummary,
         Comparison } from "./compare.js";
import { brakingPreset, holdStopPreset, planToRows, proceedPreset,
         actionSequencePlan, validateActionTable } from "./planEditor.js";
import { Viewport, drawMap, drawScene, sceneAt, screenToWorld } from "./render.js";
import { Plan, ScenarioDetail, Trace } from "./types.js";

const $ = (id: string) => document.getElementById(id)!;

class App {
  api = new ApiClient(
    (document.querySelector("meta[name=service-url]") as HTMLMetaElement)?.content
    ?? "http://127.0.0.1:8700");
  detail: ScenarioDetail | null = null;
  avId: string | null = null;
  seed = 0;
  viewport: Viewport = { centerX: 0, centerY: 0, scale: 5 };
  comparison: Comparison | null = null;
  playback: Playback | null = null;
  requestToken = 0;
  planA: Plan | null = null;
  planB: Plan | null = null;

  dims(): Map<string, { length: number; width: number }> {
    const m = new Map<string, { length: number; width: number }>();
    this.detail?.initial.forEach((a) => m.set(a.id, { length: a.length, width: a.width }));
    return m;
  }

  async start(): Promise<void> {
    const names = await this.api.listScenarios().catch((e) => {
      this.banner(`service unreachable: ${e.message}`);
      return [] as string[];
    });
    const select = $("scenario") as HTMLSelectElement;
    select.innerHTML = names.map((n) => `<option>${n}</option>`).join("");
    select.onchange = () => this.loadScenario(select.value);
    if (names.length) await this.loadScenario(names[0]);

    ($("preset-proceed") as HTMLButtonElement).onclick = () => this.usePreset("proceed", "A");
    ($("preset-brake") as HTMLButtonElement).onclick = () => this.usePreset("brake", "B");
    ($("preset-stop") as HTMLButtonElement).onclick = () => this.usePreset("stop", "B");
    ($("apply-table") as HTMLButtonElement).onclick = () => this.applyTable();
    ($("run") as HTMLButtonElement).onclick = () => this.runComparison();
    ($("scrub") as HTMLInputElement).oninput = (e) => {
      this.playback?.seek(Number((e.target as HTMLInputElement).value));
    };
    ($("play") as HTMLButtonElement).onclick = () => {
      if (!this.playback) return;
      this.playback.playing ? this.playback.pause() : this.playback.play();
    };

    const canvas = $("map-canvas") as HTMLCanvasElement;
    canvas.onclick = (ev) => this.pickAgent(ev);
    canvas.onwheel = (ev) => {
      ev.preventDefault();
      this.viewport.scale *= ev.deltaY < 0 ? 1.15 : 0.87;
      this.drawScenario();
    };
    let dragging = false;
    let last: [number, number] = [0, 0];
    canvas.onmousedown = (ev) => { dragging = true; last = [ev.offsetX, ev.offsetY]; };
    canvas.onmouseup = () => { dragging = false; };
    canvas.onmousemove = (ev) => {
      if (!dragging) return;
      this.viewport.centerX -= (ev.offsetX - last[0]) / this.viewport.scale;
      this.viewport.centerY += (ev.offsetY - last[1]) / this.viewport.scale;
      last = [ev.offsetX, ev.offsetY];
      this.drawScenario();
    };
  }

  banner(text: string): void {
    const el = $("banner");
    el.textContent = text;
    el.style.display = text ? "block" : "none";
  }

  async loadScenario(name: string): Promise<void> {
    try {
      this.detail = await this.api.scenarioDetail(name, this.seed);
      this.banner("");
    } catch (e) {
      this.banner(`failed to load scenario: ${(e as Error).message}`);
      return;
    }
    this.avId = null;
    this.comparison = null;
    this.drawScenario();
    this.renderPlanPanel();
  }

  drawScenario(): void {
    if (!this.detail) return;
    const canvas = $("map-canvas") as HTMLCanvasElement;
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    drawMap(ctx, this.detail.map, this.viewport);
    // initial agents drawn as a synthetic step-0 scene
    const pseudo: Trace = {
      raw: "",
      records: this.detail.initial.map((a) => ({
        step: 0, t: 0, id: a.id, x: a.x, y: a.y, heading: a.heading,
        speed: a.speed, alive: true, reason: "none", action: null,
      })),
      agents: this.detail.initial.map((a) => a.id),
      steps: 1,
    };
    drawScene(ctx, sceneAt(pseudo, 0, this.dims()), this.viewport,
              this.avId, new Set());
  }

  pickAgent(ev: MouseEvent): void {
    if (!this.detail) return;
    const canvas = $("map-canvas") as HTMLCanvasElement;
    const [wx, wy] = screenToWorld(this.viewport, canvas, ev.offsetX, ev.offsetY);
    let best: { id: string; d: number } | null = null;
    for (const a of this.detail.initial) {
      const d = Math.hypot(a.x - wx, a.y - wy);
      if (d < 4 && (!best || d < best.d)) best = { id: a.id, d };
    }
    if (best) {
      this.avId = best.id;
      ($("av-label") as HTMLElement).textContent = `designated vehicle: ${best.id}`;
      this.drawScenario();
      this.renderPlanPanel();
    }
  }

  renderPlanPanel(): void {
    const table = $("action-table") as HTMLTextAreaElement;
    if (this.planB && this.planB.type === "action_sequence") {
      table.value = planToRows(this.planB)
        .map(([a, s]) => `${a.toFixed(2)}, ${s.toFixed(3)}`).join("\n");
    }
    ($("plan-a-label") as HTMLElement).textContent =
      this.planA ? `plan A: ${this.planA.type}` : "plan A: (none)";
    ($("plan-b-label") as HTMLElement).textContent =
      this.planB ? `plan B: ${this.planB.type}` : "plan B: (none)";
  }

  async usePreset(kind: "proceed" | "brake" | "stop", slot: "A" | "B"): Promise<void> {
    if (!this.detail || !this.avId) {
      this.banner("select the designated vehicle first");
      return;
    }
    let plan: Plan;
    if (kind === "proceed") {
      const free = await this.api.rollout(this.detail.name, this.seed);
      plan = proceedPreset(free, this.avId);
    } else if (kind === "brake") {
      const mag = Number(($("brake-mag") as HTMLInputElement).value || "2");
      const dur = Number(($("brake-dur") as HTMLInputElement).value || "5");
      plan = brakingPreset(mag, dur);
    } else {
      plan = holdStopPreset();
    }
    if (slot === "A") this.planA = plan;
    else this.planB = plan;
    this.banner("");
    this.renderPlanPanel();
  }

  applyTable(): void {
    const lines = ($("action-table") as HTMLTextAreaElement).value
      .split("\n").map((l) => l.trim()).filter(Boolean);
    const rows: [number, number][] = [];
    for (const line of lines) {
      const [a, s] = line.split(",").map(Number);
      rows.push([a, s]);
    }
    const horizon = 50;
    const holdLast = ($("hold-last") as HTMLInputElement).checked;
    const check = validateActionTable(rows, horizon, holdLast);
    const errors = $("plan-errors");
    errors.textContent = check.errors.join("; ");
    if (!check.ok) return;
    this.planB = actionSequencePlan(rows, holdLast);
    this.renderPlanPanel();
  }

  async runComparison(): Promise<void> {
    if (!this.detail || !this.avId || !this.planA || !this.planB) {
      this.banner("need a scenario, a designated vehicle, and two plans");
      return;
    }
    const token = ++this.requestToken;
    this.banner("running rollouts...");
    try {
      const [a, b] = await Promise.all([
        this.api.conditionalRollout(this.detail.name, this.avId, this.planA, this.seed),
        this.api.conditionalRollout(this.detail.name, this.avId, this.planB, this.seed),
      ]);
      if (token !== this.requestToken) return; // a newer request superseded us
      this.comparison = buildComparison(a, b);
      this.banner("");
      this.showComparison();
    } catch (e) {
      if (token === this.requestToken) this.banner((e as Error).message);
    }
  }

  showComparison(): void {
    const c = this.comparison!;
    ($("readout") as HTMLElement).innerHTML =
      markerSummary(c).map((s) => `<li>${s}</li>`).join("");
    const scrub = $("scrub") as HTMLInputElement;
    scrub.max = String(c.steps - 1);
    this.playback = new Playback(c.steps, (step) => this.drawComparison(step));
    this.playback.seek(0);
  }

  drawComparison(step: number): void {
    const c = this.comparison;
    if (!c || !this.detail) return;
    ($("scrub") as HTMLInputElement).value = String(step);
    ($("step-label") as HTMLElement).textContent =
      `step ${step} (t = ${(step * 0.2).toFixed(1)} s)`;
    const divergent = divergentAgentSet(c);
    (["pane-a", "pane-b"] as const).forEach((paneId, i) => {
      const canvas = $(paneId) as HTMLCanvasElement;
      const ctx = canvas.getContext("2d")!;
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      drawMap(ctx, this.detail!.map, this.viewport);
      drawScene(ctx, sceneAt(i === 0 ? c.a : c.b, step, this.dims()),
                this.viewport, this.avId, divergent);
    });
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new App().start();
});

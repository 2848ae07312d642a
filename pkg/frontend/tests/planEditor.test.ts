/** Plan presets, table validation and round-tripping. */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { actionSequencePlan, brakingPreset, holdStopPreset, planToRows,
         proceedPreset, validateActionTable } from "../src/planEditor.js";
import { parseTrace } from "../src/trace.js";

describe("plan presets", () => {
  it("brake -2 m/s^2 for 5 s is 25 braking steps then hold", () => {
    const plan = brakingPreset(2, 5);
    expect(plan.type).toBe("action_sequence");
    if (plan.type !== "action_sequence") return;
    expect(plan.actions).toHaveLength(25);
    for (const [a, s] of plan.actions) {
      expect(a).toBe(-2);
      expect(s).toBe(0);
    }
    expect(plan.hold_last).toBe(true);
  });

  it("proceed preset replays the rollout's own actions", () => {
    const here = new URL(".", import.meta.url).pathname;
    const free = parseTrace(readFileSync(here + "fixtures/trace_brake.jsonl", "utf8"));
    const plan = proceedPreset(free, "c3");
    if (plan.type !== "action_sequence") throw new Error("wrong type");
    const recorded = free.records.filter((r) => r.id === "c3" && r.action);
    expect(plan.actions).toHaveLength(recorded.length);
    expect(plan.actions[0]).toEqual(recorded[0].action);
  });

  it("hold stop brakes hard forever", () => {
    const plan = holdStopPreset();
    if (plan.type !== "action_sequence") throw new Error("wrong type");
    expect(plan.actions[0][0]).toBe(-8);
    expect(plan.hold_last).toBe(true);
  });
});

describe("table validation", () => {
  it("empty table is blocked", () => {
    const check = validateActionTable([], 50, true);
    expect(check.ok).toBe(false);
    expect(check.errors[0]).toContain("empty");
  });

  it("non-finite and out-of-range entries are flagged with their row", () => {
    const check = validateActionTable([[NaN, 0], [0, 2.0], [-9, 0]], 50, true);
    expect(check.ok).toBe(false);
    expect(check.errors.some((e) => e.includes("row 0"))).toBe(true);
    expect(check.errors.some((e) => e.includes("row 1"))).toBe(true);
    expect(check.errors.some((e) => e.includes("row 2"))).toBe(true);
  });

  it("short plans need hold-last", () => {
    expect(validateActionTable([[0, 0]], 50, false).ok).toBe(false);
    expect(validateActionTable([[0, 0]], 50, true).ok).toBe(true);
  });

  it("emitted JSON re-imported reproduces the table", () => {
    const rows: [number, number][] = [[-2, 0], [-1.5, 0.02], [0, -0.02]];
    const plan = actionSequencePlan(rows, true);
    const wire = JSON.parse(JSON.stringify(plan));
    expect(planToRows(wire)).toEqual(rows);
  });
});

/** Candidate-plan construction: presets plus a per-step action table.
 *
 * Emits the service's Plan JSON. Validation happens before submission so a
 * malformed table never reaches the wire.
 */

import { Plan, Trace } from "./types.js";
import { agentTrack } from "./trace.js";

export interface PlanValidation {
  ok: boolean;
  errors: string[];
}

export function validateActionTable(rows: [number, number][],
                                    horizon: number,
                                    holdLast: boolean): PlanValidation {
  const errors: string[] = [];
  if (rows.length === 0) errors.push("plan table is empty");
  rows.forEach(([a, s], i) => {
    if (!Number.isFinite(a) || !Number.isFinite(s)) {
      errors.push(`row ${i}: non-finite entry`);
    }
    if (a < -8 || a > 4) errors.push(`row ${i}: acceleration ${a} outside [-8, 4]`);
    if (s < -0.7 || s > 0.7) errors.push(`row ${i}: steering ${s} outside [-0.7, 0.7]`);
  });
  if (rows.length < horizon && !holdLast) {
    errors.push(`plan covers ${rows.length} of ${horizon} steps without hold-last`);
  }
  return { ok: errors.length === 0, errors };
}

export function actionSequencePlan(rows: [number, number][],
                                   holdLast = false): Plan {
  return { type: "action_sequence", actions: rows, hold_last: holdLast };
}

/** Constant braking of the given magnitude for a duration, then hold. */
export function brakingPreset(magnitude: number, durationS: number,
                              dt = 0.2): Plan {
  const steps = Math.round(durationS / dt);
  const rows: [number, number][] = [];
  for (let i = 0; i < steps; i++) rows.push([-Math.abs(magnitude), 0]);
  return { type: "action_sequence", actions: rows, hold_last: true };
}

/** Proceed: replay the actions the behavior model chose for the vehicle in
 * the unconditional rollout (the no-op conditioning). */
export function proceedPreset(unconditional: Trace, avId: string): Plan {
  const rows: [number, number][] = [];
  for (const rec of agentTrack(unconditional, avId)) {
    if (rec.action) rows.push([rec.action[0], rec.action[1]]);
  }
  return { type: "action_sequence", actions: rows, hold_last: true };
}

/** Hold stop: full braking until the rollout ends. */
export function holdStopPreset(): Plan {
  return { type: "action_sequence", actions: [[-8, 0]], hold_last: true };
}

/** Round-trip helper for the editable table view. */
export function planToRows(plan: Plan): [number, number][] {
  if (plan.type !== "action_sequence") {
    throw new Error(`only action_sequence plans are table-editable, got ${plan.type}`);
  }
  return plan.actions.map(([a, s]) => [a, s]);
}

/** Divergence analysis between two rollouts of the same scenario: for each
 * agent, the first step at which its positions differ by more than the
 * threshold. Pure arithmetic over the two traces, recomputable server-side.
 */

import { Trace } from "./types.js";
import { agentTrack } from "./trace.js";

export interface DivergenceMarker {
  agent: string;
  step: number;       // first step beyond the threshold
  time: number;       // seconds
  distance: number;   // meters at that step
}

export const DEFAULT_THRESHOLD_M = 0.5;

export function divergenceMarkers(
  a: Trace,
  b: Trace,
  threshold: number = DEFAULT_THRESHOLD_M,
): DivergenceMarker[] {
  const markers: DivergenceMarker[] = [];
  for (const agent of a.agents) {
    if (!b.agents.includes(agent)) continue;
    const ta = agentTrack(a, agent);
    const tb = agentTrack(b, agent);
    const n = Math.min(ta.length, tb.length);
    for (let k = 0; k < n; k++) {
      const d = Math.hypot(ta[k].x - tb[k].x, ta[k].y - tb[k].y);
      if (d > threshold) {
        markers.push({ agent, step: k, time: ta[k].t, distance: d });
        break;
      }
    }
  }
  return markers;
}

/** Final-position displacement per agent (the locality readout). */
export function finalDisplacement(a: Trace, b: Trace): Map<string, number> {
  const out = new Map<string, number>();
  for (const agent of a.agents) {
    const ta = agentTrack(a, agent);
    const tb = agentTrack(b, agent);
    if (!ta.length || !tb.length) continue;
    const ra = ta[ta.length - 1];
    const rb = tb[tb.length - 1];
    out.set(agent, Math.hypot(ra.x - rb.x, ra.y - rb.y));
  }
  return out;
}

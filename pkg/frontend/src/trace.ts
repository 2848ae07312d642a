/** Parsing and indexing of JSON-lines rollout traces.
 *
 * The UI performs no simulation: every trajectory drawn comes verbatim from
 * a service response, and parseTrace keeps the raw bytes so that can be
 * asserted.
 */

import { Trace, TraceRecord } from "./types.js";

export function parseTrace(raw: string): Trace {
  const records: TraceRecord[] = [];
  for (const line of raw.split("\n")) {
    if (!line.trim()) continue;
    records.push(JSON.parse(line) as TraceRecord);
  }
  const agents: string[] = [];
  let steps = 0;
  for (const r of records) {
    if (r.step === 0) agents.push(r.id);
    if (r.step + 1 > steps) steps = r.step + 1;
  }
  return { raw, records, agents, steps };
}

/** Records of one agent ordered by step (one record per step). */
export function agentTrack(trace: Trace, id: string): TraceRecord[] {
  return trace.records.filter((r) => r.id === id);
}

/** Position of an agent at a step, straight from the parsed records. */
export function positionAt(trace: Trace, id: string, step: number):
    [number, number] | null {
  const track = agentTrack(trace, id);
  if (step < 0 || step >= track.length) return null;
  return [track[step].x, track[step].y];
}

/** Wire types mirroring the simulation service's JSON schemas. */

export interface TraceRecord {
  step: number;
  t: number;
  id: string;
  x: number;
  y: number;
  heading: number;
  speed: number;
  alive: boolean;
  reason: string;
  action: [number, number] | null;
}

export interface MapPolyline {
  id: string;
  type: "centerline" | "dashed" | "solid" | "boundary" | "stop_line" | "other";
  points: [number, number][];
}

export interface MapDoc {
  polylines: MapPolyline[];
  routes: { id: string; polylines: string[]; speed_limits?: number[] }[];
  drivable_area: [number, number][][];
}

export interface InitialAgent {
  id: string;
  x: number;
  y: number;
  heading: number;
  speed: number;
  length: number;
  width: number;
  route: string;
}

export interface ScenarioDetail {
  name: string;
  seed: number;
  spec: unknown;
  map: MapDoc;
  initial: InitialAgent[];
}

export type Plan =
  | { type: "action_sequence"; actions: [number, number][]; hold_last?: boolean }
  | { type: "fixed_trajectory"; poses: [number, number, number][]; hold_last?: boolean }
  | { type: "reactive_brake"; av_id: string; trigger_m?: number; brake?: number; cruise_accel?: number };

/** A parsed rollout: the raw response bytes plus per-(step, agent) records.
 * Everything rendered must trace back to `raw` via `records`. */
export interface Trace {
  raw: string;
  records: TraceRecord[];
  agents: string[];
  steps: number;
}

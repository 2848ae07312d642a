/** Synchronized side-by-side playback of two rollouts with divergence
 * markers. One shared step index drives both panes; stale responses are
 * discarded via a request token owned by the app shell. */

import { DivergenceMarker, divergenceMarkers, finalDisplacement } from "./divergence.js";
import { Trace } from "./types.js";

export interface Comparison {
  a: Trace;
  b: Trace;
  markers: DivergenceMarker[];
  displacement: Map<string, number>;
  steps: number;
}

export function buildComparison(a: Trace, b: Trace, threshold = 0.5): Comparison {
  return {
    a,
    b,
    markers: divergenceMarkers(a, b, threshold),
    displacement: finalDisplacement(a, b),
    steps: Math.max(a.steps, b.steps),
  };
}

export function divergentAgentSet(c: Comparison): Set<string> {
  return new Set(c.markers.map((m) => m.agent));
}

/** Human-readable marker summary for the readout panel. */
export function markerSummary(c: Comparison): string[] {
  if (!c.markers.length) return ["no divergence: predictions coincide"];
  return c.markers
    .slice()
    .sort((m, n) => m.step - n.step)
    .map((m) => `${m.agent}: diverges at ${m.time.toFixed(1)} s `
      + `(${m.distance.toFixed(2)} m)`);
}

export class Playback {
  step = 0;
  playing = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(public steps: number, private onFrame: (step: number) => void) {}

  seek(step: number): void {
    this.step = Math.max(0, Math.min(this.steps - 1, step));
    this.onFrame(this.step);
  }

  play(intervalMs = 120): void {
    if (this.playing) return;
    this.playing = true;
    this.timer = setInterval(() => {
      if (this.step >= this.steps - 1) {
        this.pause();
        return;
      }
      this.seek(this.step + 1);
    }, intervalMs);
  }

  pause(): void {
    this.playing = false;
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}

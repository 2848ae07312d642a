/** HTTP client for the simulation service. Trace responses keep their raw
 * bytes so rendering stays byte-traceable to the server. */

import { Plan, ScenarioDetail, Trace } from "./types.js";
import { parseTrace } from "./trace.js";

export class ApiClient {
  constructor(public baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    const body = await resp.text();
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        message = (JSON.parse(body) as { error: string }).error;
      } catch {
        /* not JSON; keep the status text */
      }
      throw new Error(message);
    }
    return JSON.parse(body) as T;
  }

  listScenarios(): Promise<string[]> {
    return this.json<string[]>("/scenarios");
  }

  scenarioDetail(name: string, seed = 0): Promise<ScenarioDetail> {
    return this.json<ScenarioDetail>(`/scenarios/${name}?seed=${seed}`);
  }

  private async trace(path: string, body: unknown): Promise<Trace> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        message = (JSON.parse(text) as { error: string }).error;
      } catch {
        /* raw status */
      }
      throw new Error(message);
    }
    return parseTrace(text);
  }

  rollout(scenario: string, seed: number, mode = "mean"): Promise<Trace> {
    return this.trace("/rollout", { scenario, seed, mode });
  }

  conditionalRollout(scenario: string, avId: string, plan: Plan, seed: number,
                     mode = "mean"): Promise<Trace> {
    return this.trace("/rollout/conditional",
                      { scenario, av_id: avId, plan, seed, mode });
  }
}

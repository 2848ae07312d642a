"""Closed-loop prediction metrics: RMSE after 10 s, collision and off-track
rates, and the executed-action histograms.

Evaluates the scripted controller against its own rollouts (the RMSE-zero
sanity case) and an untrained policy against the same ground truth.

Run:  python3 demos/05_metrics_and_histograms.py
"""

import json

from condsim.conditional import evaluate, predict, situation_from_rollout
from condsim.experts import ScriptedExpert
from condsim.fixtures import load_fixture_map, intersection_scenario
from condsim.nets import init_policy_params
from condsim.sim_engine import spawn_situation

import numpy as np


def main():
    road_map = load_fixture_map("four_way_stop.json")
    situations = []
    for i in range(6):
        spec = intersection_scenario(2, np.random.default_rng(100 + i))
        world = spawn_situation(road_map, spec, seed=i)
        gt = predict(world, ScriptedExpert(road_map), horizon=50, dt=0.2)
        situations.append(situation_from_rollout(gt, horizon=50))

    expert_report = evaluate(situations, ScriptedExpert(road_map))
    print("scripted vs itself:   rmse %.3f m, collision %.1f%%, off-track %.1f%%"
          % (expert_report.rmse, 100 * expert_report.collision_rate,
             100 * expert_report.off_track_rate))

    untrained = evaluate(situations, init_policy_params(0))
    print("untrained policy:     rmse %.3f m, collision %.1f%%, off-track %.1f%%"
          % (untrained.rmse, 100 * untrained.collision_rate,
             100 * untrained.off_track_rate))

    hist = expert_report.histograms["acceleration"]
    peak = max(hist["density"])
    print("expert acceleration histogram peak bin density: %.3f" % peak)
    with open("metrics_demo.json", "w") as f:
        json.dump(untrained.to_dict(), f, indent=2)
    with open("histograms_demo.csv", "w") as f:
        f.write(expert_report.histograms_csv())
    print("metrics_demo.json and histograms_demo.csv written")


if __name__ == "__main__":
    main()

"""The what-if loop: one vehicle follows a candidate plan, everyone else
reacts. Two candidate plans for the right-turning vehicle 'av' at the
all-way stop (proceed vs. brake) produce visibly different predictions for
the oncoming left-turner 'c3', while the far-away 'd9' is untouched.

Run:  python3 demos/04_conditional_what_if.py [--out demo_whatif.png]
"""

import argparse

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from condsim.conditional import (ActionSequence, FixedTrajectory,
                                 predict_conditional)
from condsim.experts import ScriptedExpert
from condsim.fixtures import conflict_scenario, load_fixture_map
from condsim.sim_engine import Action, spawn_situation

from importlib import import_module
draw_map = import_module("01_map_and_simulation").draw_map  # same folder


def proceed_plan(road_map, horizon=50, speed=3.2):
    route = road_map.routes["e_right"]
    poses = []
    for k in range(1, horizon + 1):
        pos, h = route.point_at(27.5 + speed * 0.2 * k)
        poses.append((float(pos[0]), float(pos[1]), float(h)))
    return FixedTrajectory(tuple(poses))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_whatif.png")
    args = parser.parse_args()

    road_map = load_fixture_map("four_way_stop.json")
    world = spawn_situation(road_map, conflict_scenario(), seed=3)

    plans = {
        "proceed (fixed trajectory)": proceed_plan(road_map),
        "brake -2 m/s^2 for 5 s": ActionSequence(
            tuple([Action(-2.0, 0.0)] * 25), hold_last=True),
    }
    fig, axes = plt.subplots(1, 2, figsize=(13, 6.5))
    for ax, (name, plan) in zip(axes, plans.items()):
        result = predict_conditional(world, ScriptedExpert(road_map), "av",
                                     plan, horizon=50, dt=0.2, seed=0)
        draw_map(ax, road_map)
        for agent in world.agents:
            traj = result.trajectory(agent.id)
            alive = traj[:, 4] > 0
            ax.plot(traj[alive, 0], traj[alive, 1],
                    lw=3 if agent.id == "av" else 2,
                    label=agent.id, zorder=5)
            ax.plot(traj[0, 0], traj[0, 1], "o", color=ax.lines[-1].get_color())
        c3_end = result.trajectory("c3")[-1, :2]
        print(f"{name}: c3 ends at ({c3_end[0]:.1f}, {c3_end[1]:.1f})")
        ax.set_title(name)
        ax.set_aspect("equal")
        ax.set_xlim(-45, 45)
        ax.set_ylim(-45, 45)
        ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=110, bbox_inches="tight")
    print(f"figure -> {args.out}")


if __name__ == "__main__":
    main()

"""Tour of the map model and the closed-loop simulator.

Loads the shipped all-way-stop intersection, spawns the conflict scenario,
rolls it forward with the scripted controller, and renders the result.

Run:  python3 demos/01_map_and_simulation.py [--out demo_sim.png]
"""

import argparse

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from condsim.conditional import predict
from condsim.experts import ScriptedExpert
from condsim.fixtures import conflict_scenario, load_fixture_map
from condsim.map_core import query_radius, route_progress
from condsim.sim_engine import spawn_situation


def draw_map(ax, road_map):
    colors = {"centerline": "#bbbbbb", "dashed": "#999999", "solid": "#444444",
              "boundary": "#222222", "stop_line": "#cc2222", "other": "#888888"}
    for pl in road_map.polylines.values():
        pts = np.vstack([pl.starts, pl.ends[-1:]])
        style = "--" if pl.element_type in ("centerline", "dashed") else "-"
        ax.plot(pts[:, 0], pts[:, 1], style, lw=1.2,
                color=colors[pl.element_type],
                zorder=1 if pl.element_type == "centerline" else 2)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo_sim.png")
    args = parser.parse_args()

    road_map = load_fixture_map("four_way_stop.json")
    print(f"map: {len(road_map.polylines)} polylines, {len(road_map.routes)} routes")

    nearby = query_radius(road_map, (0.0, 0.0), 30.0)
    print(f"within 30 m of the center: {sum(len(p.vectors) for p in nearby)} "
          f"vectors in {len(nearby)} polylines")

    world = spawn_situation(road_map, conflict_scenario(), seed=3)
    for agent in world.agents:
        s, remaining = route_progress(road_map.routes[agent.route], agent.position)
        print(f"  {agent.id}: route {agent.route}, {s:.1f} m in, "
              f"{remaining:.1f} m to go, v0={agent.speed:.1f}")

    result = predict(world, ScriptedExpert(road_map), horizon=50, dt=0.2)
    print("events:", result.events or "none")

    fig, ax = plt.subplots(figsize=(7, 7))
    draw_map(ax, road_map)
    for agent in world.agents:
        traj = result.trajectory(agent.id)
        alive = traj[:, 4] > 0
        ax.plot(traj[alive, 0], traj[alive, 1], lw=2, label=agent.id)
        ax.plot(traj[0, 0], traj[0, 1], "o", ms=6, color=ax.lines[-1].get_color())
    ax.set_aspect("equal")
    ax.set_xlim(-60, 60)
    ax.set_ylim(-60, 60)
    ax.legend(loc="upper left")
    ax.set_title("scripted controller, 10 s rollout")
    fig.savefig(args.out, dpi=110, bbox_inches="tight")
    print(f"figure -> {args.out}")


if __name__ == "__main__":
    main()

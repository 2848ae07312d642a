"""Desk-scale training recipes over the shipped fixtures.

One place defines the scenario distributions, demonstration generation and
validation rollouts, so the CLI, the demos and the verification suite all
train the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .airl import ExpertBuffer, collect_demonstrations
from .conditional import EvalSituation, evaluate, predict, situation_from_rollout
from .experts import ScriptedExpert
from .fixtures import load_fixture_map
from .map_core import RoadMap
from .rl_ppo import Environment
from .sim_engine import spawn_situation

__all__ = ["DeskPreset", "make_preset", "validation_situations",
           "validation_rmse", "perturbed_worlds"]


@dataclass
class DeskPreset:
    name: str
    road_map: RoadMap
    horizon: int
    dt: float

    def scenario_fn(self, index: int) -> dict:
        raise NotImplementedError

    def make_envs(self, n_envs: int, seed: int) -> list[Environment]:
        return [Environment(self.road_map, self.scenario_fn, self.horizon,
                            self.dt, seed=seed, env_id=k)
                for k in range(n_envs)]

    def expert(self) -> ScriptedExpert:
        return ScriptedExpert(self.road_map)

    def demonstrations(self, n_episodes: int, seed: int = 0) -> ExpertBuffer:
        return collect_demonstrations(self.road_map, self.scenario_fn,
                                      self.expert(), n_episodes,
                                      horizon=self.horizon, dt=self.dt, seed=seed)


class StraightPreset(DeskPreset):
    """Single constant-speed lane follower on the straight road."""

    def __init__(self):
        super().__init__(name="straight",
                         road_map=load_fixture_map("straight_road.json"),
                         horizon=50, dt=0.2)

    def scenario_fn(self, index: int) -> dict:
        return {"agents": [{"id": "a0", "route": "main",
                            "s0": [4.0, 20.0], "v0": [5.0, 8.0]}]}


class IntersectionPreset(DeskPreset):
    """Sparse all-way-stop traffic: 1-3 vehicles on distinct arms."""

    def __init__(self, max_agents: int = 3):
        super().__init__(name="intersection",
                         road_map=load_fixture_map("four_way_stop.json"),
                         horizon=50, dt=0.2)
        self.max_agents = max_agents

    def scenario_fn(self, index: int) -> dict:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=8881, spawn_key=(index,)))
        r = rng.random()
        n = 1 if r < 0.55 else (2 if r < 0.9 else 3)
        n = min(n, self.max_agents)
        arms = list(rng.permutation(["e", "n", "w", "s"]))[:n]
        agents = []
        for i, arm in enumerate(arms):
            turn = str(rng.choice(["straight", "right", "left"]))
            agents.append({"id": f"a{i}", "route": f"{arm}_{turn}",
                           "s0": [6.0, 38.0], "v0": [4.0, 7.0]})
        return {"agents": agents}


def make_preset(name: str) -> DeskPreset:
    if name == "straight":
        return StraightPreset()
    if name == "intersection":
        return IntersectionPreset()
    raise ValueError(f"unknown preset '{name}' (try 'straight' or 'intersection')")


def validation_situations(preset: DeskPreset, n: int, seed: int = 900) -> list[EvalSituation]:
    """Expert rollouts from held-out spawns, frozen as ground truth."""
    situations = []
    for i in range(n):
        spec = dict(preset.scenario_fn(10_000 + seed + i), dt=preset.dt)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        world0 = spawn_situation(preset.road_map, spec, int(ss.generate_state(1)[0]))
        gt = predict(world0, preset.expert(), horizon=preset.horizon,
                     dt=preset.dt, seed=0, mode="mean")
        situations.append(situation_from_rollout(gt, preset.horizon))
    return situations


def validation_rmse(situations: list[EvalSituation], policy) -> float:
    return evaluate(situations, policy, seed=0, mode="mean").rmse


def perturbed_worlds(preset: DeskPreset, n: int, seed: int = 5150,
                     lateral: float = 1.0, heading: float = 0.15,
                     speed: float = 2.0):
    """Initial states jittered off the expert manifold, for the covariate-
    shift robustness comparison."""
    from dataclasses import replace

    from .geom import wrap_angle

    worlds = []
    rng = np.random.default_rng(seed)
    for i in range(n):
        spec = dict(preset.scenario_fn(20_000 + i), dt=preset.dt)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        world = spawn_situation(preset.road_map, spec, int(ss.generate_state(1)[0]))
        agents = []
        for a in world.agents:
            normal = np.array([-np.sin(a.heading), np.cos(a.heading)])
            agents.append(replace(
                a,
                position=a.position + normal * rng.uniform(-lateral, lateral),
                heading=float(wrap_angle(a.heading + rng.uniform(-heading, heading))),
                speed=max(0.0, a.speed + rng.uniform(-speed, speed))))
        worlds.append(replace(world, agents=tuple(agents)))
    return worlds

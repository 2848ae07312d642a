"""Closed-loop world stepping: observe -> act -> integrate, plus removal rules.

WorldState is an immutable value; step() is a pure function of
(world, actions), so identical inputs give bitwise-identical outputs and
independent environments can run in parallel with no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geom import obb_corners, obb_overlap, wrap_angle
from .map_core import RoadMap

__all__ = [
    "Action", "AgentState", "WorldState", "ActionContractError", "SpawnError",
    "step", "integrate_bicycle", "detect_collisions", "spawn_situation",
    "ACCEL_MIN", "ACCEL_MAX", "STEER_MAX", "WHEELBASE_RATIO",
    "DEFAULT_DT", "DEFAULT_HORIZON",
]

# Action clamps; Fig-3-style histograms span roughly this envelope.
ACCEL_MIN, ACCEL_MAX = -8.0, 4.0
STEER_MAX = 0.7
WHEELBASE_RATIO = 0.6  # wheelbase = 0.6 * vehicle length

DEFAULT_DT = 0.2
DEFAULT_HORIZON = 50

ROUTE_END_TOL = 1e-9


class ActionContractError(ValueError):
    """Raised when step() receives a malformed action map."""


class SpawnError(RuntimeError):
    """Raised when a scenario cannot be instantiated without overlap."""


@dataclass(frozen=True)
class Action:
    acceleration: float
    steering: float

    def clamped(self) -> "Action":
        return Action(float(np.clip(self.acceleration, ACCEL_MIN, ACCEL_MAX)),
                      float(np.clip(self.steering, -STEER_MAX, STEER_MAX)))


@dataclass(frozen=True)
class AgentState:
    id: str
    position: np.ndarray  # (2,)
    heading: float        # rad, (-pi, pi]
    speed: float          # m/s, >= 0
    length: float
    width: float
    route: str
    alive: bool = True
    removal_reason: str = "none"

    def corners(self) -> np.ndarray:
        return obb_corners(self.position, self.heading, self.length, self.width)


@dataclass(frozen=True)
class WorldState:
    k: int
    time: float
    agents: tuple          # AgentState, stable order, unique ids
    road_map: RoadMap
    seed: int
    dt: float = DEFAULT_DT
    events: tuple = ()     # removal / collision events from the step producing this state

    def agent(self, agent_id: str) -> AgentState:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"unknown agent id '{agent_id}'")

    def alive_agents(self) -> list[AgentState]:
        return [a for a in self.agents if a.alive]

    def alive_ids(self) -> list[str]:
        return [a.id for a in self.agents if a.alive]


def integrate_bicycle(state: AgentState, action: Action, dt: float) -> AgentState:
    """Kinematic bicycle step: midpoint heading, mean speed, speed floor at 0."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    wheelbase = WHEELBASE_RATIO * state.length
    new_speed = max(0.0, state.speed + action.acceleration * dt)
    dheading = (state.speed / wheelbase) * np.tan(action.steering) * dt
    new_heading = float(wrap_angle(state.heading + dheading))
    mid_heading = state.heading + 0.5 * dheading
    mean_speed = 0.5 * (state.speed + new_speed)
    new_pos = state.position + mean_speed * dt * np.array(
        [np.cos(mid_heading), np.sin(mid_heading)])
    return replace(state, position=new_pos, heading=new_heading, speed=new_speed)


def detect_collisions(world: WorldState) -> list[tuple[str, str]]:
    """All unordered pairs of alive agents whose footprints overlap."""
    alive = world.alive_agents()
    if len(alive) < 2:
        return []
    centers = np.array([a.position for a in alive])
    radii = np.array([0.5 * np.hypot(a.length, a.width) for a in alive])
    corners = [a.corners() for a in alive]
    pairs = []
    for i in range(len(alive)):
        for j in range(i + 1, len(alive)):
            gap = np.hypot(*(centers[i] - centers[j]))
            if gap > radii[i] + radii[j]:
                continue  # broad phase: circumscribed circles disjoint
            if obb_overlap(corners[i], corners[j]):
                pairs.append((alive[i].id, alive[j].id))
    return pairs


def _check_actions(world: WorldState, actions: dict, expected_ids: set):
    got = set(actions)
    if got != expected_ids:
        missing = sorted(expected_ids - got)
        extra = sorted(got - expected_ids)
        raise ActionContractError(
            f"actions must cover exactly the alive agents; missing={missing}, extra={extra}")
    for aid, act in actions.items():
        if not (np.isfinite(act.acceleration) and np.isfinite(act.steering)):
            raise ActionContractError(f"non-finite action for agent '{aid}': {act}")


def step(world: WorldState, actions: dict, *,
         pose_overrides: dict | None = None,
         exempt_from_removal: frozenset = frozenset()) -> WorldState:
    """Advance one timestep.

    `actions` must contain exactly the alive agent ids (minus any in
    `pose_overrides`, whose pose is set directly — the hook used by
    plan-conditioned rollouts). Removal runs in the fixed order
    route_end -> off_track -> collision; removed agents stay in the record.
    """
    pose_overrides = pose_overrides or {}
    expected = set(world.alive_ids()) - set(pose_overrides)
    _check_actions(world, actions, expected)

    new_agents = []
    for agent in world.agents:
        if not agent.alive:
            new_agents.append(agent)
            continue
        if agent.id in pose_overrides:
            pos, heading, speed = pose_overrides[agent.id]
            new_agents.append(replace(
                agent, position=np.asarray(pos, float),
                heading=float(wrap_angle(heading)), speed=max(0.0, float(speed))))
        else:
            new_agents.append(integrate_bicycle(
                agent, actions[agent.id].clamped(), world.dt))

    events = []

    def remove(agent: AgentState, reason: str) -> AgentState:
        events.append((reason, agent.id))
        return replace(agent, alive=False, removal_reason=reason)

    # 1) route end
    for i, agent in enumerate(new_agents):
        if not agent.alive or agent.id in exempt_from_removal:
            continue
        route = world.road_map.routes[agent.route]
        arclength, _ = route.project(agent.position)
        remaining = route.total_length - arclength
        if remaining <= ROUTE_END_TOL:
            new_agents[i] = remove(agent, "route_end")

    # 2) off track
    for i, agent in enumerate(new_agents):
        if not agent.alive or agent.id in exempt_from_removal:
            continue
        corners = agent.corners()
        if not world.road_map.contains_points(corners).all():
            new_agents[i] = remove(agent, "off_track")

    # 3) collision (both members removed; exempt agents register but survive)
    interim = replace(world, agents=tuple(new_agents))
    for a, b in detect_collisions(interim):
        events.append(("collision_pair", a, b))
        for cid in (a, b):
            if cid in exempt_from_removal:
                continue
            idx = next(i for i, ag in enumerate(new_agents) if ag.id == cid)
            if new_agents[idx].alive:
                new_agents[idx] = replace(new_agents[idx], alive=False,
                                          removal_reason="collision")
                events.append(("collision", cid))

    return WorldState(k=world.k + 1, time=(world.k + 1) * world.dt,
                      agents=tuple(new_agents), road_map=world.road_map,
                      seed=world.seed, dt=world.dt, events=tuple(events))


def _sample(rng, value):
    if isinstance(value, (list, tuple)):
        lo, hi = float(value[0]), float(value[1])
        return float(rng.uniform(lo, hi))
    return float(value)


def spawn_situation(road_map: RoadMap, spec: dict, seed: int) -> WorldState:
    """Place the scenario's agents on their routes without overlap.

    Reproducible: the same (spec, seed) yields a bitwise-identical world.
    """
    if "agents" not in spec or not isinstance(spec["agents"], list):
        raise SpawnError("scenario spec missing 'agents' list")
    rng = np.random.default_rng(seed)
    dt = float(spec.get("dt", DEFAULT_DT))
    placed: list[AgentState] = []
    for i, entry in enumerate(spec["agents"]):
        if "route" not in entry:
            raise SpawnError(f"agents[{i}]: missing 'route'")
        route_choice = entry["route"]
        length = float(entry.get("length", 4.5))
        width = float(entry.get("width", 1.8))
        aid = str(entry.get("id", f"a{i}"))
        if any(p.id == aid for p in placed):
            raise SpawnError(f"agents[{i}]: duplicate agent id '{aid}'")
        ok = False
        for _ in range(1000):
            rid = (str(rng.choice(route_choice))
                   if isinstance(route_choice, (list, tuple)) else str(route_choice))
            if rid not in road_map.routes:
                raise SpawnError(f"agents[{i}]: unknown route '{rid}'")
            route = road_map.routes[rid]
            s0 = _sample(rng, entry.get("s0", 0.0))
            v0 = _sample(rng, entry.get("v0", 0.0))
            if s0 < 0 or s0 > route.total_length:
                raise SpawnError(
                    f"agents[{i}]: s0={s0} outside route '{rid}' "
                    f"(length {route.total_length:.1f})")
            if v0 < 0:
                raise SpawnError(f"agents[{i}]: negative v0")
            pos, heading = route.point_at(s0)
            cand = AgentState(id=aid, position=pos.copy(), heading=heading,
                              speed=v0, length=length, width=width, route=rid)
            corners = cand.corners()
            if not road_map.contains_points(corners).all():
                continue
            if any(obb_overlap(corners, p.corners()) for p in placed):
                continue
            placed.append(cand)
            ok = True
            break
        if not ok:
            raise SpawnError(
                f"agents[{i}]: could not place without overlap after 1000 attempts")
    return WorldState(k=0, time=0.0, agents=tuple(placed), road_map=road_map,
                      seed=seed, dt=dt)

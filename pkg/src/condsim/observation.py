"""Agent-centric graph observations.

Each agent observes the world in its own frame (self at origin, heading
along +x): one 8-scalar feature row per agent within the radius (self
first), and the map vectors within the radius as 11-scalar rows grouped by
polyline. Route flags are set from the observing agent's route only.
Pure function of an immutable WorldState, so freely parallel across agents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import to_frame, wrap_angle
from .map_core import ELEMENT_TYPES, query_radius
from .sim_engine import WorldState

__all__ = ["Observation", "build_observation", "observation_to_json",
           "observation_from_json", "AGENT_FEATURE_DIM", "VECTOR_FEATURE_DIM",
           "DEFAULT_RADIUS"]

AGENT_FEATURE_DIM = 8    # width, length, x, y, cos, sin, speed, speed limit
VECTOR_FEATURE_DIM = 11  # start xy, end xy, 6-way one-hot type, route flag
DEFAULT_RADIUS = 30.0

_TYPE_INDEX = {name: i for i, name in enumerate(ELEMENT_TYPES)}


@dataclass(frozen=True)
class Observation:
    target_id: str
    agent_ids: tuple                # ids per agent row, [0] == target_id
    agent_features: np.ndarray      # (A, 8) float32
    vector_features: np.ndarray     # (N, 11) float32
    polyline_slices: tuple          # (polyline_id, element_type, row_start, row_end)
    radius: float

    @property
    def n_neighbors(self) -> int:
        return len(self.agent_ids) - 1

    @property
    def n_polylines(self) -> int:
        return len(self.polyline_slices)


def _agent_row(agent, target, limit: float) -> np.ndarray:
    rel = to_frame(agent.position[None, :], target.position, target.heading)[0]
    rel_heading = float(wrap_angle(agent.heading - target.heading))
    return np.array([agent.width, agent.length, rel[0], rel[1],
                     np.cos(rel_heading), np.sin(rel_heading),
                     agent.speed, limit])


def build_observation(world: WorldState, target_id: str,
                      radius: float = DEFAULT_RADIUS,
                      noise_std: float = 0.0, rng=None) -> Observation:
    """Observation of `world` from `target_id`'s perspective.

    noise_std > 0 perturbs the continuous feature columns (hook for noisy
    observation models; off by default).
    """
    target = world.agent(target_id)
    if not target.alive:
        raise ValueError(f"cannot observe from removed agent '{target_id}'")
    road_map = world.road_map

    def current_limit(agent):
        route = road_map.routes[agent.route]
        s, _ = route.project(agent.position)
        return route.speed_limit_at(s)

    neighbors = sorted(
        (a for a in world.alive_agents()
         if a.id != target_id
         and np.hypot(*(a.position - target.position)) <= radius),
        key=lambda a: a.id)
    rows = [_agent_row(target, target, current_limit(target))]
    rows += [_agent_row(n, target, current_limit(n)) for n in neighbors]
    agent_features = np.asarray(rows, np.float32)
    agent_ids = (target_id,) + tuple(n.id for n in neighbors)

    route_pids = set(road_map.routes[target.route].polyline_ids)
    clipped = sorted(query_radius(road_map, target.position, radius),
                     key=lambda pl: pl.id)
    vec_rows = []
    slices = []
    for pl in clipped:
        start = len(vec_rows)
        starts = to_frame(pl.starts, target.position, target.heading)
        ends = to_frame(pl.ends, target.position, target.heading)
        onehot = np.zeros(6)
        onehot[_TYPE_INDEX[pl.element_type]] = 1.0
        flag = 1.0 if (pl.element_type == "centerline" and pl.id in route_pids) else 0.0
        for s, e in zip(starts, ends):
            vec_rows.append(np.concatenate([s, e, onehot, [flag]]))
        slices.append((pl.id, pl.element_type, start, len(vec_rows)))
    vector_features = (np.asarray(vec_rows, np.float32) if vec_rows
                       else np.zeros((0, VECTOR_FEATURE_DIM), np.float32))

    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        agent_features = agent_features.copy()
        agent_features[:, 2:4] += rng.normal(0.0, noise_std, agent_features[:, 2:4].shape)
        if len(vector_features):
            vector_features = vector_features.copy()
            vector_features[:, :4] += rng.normal(0.0, noise_std, vector_features[:, :4].shape)
        agent_features = agent_features.astype(np.float32)
        vector_features = vector_features.astype(np.float32)

    return Observation(target_id=target_id, agent_ids=agent_ids,
                       agent_features=agent_features,
                       vector_features=vector_features,
                       polyline_slices=tuple(slices), radius=radius)


def observation_to_json(obs: Observation) -> dict:
    """Debug dump for inspectors; numbers as plain lists."""
    return {
        "target_id": obs.target_id,
        "radius": obs.radius,
        "agents": [
            {"id": aid, "features": [float(v) for v in row]}
            for aid, row in zip(obs.agent_ids, obs.agent_features)
        ],
        "polylines": [
            {"id": pid, "type": etype,
             "vectors": [[float(v) for v in row]
                         for row in obs.vector_features[s:e]]}
            for pid, etype, s, e in obs.polyline_slices
        ],
    }


def observation_from_json(doc: dict) -> Observation:
    agents = doc["agents"]
    agent_features = np.asarray([a["features"] for a in agents], np.float32)
    vec_rows = []
    slices = []
    for pl in doc["polylines"]:
        start = len(vec_rows)
        vec_rows.extend(pl["vectors"])
        slices.append((pl["id"], pl["type"], start, len(vec_rows)))
    vector_features = (np.asarray(vec_rows, np.float32) if vec_rows
                       else np.zeros((0, VECTOR_FEATURE_DIM), np.float32))
    return Observation(target_id=doc["target_id"],
                       agent_ids=tuple(a["id"] for a in agents),
                       agent_features=agent_features,
                       vector_features=vector_features,
                       polyline_slices=tuple(slices),
                       radius=float(doc["radius"]))

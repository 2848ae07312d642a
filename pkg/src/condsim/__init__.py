"""condsim: closed-loop multi-agent traffic simulation with learned
behavior policies, for plan-conditioned motion prediction."""

from .map_core import (RoadMap, Route, Polyline, MapVector, load_map,
                       query_radius, is_on_track, route_progress)
from .sim_engine import (Action, AgentState, WorldState, step,
                         integrate_bicycle, detect_collisions, spawn_situation)
from .observation import Observation, build_observation, observation_to_json

__version__ = "0.1.0"

__all__ = [
    "RoadMap", "Route", "Polyline", "MapVector", "load_map", "query_radius",
    "is_on_track", "route_progress", "Action", "AgentState", "WorldState",
    "step", "integrate_bicycle", "detect_collisions", "spawn_situation",
    "Observation", "build_observation", "observation_to_json",
]

"""Shipped desk-scale maps and scenarios.

Builders produce map documents in the repo's JSON schema; the generated
files under fixtures/data/ are committed so tests can load them from disk,
and a round-trip test keeps file and builder in sync.

Intersection geometry: four 50 m arms meeting in a 12 m box, one 3.5 m lane
per direction (lane centers at +-1.75 m), an all-way stop line at every
entry, and 12 routes (left / straight / right from each arm).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .map_core import RoadMap, parse_map

__all__ = [
    "straight_road_doc", "four_way_stop_doc", "fixture_path", "load_fixture_map",
    "straight_scenario", "intersection_scenario", "conflict_scenario",
    "ARM_REACH", "BOX", "LANE_OFFSET", "HALF_WIDTH",
]

ARM_REACH = 56.0    # outer end of each arm (pavement)
ROUTE_REACH = 51.5  # routes stop short so finishing cars stay on the pavement
BOX = 6.0           # intersection box half-extent (stop lines sit here)
LANE_OFFSET = 1.75  # lane center offset from the road axis
HALF_WIDTH = 3.5    # half of the paved width

APPROACH_LIMIT = 8.33  # 30 km/h
TURN_LIMIT = 4.5


def _subdivide(a, b, spacing):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(1, int(np.ceil(np.hypot(*(b - a)) / spacing)))
    return [list(a + (b - a) * t) for t in np.linspace(0.0, 1.0, n + 1)]


def _chain(points_lists):
    """Join consecutive point lists that share endpoints."""
    out = list(points_lists[0])
    for pts in points_lists[1:]:
        out.extend(pts[1:])
    return out


def _arc(center, radius, a0, a1, n):
    angles = np.linspace(a0, a1, n + 1)
    return [[center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)]
            for a in angles]


def straight_road_doc(length: float = 120.0, limit: float = APPROACH_LIMIT) -> dict:
    """One centerline, two boundaries, one route: the smallest useful map."""
    return {
        "polylines": [
            # route stops 4.5 m short of the pavement end so a finishing car's
            # front overhang stays on the drivable area
            {"id": "center", "type": "centerline",
             "points": _subdivide((2.5, 0.0), (length - 4.5, 0.0), 10.0)},
            {"id": "edge_n", "type": "boundary",
             "points": _subdivide((0.0, HALF_WIDTH), (length, HALF_WIDTH), 10.0)},
            {"id": "edge_s", "type": "boundary",
             "points": _subdivide((0.0, -HALF_WIDTH), (length, -HALF_WIDTH), 10.0)},
        ],
        "routes": [
            {"id": "main", "polylines": ["center"], "speed_limits": [limit]},
        ],
        "drivable_area": [[[0.0, -HALF_WIDTH], [length, -HALF_WIDTH],
                           [length, HALF_WIDTH], [0.0, HALF_WIDTH]]],
    }


def _rot90(pts, k):
    """Rotate a point list by k*90 degrees about the origin."""
    out = pts
    for _ in range(k % 4):
        out = [[-y, x] for x, y in out]
    return out


def four_way_stop_doc() -> dict:
    """All-way-stop intersection; every geometry piece is generated for the
    west (eastbound) arm and rotated by 90 degrees for the other three."""
    lo, bx, reach, hw = LANE_OFFSET, BOX, ARM_REACH, HALF_WIDTH

    # west-arm pieces in eastbound direction
    approach = _subdivide((-ROUTE_REACH, -lo), (-bx, -lo), 8.0)
    exit_e = _subdivide((bx, -lo), (ROUTE_REACH, -lo), 8.0)
    straight = _subdivide((-bx, -lo), (bx, -lo), 3.0)
    right = _arc((-bx, -bx), bx - lo, np.pi / 2, 0.0, 4)         # to south exit
    left = _arc((-bx, bx), bx + lo, -np.pi / 2, 0.0, 7)          # to north exit
    stop = [[-bx, -hw], [-bx, 0.0]]
    dash_out = _subdivide((-reach, 0.0), (-bx, 0.0), 10.0)

    arm_names = ["e", "n", "w", "s"]  # direction of travel entering from W, S, E, N
    polylines = []
    for k, name in enumerate(arm_names):
        polylines += [
            {"id": f"approach_{name}", "type": "centerline", "points": _rot90(approach, k)},
            {"id": f"exit_{name}", "type": "centerline", "points": _rot90(exit_e, k)},
            {"id": f"conn_{name}_straight", "type": "centerline", "points": _rot90(straight, k)},
            {"id": f"conn_{name}_right", "type": "centerline", "points": _rot90(right, k)},
            {"id": f"conn_{name}_left", "type": "centerline", "points": _rot90(left, k)},
            {"id": f"stop_{name}", "type": "stop_line", "points": _rot90(stop, k)},
            {"id": f"divider_{name}", "type": "dashed", "points": _rot90(dash_out, k)},
        ]

    outline = _chain([
        _subdivide((reach, -hw), (reach, hw), 8.0),
        _subdivide((reach, hw), (hw, hw), 8.0),
        _subdivide((hw, hw), (hw, reach), 8.0),
        _subdivide((hw, reach), (-hw, reach), 8.0),
        _subdivide((-hw, reach), (-hw, hw), 8.0),
        _subdivide((-hw, hw), (-reach, hw), 8.0),
        _subdivide((-reach, hw), (-reach, -hw), 8.0),
        _subdivide((-reach, -hw), (-hw, -hw), 8.0),
        _subdivide((-hw, -hw), (-hw, -reach), 8.0),
        _subdivide((-hw, -reach), (hw, -reach), 8.0),
        _subdivide((hw, -reach), (hw, -hw), 8.0),
        _subdivide((hw, -hw), (reach, -hw), 8.0),
    ])
    polylines.append({"id": "outline", "type": "boundary", "points": outline})

    # turn target: right turn from arm k exits the arm rotated by -90deg,
    # left turn exits the arm rotated by +90deg
    routes = []
    for k, name in enumerate(arm_names):
        right_exit = arm_names[(k - 1) % 4]
        left_exit = arm_names[(k + 1) % 4]
        routes += [
            {"id": f"{name}_straight",
             "polylines": [f"approach_{name}", f"conn_{name}_straight", f"exit_{name}"],
             "speed_limits": [APPROACH_LIMIT, APPROACH_LIMIT, APPROACH_LIMIT]},
            {"id": f"{name}_right",
             "polylines": [f"approach_{name}", f"conn_{name}_right", f"exit_{right_exit}"],
             "speed_limits": [APPROACH_LIMIT, TURN_LIMIT, APPROACH_LIMIT]},
            {"id": f"{name}_left",
             "polylines": [f"approach_{name}", f"conn_{name}_left", f"exit_{left_exit}"],
             "speed_limits": [APPROACH_LIMIT, TURN_LIMIT, APPROACH_LIMIT]},
        ]

    drivable = [[
        [reach, -hw], [reach, hw], [hw, hw], [hw, reach], [-hw, reach],
        [-hw, hw], [-reach, hw], [-reach, -hw], [-hw, -hw], [-hw, -reach],
        [hw, -reach], [hw, -hw],
    ]]
    return {"polylines": polylines, "routes": routes, "drivable_area": drivable}


# ----------------------------------------------------------------- scenarios

def straight_scenario(s0=(5.0, 15.0), v0=(5.0, 8.0)) -> dict:
    return {
        "map": "straight_road.json",
        "agents": [{"id": "a0", "route": "main", "s0": list(s0), "v0": list(v0)}],
        "horizon_steps": 50,
        "dt": 0.2,
    }


def intersection_scenario(n_agents: int, rng=None) -> dict:
    """Random sparse traffic: distinct approach arms, random turn choices."""
    rng = rng or np.random.default_rng(0)
    arms = list(rng.permutation(["e", "n", "w", "s"]))[:n_agents]
    agents = []
    for i, arm in enumerate(arms):
        turn = str(rng.choice(["straight", "right", "left"]))
        agents.append({"id": f"a{i}", "route": f"{arm}_{turn}",
                       "s0": [8.0, 42.0], "v0": [4.0, 7.0]})
    return {"map": "four_way_stop.json", "agents": agents,
            "horizon_steps": 50, "dt": 0.2}


def conflict_scenario() -> dict:
    """The proceed-vs-brake demonstration: an eastbound right-turner ('av'),
    an oncoming left-turner headed for the same exit ('c3'), its follower
    ('f8'), and a slow vehicle on the far north exit ('d9') whose 30 m disc
    never reaches the conflict zone."""
    return {
        "map": "four_way_stop.json",
        "agents": [
            {"id": "av", "route": "e_right", "s0": 27.5, "v0": 6.0},
            {"id": "c3", "route": "w_left", "s0": 21.5, "v0": 6.0},
            {"id": "f8", "route": "w_left", "s0": 7.5, "v0": 6.0},
            # n_straight arclength 90 = 32.5 m up the north exit, driving away
            {"id": "d9", "route": "n_straight", "s0": 90.0, "v0": 1.0},
        ],
        "horizon_steps": 50,
        "dt": 0.2,
    }


# ------------------------------------------------------------------- access

def fixture_path(name: str) -> Path:
    return Path(resources.files("condsim").joinpath("fixtures", "data", name))


def load_fixture_map(name: str) -> RoadMap:
    with open(fixture_path(name)) as f:
        return parse_map(json.load(f))


def write_fixture_files(out_dir) -> list[Path]:
    """Materialize the shipped fixture JSONs (used to [re]generate them)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    docs = {
        "straight_road.json": straight_road_doc(),
        "four_way_stop.json": four_way_stop_doc(),
        "scenario_straight.json": straight_scenario(),
        "scenario_conflict.json": conflict_scenario(),
        "scenario_crossing.json": intersection_scenario(3, np.random.default_rng(7)),
    }
    for name, doc in docs.items():
        path = out_dir / name
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)
        written.append(path)
    return written

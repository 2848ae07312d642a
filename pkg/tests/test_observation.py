"""Agent-centric observation construction: frames, filtering, invariance."""

import json

import numpy as np
import pytest

from condsim.geom import rotation, wrap_angle
from condsim.map_core import parse_map
from condsim.observation import (build_observation, observation_from_json,
                                 observation_to_json)
from condsim.sim_engine import AgentState, WorldState
from tests.test_map_core import minimal_map_doc
from tests.test_sim_engine import make_agent, make_world


def test_lone_target_has_no_neighbors_but_map_polylines():
    w = make_world([make_agent("a", x=50.0, speed=5.0)])
    obs = build_observation(w, "a")
    assert obs.n_neighbors == 0
    assert obs.n_polylines > 0
    assert obs.agent_ids == ("a",)


def test_self_row_is_canonical():
    w = make_world([make_agent("a", x=50.0, y=1.0, heading=0.3, speed=5.0)])
    obs = build_observation(w, "a")
    row = obs.agent_features[0]
    assert row[0] == pytest.approx(1.8)   # width
    assert row[1] == pytest.approx(4.5)   # length
    assert row[2] == pytest.approx(0.0, abs=1e-7)
    assert row[3] == pytest.approx(0.0, abs=1e-7)
    assert row[4] == pytest.approx(1.0)   # cos 0
    assert row[5] == pytest.approx(0.0, abs=1e-7)
    assert row[6] == pytest.approx(5.0)
    assert row[7] == pytest.approx(10.0)  # route speed limit


def test_neighbor_directly_ahead():
    w = make_world([make_agent("a", x=40.0, speed=5.0),
                    make_agent("b", x=50.0, speed=3.0)])
    obs = build_observation(w, "a")
    assert obs.agent_ids == ("a", "b")
    nb = obs.agent_features[1]
    assert nb[2] == pytest.approx(10.0, abs=1e-6)
    assert nb[3] == pytest.approx(0.0, abs=1e-6)
    assert nb[4] == pytest.approx(1.0)
    assert nb[5] == pytest.approx(0.0, abs=1e-7)
    assert nb[6] == pytest.approx(3.0)


def test_neighbor_outside_radius_excluded():
    w = make_world([make_agent("a", x=10.0), make_agent("b", x=45.0)])
    obs = build_observation(w, "a", radius=30.0)
    assert obs.agent_ids == ("a",)


def test_dead_or_unknown_target_errors():
    w = make_world([make_agent("a", x=10.0, alive=False)])
    with pytest.raises(ValueError):
        build_observation(w, "a")
    with pytest.raises(KeyError):
        build_observation(w, "zz")


def test_feature_dimensions_and_onehot():
    w = make_world([make_agent("a", x=50.0)])
    obs = build_observation(w, "a")
    assert obs.agent_features.shape[1] == 8
    assert obs.vector_features.shape[1] == 11
    onehot = obs.vector_features[:, 4:10]
    assert np.all(onehot.sum(axis=1) == 1.0)
    cos_sin = obs.agent_features[:, 4:6]
    assert np.allclose((cos_sin ** 2).sum(axis=1), 1.0, atol=1e-9)


def test_route_flag_only_on_own_route_centerlines():
    doc = minimal_map_doc()
    doc["polylines"].append({"id": "c2", "type": "centerline",
                             "points": [[float(x), 2.0] for x in range(0, 101, 10)]})
    doc["routes"].append({"id": "r2", "polylines": ["c2"], "speed_limits": [8.0]})
    road_map = parse_map(doc)
    w = make_world([make_agent("a", x=50.0, route="r"),
                    make_agent("b", x=52.0, y=2.0, route="r2")], road_map)
    obs_a = build_observation(w, "a")
    flagged = {pid for (pid, _t, s, e) in obs_a.polyline_slices
               if obs_a.vector_features[s:e, 10].any()}
    assert flagged == {"c"}
    obs_b = build_observation(w, "b")
    flagged_b = {pid for (pid, _t, s, e) in obs_b.polyline_slices
                 if obs_b.vector_features[s:e, 10].any()}
    assert flagged_b == {"c2"}


def test_changing_other_agents_route_only_touches_flag_column():
    doc = minimal_map_doc()
    doc["polylines"].append({"id": "c2", "type": "centerline",
                             "points": [[float(x), 2.0] for x in range(0, 101, 10)]})
    doc["routes"].append({"id": "r2", "polylines": ["c2"], "speed_limits": [10.0]})
    road_map = parse_map(doc)

    def obs_b(route_a):
        w = make_world([make_agent("a", x=50.0, route=route_a),
                        make_agent("b", x=52.0, y=2.0, route="r2")], road_map)
        return build_observation(w, "b")

    o1, o2 = obs_b("r"), obs_b("r2")
    assert np.array_equal(o1.vector_features, o2.vector_features)


def rotate_world(world, angle, origin=(0.0, 0.0)):
    """Rigidly rotate the map document and all agents."""
    R = rotation(angle)
    origin = np.asarray(origin)
    doc = minimal_map_doc()
    for pl in doc["polylines"]:
        pl["points"] = [list((np.asarray(p) - origin) @ R.T + origin)
                        for p in pl["points"]]
    doc["drivable_area"] = [[list((np.asarray(p) - origin) @ R.T + origin)
                             for p in poly] for poly in doc["drivable_area"]]
    road_map = parse_map(doc)
    agents = []
    for a in world.agents:
        agents.append(AgentState(
            id=a.id, position=(a.position - origin) @ R.T + origin,
            heading=float(wrap_angle(a.heading + angle)), speed=a.speed,
            length=a.length, width=a.width, route=a.route, alive=a.alive))
    return WorldState(k=world.k, time=world.time, agents=tuple(agents),
                      road_map=road_map, seed=world.seed, dt=world.dt)


@pytest.mark.parametrize("angle", [np.pi / 2, -np.pi / 3, 1.234])
def test_se2_invariance_under_rigid_world_rotation(angle):
    w = make_world([make_agent("a", x=50.0, y=1.0, heading=0.2, speed=5.0),
                    make_agent("b", x=58.0, y=-1.0, heading=-0.4, speed=3.0)])
    obs = build_observation(w, "a")
    obs_rot = build_observation(rotate_world(w, angle), "a")
    assert obs_rot.agent_ids == obs.agent_ids
    np.testing.assert_allclose(obs_rot.agent_features, obs.agent_features,
                               atol=1e-9)
    assert [(p, t, s, e) for p, t, s, e in obs_rot.polyline_slices] == \
           [(p, t, s, e) for p, t, s, e in obs.polyline_slices]
    np.testing.assert_allclose(obs_rot.vector_features, obs.vector_features,
                               atol=1e-9)


def test_noise_hook_off_by_default_and_seeded_when_on():
    w = make_world([make_agent("a", x=50.0, speed=5.0)])
    o1 = build_observation(w, "a")
    o2 = build_observation(w, "a")
    assert np.array_equal(o1.agent_features, o2.agent_features)
    rng = np.random.default_rng(0)
    noisy = build_observation(w, "a", noise_std=0.1, rng=rng)
    assert not np.array_equal(noisy.vector_features, o1.vector_features)
    with pytest.raises(ValueError):
        build_observation(w, "a", noise_std=0.1)


def test_json_round_trip():
    w = make_world([make_agent("a", x=50.0, speed=5.0),
                    make_agent("b", x=55.0, speed=2.0)])
    obs = build_observation(w, "a")
    doc = json.loads(json.dumps(observation_to_json(obs)))
    back = observation_from_json(doc)
    assert back.target_id == obs.target_id
    assert back.agent_ids == obs.agent_ids
    np.testing.assert_allclose(back.agent_features, obs.agent_features, atol=1e-7)
    np.testing.assert_allclose(back.vector_features, obs.vector_features, atol=1e-7)
    assert back.polyline_slices == obs.polyline_slices

"""CSV parsing, situation slicing, action inference and splits."""

import csv

import numpy as np
import pytest

from condsim.data_ingest import (IngestError, Situation, infer_actions,
                                 load_tracks, situation_to_pairs,
                                 slice_situations, split_and_balance)
from condsim.map_core import parse_map
from condsim.observation import build_observation
from condsim.sim_engine import Action, AgentState, WorldState, integrate_bicycle
from tests.test_map_core import minimal_map_doc

COLUMNS = ["track_id", "frame_id", "timestamp_ms", "agent_type", "x", "y",
           "vx", "vy", "psi_rad", "length", "width"]


def write_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS)
        writer.writerows(rows)


def track_rows(track_id, states, t0_ms=0, agent_type="car", length=4.5, width=1.8):
    """states: list of (x, y, heading, speed) at 10 Hz."""
    rows = []
    for k, (x, y, heading, speed) in enumerate(states):
        rows.append([track_id, k, t0_ms + 100 * k, agent_type,
                     f"{x:.9f}", f"{y:.9f}",
                     f"{speed * np.cos(heading):.9f}",
                     f"{speed * np.sin(heading):.9f}",
                     f"{heading:.9f}", length, width])
    return rows


def straight_states(n, x0=5.0, speed=6.0):
    return [(x0 + speed * 0.1 * k, 0.0, 0.0, speed) for k in range(n)]


def test_empty_file_with_header(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, [])
    assert load_tracks(path) == []


def test_three_row_fixture_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, track_rows("7", straight_states(3)))
    records = load_tracks(path)
    assert len(records) == 3
    assert records[0].track_id == "7"
    assert records[0].x == pytest.approx(5.0)
    assert records[1].timestamp_ms == 100
    assert records[2].speed == pytest.approx(6.0)
    assert records[0].heading == 0.0
    assert records[0].length == 4.5 and records[0].width == 1.8


def test_pedestrian_rows_dropped(tmp_path):
    path = tmp_path / "t.csv"
    rows = track_rows("1", straight_states(3))
    rows += track_rows("2", straight_states(3), agent_type="pedestrian")
    write_csv(path, rows)
    records = load_tracks(path)
    assert len(records) == 3
    assert {r.track_id for r in records} == {"1"}


def test_missing_column_is_a_parse_error(tmp_path):
    path = tmp_path / "t.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([c for c in COLUMNS if c != "psi_rad"])
    with pytest.raises(IngestError, match="psi_rad"):
        load_tracks(path)


def test_non_monotone_frames_reject_that_track_only(tmp_path, caplog):
    path = tmp_path / "t.csv"
    good = track_rows("1", straight_states(3))
    bad = track_rows("2", straight_states(3))
    bad[2][1] = 0  # frame goes backwards
    write_csv(path, good + bad)
    with caplog.at_level("WARNING"):
        records = load_tracks(path)
    assert {r.track_id for r in records} == {"1"}
    assert any("2" in rec.message and "non-monotone" in rec.message
               for rec in caplog.records)


def test_off_cadence_timestamps_reject_track(tmp_path, caplog):
    path = tmp_path / "t.csv"
    rows = track_rows("1", straight_states(3))
    rows[2][2] = 250  # 150 ms gap breaks the 10 Hz contract
    write_csv(path, rows)
    with caplog.at_level("WARNING"):
        assert load_tracks(path) == []


# -------------------------------------------------------------------- slicing

def road_map():
    return parse_map(minimal_map_doc())


def test_25s_of_tracks_gives_two_situations(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, track_rows("1", straight_states(250, x0=2.0, speed=0.35)))
    records = load_tracks(path)
    situations = slice_situations(records, road_map(), "locA", "rec0")
    assert len(situations) == 2
    assert all(sit.routes["1"] == "r" for sit in situations)
    assert situations[0].start_ms == 0 and situations[1].start_ms == 10_000


def test_orthogonal_crossing_vehicle_excludes_its_situations(tmp_path):
    path = tmp_path / "t.csv"
    rows = track_rows("1", straight_states(100))
    crossing = [(50.0, -3.0 + 0.06 * k, np.pi / 2, 0.6) for k in range(100)]
    rows += track_rows("2", crossing)
    write_csv(path, rows)
    records = load_tracks(path)
    situations = slice_situations(records, road_map(), "locA", "rec0")
    assert situations == []


def test_track_on_route_gets_assigned(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, track_rows("9", straight_states(100)))
    situations = slice_situations(load_tracks(path), road_map(), "locA", "rec0")
    assert len(situations) == 1
    assert situations[0].routes == {"9": "r"}


# ------------------------------------------------------------ action inference

def test_constant_velocity_straight_track_zero_actions():
    situation = situation_from_states({"1": straight_states(101)})
    actions = infer_actions(situation)
    arr = np.asarray(actions["1"])
    assert arr.shape == (50, 2)
    np.testing.assert_allclose(arr, 0.0, atol=1e-9)


def situation_from_states(per_track, dt_records=0.1):
    from condsim.data_ingest import TrackRecord
    tracks = {}
    for tid, states in per_track.items():
        tracks[tid] = [TrackRecord(
            track_id=tid, frame=k, timestamp_ms=int(1000 * dt_records * k),
            x=x, y=y, vx=s * np.cos(h), vy=s * np.sin(h), heading=h,
            length=4.5, width=1.8)
            for k, (x, y, h, s) in enumerate(states)]
    return Situation(location="locA", recording="rec0", start_ms=0,
                     tracks=tracks, routes={tid: "r" for tid in per_track},
                     road_map=road_map())


def test_sim_generated_track_actions_recovered_exactly():
    """Drive the bicycle model with known actions at 0.2 s; emit records at
    10 Hz by halving each step; recovered actions match to 1e-6 / 1e-4."""
    rng = np.random.default_rng(3)
    agent = AgentState(id="1", position=np.array([10.0, 0.0]), heading=0.05,
                       speed=6.0, length=4.5, width=1.8, route="r")
    true_actions = [Action(float(rng.uniform(-2.0, 1.5)),
                           float(rng.uniform(-0.25, 0.25))) for _ in range(50)]
    states = [(agent.position[0], agent.position[1], agent.heading, agent.speed)]
    for act in true_actions:
        half = integrate_bicycle(agent, act, 0.1)
        states.append((half.position[0], half.position[1], half.heading, half.speed))
        agent = integrate_bicycle(agent, act, 0.2)
        # replace the half-step sample's successor with the exact full step
        states[-1] = states[-1]
        states.append((agent.position[0], agent.position[1], agent.heading, agent.speed))
    situation = situation_from_states({"1": states})
    recovered = infer_actions(situation, dt=0.2)["1"]
    for got, want in zip(recovered, true_actions):
        assert abs(got[0] - want.acceleration) < 1e-6
        assert abs(got[1] - want.steering) < 1e-4


def test_standstill_rule_zeroes_jittery_stops():
    states = [(20.0 + 0.001 * k, 0.0, 0.001 * k, 0.05) for k in range(21)]
    situation = situation_from_states({"1": states})
    actions = infer_actions(situation)
    assert np.array_equal(np.asarray(actions["1"]), np.zeros((10, 2)))


def test_expert_pairs_reuse_the_simulators_observation_builder():
    states = straight_states(21)
    situation = situation_from_states({"1": states})
    pairs = situation_to_pairs(situation)
    assert len(pairs) == 10
    x, y, h, s = states[0]
    world = WorldState(k=0, time=0.0, agents=(AgentState(
        id="1", position=np.array([x, y]), heading=h, speed=s, length=4.5,
        width=1.8, route="r"),), road_map=situation.road_map, seed=0, dt=0.2)
    direct = build_observation(world, "1", 30.0)
    assert np.array_equal(pairs[0][0].agent_features, direct.agent_features)
    assert np.array_equal(pairs[0][0].vector_features, direct.vector_features)


# --------------------------------------------------------------------- splits

def make_situation(location, recording, start_ms=0):
    return Situation(location=location, recording=recording, start_ms=start_ms,
                     tracks={}, routes={}, road_map=None)


def test_split_arithmetic_per_location():
    sits = [make_situation("locA", f"rec{i}") for i in range(10)]
    train, val, test = split_and_balance(sits, val=0.2, test=0.3, seed=0)
    assert len(train) == 5 and len(val) == 2 and len(test) == 3
    recs = lambda split: {s.recording for s in split}
    assert not (recs(train) & recs(val)) and not (recs(train) & recs(test))
    assert not (recs(val) & recs(test))
    assert recs(train) | recs(val) | recs(test) == {f"rec{i}" for i in range(10)}


def test_training_set_balanced_to_smallest_location():
    sits = [make_situation("locA", f"a{i}") for i in range(20)]
    sits += [make_situation("locB", f"b{i}") for i in range(100)]
    train, _, _ = split_and_balance(sits, val=0.2, test=0.3, seed=1)
    by_loc = {}
    for s in train:
        by_loc.setdefault(s.location, []).append(s)
    assert len(by_loc["locA"]) == len(by_loc["locB"])


def test_split_deterministic_under_seed():
    sits = [make_situation("locA", f"rec{i}", start_ms=j * 10_000)
            for i in range(8) for j in range(3)]

    def key(splits):
        return [sorted((s.recording, s.start_ms) for s in split)
                for split in splits]

    assert key(split_and_balance(sits, seed=7)) == key(split_and_balance(sits, seed=7))
    assert key(split_and_balance(sits, seed=7)) != key(split_and_balance(sits, seed=8))

"""Track-CSV ingestion: slicing recordings into 10-second situations,
recovering expert actions by inverting the bicycle model, and splitting /
balancing by location.

Input CSVs use the columns track_id, frame_id, timestamp_ms, agent_type,
x, y, vx, vy, psi_rad, length, width at 10 Hz. Non-vehicle agent types
(pedestrians, bicycles) are dropped. Vehicles that cannot be assigned a
route (sustained projection onto a route centerline) exclude their whole
situation.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import wrap_angle
from .map_core import RoadMap
from .observation import build_observation
from .sim_engine import (ACCEL_MAX, ACCEL_MIN, STEER_MAX, WHEELBASE_RATIO,
                         AgentState, WorldState)

__all__ = [
    "TrackRecord", "Situation", "IngestError", "load_tracks",
    "slice_situations", "infer_actions", "split_and_balance",
    "situation_to_pairs", "STANDSTILL_SPEED", "VEHICLE_TYPES",
]

log = logging.getLogger(__name__)

VEHICLE_TYPES = {"car", "truck", "bus", "van", "vehicle", "motorcycle"}
REQUIRED_COLUMNS = ("track_id", "frame_id", "timestamp_ms", "agent_type",
                    "x", "y", "vx", "vy", "psi_rad", "length", "width")

FRAME_SPACING_MS = 100   # 10 Hz
SPACING_TOL_MS = 1
STANDSTILL_SPEED = 0.1   # below this the recorded action is exactly (0, 0)

ROUTE_ASSIGN_DIST = 2.0     # m lateral
ROUTE_ASSIGN_FRACTION = 0.8


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TrackRecord:
    track_id: str
    frame: int
    timestamp_ms: int
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    length: float
    width: float

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))


@dataclass
class Situation:
    """10 seconds of records for every present vehicle, each with a route."""
    location: str
    recording: str
    start_ms: int
    tracks: dict            # track_id -> list[TrackRecord] (10 Hz)
    routes: dict            # track_id -> route id
    road_map: RoadMap = field(repr=False, default=None)

    @property
    def duration_s(self) -> float:
        return 10.0


def load_tracks(path, location: str = "", recording: str = "") -> list[TrackRecord]:
    """Parse one CSV; drops non-vehicle rows and rejects corrupt tracks."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return []
        for col in REQUIRED_COLUMNS:
            if col not in reader.fieldnames:
                raise IngestError(f"{path.name}: missing column '{col}'")
        by_track: dict[str, list[TrackRecord]] = {}
        for row in reader:
            if row["agent_type"].strip().lower() not in VEHICLE_TYPES:
                continue
            rec = TrackRecord(
                track_id=str(row["track_id"]), frame=int(row["frame_id"]),
                timestamp_ms=int(row["timestamp_ms"]), x=float(row["x"]),
                y=float(row["y"]), vx=float(row["vx"]), vy=float(row["vy"]),
                heading=float(row["psi_rad"]), length=float(row["length"]),
                width=float(row["width"]))
            by_track.setdefault(rec.track_id, []).append(rec)

    records: list[TrackRecord] = []
    for tid, recs in by_track.items():
        ok = True
        for a, b in zip(recs, recs[1:]):
            if b.frame <= a.frame:
                log.warning("%s: track %s rejected (non-monotone frames)",
                            path.name, tid)
                ok = False
                break
            if abs((b.timestamp_ms - a.timestamp_ms) - FRAME_SPACING_MS) > SPACING_TOL_MS:
                log.warning("%s: track %s rejected (spacing %d ms off 10 Hz)",
                            path.name, tid, b.timestamp_ms - a.timestamp_ms)
                ok = False
                break
        if ok:
            records.extend(recs)
    return records


def _assign_route(samples: list[TrackRecord], road_map: RoadMap):
    """Route whose centerline carries >= 80% of the samples within 2 m and
    roughly along the driving direction; None if no route qualifies."""
    best = None
    for rid in sorted(road_map.routes):
        route = road_map.routes[rid]
        hits = 0
        for rec in samples:
            s, dist = route.project((rec.x, rec.y))
            if dist > ROUTE_ASSIGN_DIST:
                continue
            i = min(int(np.searchsorted(route.cum_s, s, side="right")) - 1,
                    len(route.seg_heading) - 1)
            if np.cos(wrap_angle(rec.heading - route.seg_heading[max(i, 0)])) > 0.0:
                hits += 1
        frac = hits / len(samples)
        if frac >= ROUTE_ASSIGN_FRACTION and (best is None or frac > best[1]):
            best = (rid, frac)
    return None if best is None else best[0]


def slice_situations(tracks: list[TrackRecord], road_map: RoadMap,
                     location: str = "", recording: str = "",
                     window_s: float = 10.0) -> list[Situation]:
    """Tile the recording into consecutive non-overlapping windows; windows
    with any route-unassignable vehicle are excluded."""
    if not tracks:
        return []
    t0 = min(r.timestamp_ms for r in tracks)
    t_end = max(r.timestamp_ms for r in tracks)
    window_ms = int(window_s * 1000)
    situations = []
    start = t0
    while start + window_ms <= t_end + FRAME_SPACING_MS:
        in_window: dict[str, list[TrackRecord]] = {}
        for rec in tracks:
            if start <= rec.timestamp_ms < start + window_ms:
                in_window.setdefault(rec.track_id, []).append(rec)
        if in_window:
            routes = {}
            ok = True
            for tid, recs in sorted(in_window.items()):
                recs.sort(key=lambda r: r.timestamp_ms)
                rid = _assign_route(recs, road_map)
                if rid is None:
                    ok = False
                    break
                routes[tid] = rid
            if ok:
                situations.append(Situation(
                    location=location, recording=recording, start_ms=start,
                    tracks={tid: in_window[tid] for tid in sorted(in_window)},
                    routes=routes, road_map=road_map))
        start += window_ms
    return situations


def infer_actions(situation: Situation, dt: float = 0.2) -> dict:
    """Per-vehicle (acceleration, steering) sequences at the simulation step,
    recovered by inverting the kinematic bicycle model.

    Standstill rule: below STANDSTILL_SPEED both values are exactly 0.
    """
    stride = max(1, int(round(dt * 1000 / FRAME_SPACING_MS)))
    out = {}
    for tid, recs in situation.tracks.items():
        sub = recs[::stride]
        wheelbase = WHEELBASE_RATIO * recs[0].length
        actions = []
        for a, b in zip(sub, sub[1:]):
            v0, v1 = a.speed, b.speed
            if v0 < STANDSTILL_SPEED:
                actions.append((0.0, 0.0))
                continue
            accel = (v1 - v0) / dt
            dheading = float(wrap_angle(b.heading - a.heading))
            steering = float(np.arctan(wheelbase * dheading / (v0 * dt)))
            actions.append((float(np.clip(accel, ACCEL_MIN, ACCEL_MAX)),
                            float(np.clip(steering, -STEER_MAX, STEER_MAX))))
        out[tid] = actions
    return out


def situation_to_pairs(situation: Situation, dt: float = 0.2,
                       radius: float = 30.0) -> list:
    """(Observation, action) pairs using the simulator's own observation
    builder, so training data and rollout inputs cannot diverge."""
    stride = max(1, int(round(dt * 1000 / FRAME_SPACING_MS)))
    actions = infer_actions(situation, dt)
    # number of complete sim steps available for every vehicle
    pairs = []
    steps = min((len(recs) - 1) // stride for recs in situation.tracks.values())
    for k in range(steps):
        agents = []
        for tid, recs in situation.tracks.items():
            rec = recs[k * stride]
            agents.append(AgentState(
                id=tid, position=np.array([rec.x, rec.y]),
                heading=float(wrap_angle(rec.heading)), speed=rec.speed,
                length=rec.length, width=rec.width,
                route=situation.routes[tid]))
        world = WorldState(k=k, time=k * dt, agents=tuple(agents),
                           road_map=situation.road_map, seed=0, dt=dt)
        for tid in situation.tracks:
            if k < len(actions[tid]):
                obs = build_observation(world, tid, radius)
                pairs.append((obs, np.asarray(actions[tid][k])))
    return pairs


def split_and_balance(situations: list[Situation], val: float = 0.2,
                      test: float = 0.3, seed: int = 0):
    """Recording-level split per location, then the training set is
    downsampled so each location contributes equally."""
    by_location: dict[str, dict[str, list[Situation]]] = {}
    for sit in situations:
        by_location.setdefault(sit.location, {}).setdefault(sit.recording, []).append(sit)
    for loc, recs in by_location.items():
        if not any(recs.values()):
            raise IngestError(f"location '{loc}' has no situations")

    rng = np.random.default_rng(seed)
    train_by_loc: dict[str, list[Situation]] = {}
    val_set: list[Situation] = []
    test_set: list[Situation] = []
    for loc in sorted(by_location):
        rec_ids = sorted(by_location[loc])
        order = [rec_ids[i] for i in rng.permutation(len(rec_ids))]
        n_val = int(round(val * len(order)))
        n_test = int(round(test * len(order)))
        val_recs = order[:n_val]
        test_recs = order[n_val:n_val + n_test]
        train_recs = order[n_val + n_test:]
        val_set += [s for r in val_recs for s in by_location[loc][r]]
        test_set += [s for r in test_recs for s in by_location[loc][r]]
        train_by_loc[loc] = [s for r in train_recs for s in by_location[loc][r]]

    floor = min(len(v) for v in train_by_loc.values())
    train_set: list[Situation] = []
    for loc in sorted(train_by_loc):
        pool = train_by_loc[loc]
        if len(pool) > floor:
            keep = rng.choice(len(pool), size=floor, replace=False)
            pool = [pool[i] for i in sorted(keep)]
        train_set += pool
    return train_set, val_set, test_set

"""Static road representation: typed polylines, routes, and spatial queries.

Maps are authored in a self-contained JSON schema (see README): polylines
with one of six element types, routes chaining centerline polylines, and
drivable-area polygons. A RoadMap is immutable after load and safe to share
across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geom import point_in_polygon, points_in_polygon, obb_corners

__all__ = [
    "ELEMENT_TYPES", "MapVector", "Polyline", "Route", "RoadMap",
    "MapLoadError", "RouteProjectionError", "load_map", "query_radius",
    "is_on_track", "route_progress", "DEFAULT_SPEED_LIMIT",
]

# The 6 road-element categories; the one-hot spans exactly these, making the
# per-vector feature width 2+2+6+1 = 11.
ELEMENT_TYPES = ("centerline", "dashed", "solid", "boundary", "stop_line", "other")

DEFAULT_SPEED_LIMIT = 13.89  # m/s (50 km/h) when a route carries no limit

CHAIN_TOL = 1e-6


class MapLoadError(ValueError):
    """Raised when a map file violates the schema or an invariant."""


class RouteProjectionError(ValueError):
    """Raised when a position is too far from a route to project onto it."""


@dataclass(frozen=True)
class MapVector:
    start: np.ndarray
    end: np.ndarray
    element_type: str
    parent_polyline: str


@dataclass(frozen=True)
class Polyline:
    id: str
    vectors: tuple
    element_type: str
    # (L, 2) arrays of vector endpoints, kept for vectorized queries
    starts: np.ndarray = field(repr=False, default=None)
    ends: np.ndarray = field(repr=False, default=None)

    @staticmethod
    def from_vectors(pid: str, vectors, element_type: str) -> "Polyline":
        starts = np.array([v.start for v in vectors], float)
        ends = np.array([v.end for v in vectors], float)
        return Polyline(pid, tuple(vectors), element_type, starts, ends)


class Route:
    """An ordered chain of centerline polylines with per-polyline limits."""

    def __init__(self, rid: str, polyline_ids, polylines, speed_limits):
        self.id = rid
        self.polyline_ids = list(polyline_ids)
        self.speed_limits = list(speed_limits)
        pts = [polylines[polyline_ids[0]].starts[0]]
        limits = []
        poly_end_s = []
        for pid, limit in zip(polyline_ids, speed_limits):
            pl = polylines[pid]
            for e in pl.ends:
                pts.append(e)
                limits.append(limit)
            poly_end_s.append(len(pts) - 1)
        self.points = np.asarray(pts, float)
        seg = np.diff(self.points, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
        self.seg_limit = np.asarray(limits, float)
        self.cum_s = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.total_length = float(self.cum_s[-1])
        self.terminal_point = self.points[-1].copy()

    def point_at(self, s: float):
        """Position and tangent heading at arclength s (clamped to the route)."""
        s = float(np.clip(s, 0.0, self.total_length))
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(i, len(self.seg_len) - 1)
        t = (s - self.cum_s[i]) / self.seg_len[i]
        pos = self.points[i] + t * (self.points[i + 1] - self.points[i])
        return pos, float(self.seg_heading[i])

    def speed_limit_at(self, s: float) -> float:
        s = float(np.clip(s, 0.0, self.total_length))
        i = int(np.searchsorted(self.cum_s, s, side="right") - 1)
        i = min(i, len(self.seg_limit) - 1)
        return float(self.seg_limit[i])

    def project(self, position):
        """(arclength, distance) of the closest route point; ties pick the
        smallest arclength."""
        p = np.asarray(position, float)
        a = self.points[:-1]
        d = np.diff(self.points, axis=0)
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / (self.seg_len ** 2),
                    0.0, 1.0)
        closest = a + t[:, None] * d
        dist = np.hypot(*(closest - p).T)
        i = int(np.argmin(dist))
        return float(self.cum_s[i] + t[i] * self.seg_len[i]), float(dist[i])


class RoadMap:
    """Immutable container for polylines, routes and the drivable area."""

    def __init__(self, polylines, routes, drivable_area):
        self.polylines = polylines      # dict id -> Polyline, insertion order
        self.routes = routes            # dict id -> Route
        self.drivable_area = drivable_area  # list of (N, 2) arrays
        # flattened vector arrays for radius queries
        order = list(polylines)
        starts, ends, owner = [], [], []
        for k, pid in enumerate(order):
            pl = polylines[pid]
            starts.append(pl.starts)
            ends.append(pl.ends)
            owner.append(np.full(len(pl.vectors), k))
        self._poly_order = order
        if starts:
            self._vec_start = np.concatenate(starts)
            self._vec_end = np.concatenate(ends)
            self._vec_owner = np.concatenate(owner)
        else:
            self._vec_start = np.zeros((0, 2))
            self._vec_end = np.zeros((0, 2))
            self._vec_owner = np.zeros(0, int)

    def contains_point(self, point) -> bool:
        return any(point_in_polygon(point, poly) for poly in self.drivable_area)

    def contains_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        result = np.zeros(len(pts), bool)
        for poly in self.drivable_area:
            result |= points_in_polygon(pts, poly)
        return result


def _require(cond: bool, message: str):
    if not cond:
        raise MapLoadError(message)


def _parse_points(raw, where: str) -> np.ndarray:
    _require(isinstance(raw, list) and len(raw) >= 2,
             f"{where}: 'points' must be a list of at least 2 [x, y] pairs")
    pts = []
    for i, p in enumerate(raw):
        _require(isinstance(p, (list, tuple)) and len(p) == 2,
                 f"{where}.points[{i}]: expected [x, y]")
        x, y = float(p[0]), float(p[1])
        _require(math.isfinite(x) and math.isfinite(y),
                 f"{where}.points[{i}]: coordinates must be finite")
        pts.append((x, y))
    return np.asarray(pts, float)


def load_map(path) -> RoadMap:
    """Load and fully validate a map JSON file."""
    path = Path(path)
    if not path.exists():
        raise MapLoadError(f"map file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MapLoadError(f"map file is not valid JSON: {e}") from e
    return parse_map(doc)


def parse_map(doc: dict) -> RoadMap:
    _require(isinstance(doc, dict), "map document must be a JSON object")
    for key in ("polylines", "drivable_area"):
        _require(key in doc, f"missing required field '{key}'")

    polylines: dict[str, Polyline] = {}
    for i, entry in enumerate(doc["polylines"]):
        where = f"polylines[{i}]"
        for key in ("id", "type", "points"):
            _require(key in entry, f"{where}: missing field '{key}'")
        pid = str(entry["id"])
        _require(pid not in polylines, f"{where}: duplicate polyline id '{pid}'")
        etype = entry["type"]
        _require(etype in ELEMENT_TYPES,
                 f"{where}.type: '{etype}' not one of {ELEMENT_TYPES}")
        pts = _parse_points(entry["points"], where)
        vectors = []
        for k in range(len(pts) - 1):
            if np.allclose(pts[k], pts[k + 1], atol=0.0):
                raise MapLoadError(
                    f"{where}.points[{k}..{k + 1}]: zero-length vector in polyline '{pid}'")
            vectors.append(MapVector(pts[k].copy(), pts[k + 1].copy(), etype, pid))
        polylines[pid] = Polyline.from_vectors(pid, vectors, etype)

    drivable = []
    for i, poly in enumerate(doc["drivable_area"]):
        pts = _parse_points(poly, f"drivable_area[{i}]")
        _require(len(pts) >= 3, f"drivable_area[{i}]: polygon needs at least 3 points")
        drivable.append(pts)

    routes: dict[str, Route] = {}
    for i, entry in enumerate(doc.get("routes", [])):
        where = f"routes[{i}]"
        for key in ("id", "polylines"):
            _require(key in entry, f"{where}: missing field '{key}'")
        rid = str(entry["id"])
        _require(rid not in routes, f"{where}: duplicate route id '{rid}'")
        pids = [str(p) for p in entry["polylines"]]
        _require(len(pids) >= 1, f"{where}.polylines: route must reference at least one polyline")
        for pid in pids:
            _require(pid in polylines,
                     f"{where}.polylines: unknown polyline id '{pid}'")
            _require(polylines[pid].element_type == "centerline",
                     f"{where}.polylines: '{pid}' is {polylines[pid].element_type}, "
                     f"routes may only chain centerlines")
        limits = entry.get("speed_limits")
        if limits is None:
            limits = [DEFAULT_SPEED_LIMIT] * len(pids)
        _require(len(limits) == len(pids),
                 f"{where}.speed_limits: expected {len(pids)} entries, got {len(limits)}")
        # route must be connected end-to-end
        for k in range(len(pids) - 1):
            gap = np.linalg.norm(polylines[pids[k]].ends[-1] - polylines[pids[k + 1]].starts[0])
            if gap > CHAIN_TOL:
                raise MapLoadError(
                    f"{where}: route '{rid}' disconnected between '{pids[k]}' and "
                    f"'{pids[k + 1]}' (gap {gap:.3g} m)")
        routes[rid] = Route(rid, pids, polylines, [float(v) for v in limits])

    road_map = RoadMap(polylines, routes, drivable)

    # chained-vector invariant within each polyline
    for pl in polylines.values():
        for k in range(len(pl.vectors) - 1):
            if np.linalg.norm(pl.ends[k] - pl.starts[k + 1]) > CHAIN_TOL:
                raise MapLoadError(f"polyline '{pl.id}': vectors {k} and {k + 1} not chained")

    # every route must lie inside the drivable area
    for route in routes.values():
        for pid in route.polyline_ids:
            pl = polylines[pid]
            for pt in np.vstack([pl.starts, pl.ends[-1:]]):
                if not road_map.contains_point(pt):
                    raise MapLoadError(
                        f"route '{route.id}': polyline '{pid}' leaves the drivable "
                        f"area at ({pt[0]:.2f}, {pt[1]:.2f})")
    return road_map


def query_radius(road_map: RoadMap, center, radius: float) -> list[Polyline]:
    """Polylines clipped to vectors with start or end within `radius` of `center`.

    Whole vectors are kept or dropped; nothing is geometrically cut.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    c = np.asarray(center, float)
    if len(road_map._vec_start) == 0:
        return []
    ds = np.hypot(*(road_map._vec_start - c).T)
    de = np.hypot(*(road_map._vec_end - c).T)
    keep = (ds < radius) | (de < radius)
    result = []
    for k, pid in enumerate(road_map._poly_order):
        mask = keep[road_map._vec_owner == k]
        if not mask.any():
            continue
        pl = road_map.polylines[pid]
        kept = [v for v, m in zip(pl.vectors, mask) if m]
        result.append(Polyline(pl.id, tuple(kept), pl.element_type,
                               pl.starts[mask], pl.ends[mask]))
    return result


def is_on_track(road_map: RoadMap, center, heading: float,
                length: float, width: float) -> bool:
    """True iff all four footprint corners lie inside the drivable area."""
    if length <= 0 or width <= 0:
        raise ValueError(f"footprint must have positive extent, got {length}x{width}")
    corners = obb_corners(center, heading, length, width)
    return bool(road_map.contains_points(corners).all())


def route_progress(route: Route, position, max_dist: float = 50.0):
    """Arclength of the projection of `position` onto the route, plus remainder."""
    arclength, dist = route.project(position)
    if dist > max_dist:
        p = np.asarray(position, float)
        raise RouteProjectionError(
            f"position ({p[0]:.1f}, {p[1]:.1f}) is {dist:.1f} m from route "
            f"'{route.id}' (limit {max_dist} m)")
    return arclength, route.total_length - arclength

"""Map loading, spatial queries and on-track tests against independent
oracles (brute-force vector filtering, shapely point containment)."""

import json

import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from condsim.fixtures import (fixture_path, four_way_stop_doc, load_fixture_map,
                              straight_road_doc)
from condsim.map_core import (MapLoadError, RouteProjectionError, is_on_track,
                              load_map, parse_map, query_radius, route_progress)


def minimal_map_doc():
    """One straight 100 m centerline plus two boundaries."""
    return {
        "polylines": [
            {"id": "c", "type": "centerline",
             "points": [[float(x), 0.0] for x in range(0, 101, 10)]},
            {"id": "bn", "type": "boundary", "points": [[0, 3.5], [100, 3.5]]},
            {"id": "bs", "type": "boundary", "points": [[0, -3.5], [100, -3.5]]},
        ],
        "routes": [{"id": "r", "polylines": ["c"], "speed_limits": [10.0]}],
        "drivable_area": [[[0, -3.5], [100, -3.5], [100, 3.5], [0, 3.5]]],
    }


def test_minimal_map_loads_with_three_polylines(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(minimal_map_doc()))
    road_map = load_map(path)
    assert len(road_map.polylines) == 3
    assert list(road_map.routes) == ["r"]


def test_missing_polyline_reference_is_a_validation_error():
    doc = minimal_map_doc()
    doc["routes"][0]["polylines"] = ["nope"]
    with pytest.raises(MapLoadError, match="nope"):
        parse_map(doc)


def test_route_may_only_chain_centerlines():
    doc = minimal_map_doc()
    doc["routes"][0]["polylines"] = ["bn"]
    with pytest.raises(MapLoadError, match="centerline"):
        parse_map(doc)


def test_zero_length_vector_rejected_at_load():
    doc = minimal_map_doc()
    doc["polylines"][0]["points"] = [[0, 0], [5, 0], [5, 0], [10, 0]]
    with pytest.raises(MapLoadError, match="zero-length"):
        parse_map(doc)


def test_disconnected_route_rejected():
    doc = minimal_map_doc()
    doc["polylines"].append({"id": "c2", "type": "centerline",
                             "points": [[150, 0], [160, 0]]})
    doc["drivable_area"] = [[[0, -3.5], [200, -3.5], [200, 3.5], [0, 3.5]]]
    doc["routes"][0]["polylines"] = ["c", "c2"]
    doc["routes"][0]["speed_limits"] = [10.0, 10.0]
    with pytest.raises(MapLoadError, match="disconnected"):
        parse_map(doc)


def test_unknown_element_type_names_field():
    doc = minimal_map_doc()
    doc["polylines"][0]["type"] = "lane"
    with pytest.raises(MapLoadError, match=r"polylines\[0\].type"):
        parse_map(doc)


def test_missing_required_field_named():
    with pytest.raises(MapLoadError, match="drivable_area"):
        parse_map({"polylines": []})


def test_route_outside_drivable_area_rejected():
    doc = minimal_map_doc()
    doc["drivable_area"] = [[[0, -3.5], [50, -3.5], [50, 3.5], [0, 3.5]]]
    with pytest.raises(MapLoadError, match="drivable"):
        parse_map(doc)


def test_shipped_intersection_fixture_has_12_routes():
    road_map = load_map(fixture_path("four_way_stop.json"))
    assert len(road_map.routes) == 12


def test_fixture_files_match_builders():
    for name, doc in (("straight_road.json", straight_road_doc()),
                      ("four_way_stop.json", four_way_stop_doc())):
        on_disk = json.loads(fixture_path(name).read_text())
        assert on_disk == json.loads(json.dumps(doc)), name


# --------------------------------------------------------------- query_radius

def test_query_radius_far_center_empty():
    road_map = parse_map(minimal_map_doc())
    assert query_radius(road_map, (1000.0, 1000.0), 30.0) == []


def test_query_radius_huge_radius_returns_everything():
    road_map = parse_map(minimal_map_doc())
    clipped = query_radius(road_map, (50.0, 0.0), 1e9)
    assert sorted(pl.id for pl in clipped) == ["bn", "bs", "c"]
    total = sum(len(pl.vectors) for pl in clipped)
    assert total == sum(len(pl.vectors) for pl in road_map.polylines.values())


def test_query_radius_sixty_vectors_on_sampled_line():
    doc = {
        "polylines": [{"id": "c", "type": "centerline",
                       "points": [[float(x), 0.0] for x in range(0, 101)]}],
        "routes": [],
        "drivable_area": [[[0, -4], [100, -4], [100, 4], [0, 4]]],
    }
    road_map = parse_map(doc)
    clipped = query_radius(road_map, (50.0, 0.0), 30.0)
    count = sum(len(pl.vectors) for pl in clipped)
    # brute force: a vector [k, k+1] is kept iff either endpoint is within 30
    expected = sum(1 for k in range(100)
                   if abs(k - 50) < 30 or abs(k + 1 - 50) < 30)
    assert count == expected
    assert abs(count - 60) <= 1


def test_query_radius_equals_brute_force_on_random_draws():
    road_map = load_fixture_map("four_way_stop.json")
    starts = road_map._vec_start
    ends = road_map._vec_end
    owner = road_map._vec_owner
    order = road_map._poly_order
    rng = np.random.default_rng(123)
    for _ in range(1000):
        center = rng.uniform(-70, 70, 2)
        radius = rng.uniform(0.5, 80.0)
        keep = ((np.hypot(*(starts - center).T) < radius)
                | (np.hypot(*(ends - center).T) < radius))
        clipped = query_radius(road_map, center, radius)
        got = {pl.id: len(pl.vectors) for pl in clipped}
        expected = {}
        for k, pid in enumerate(order):
            n = int(keep[owner == k].sum())
            if n:
                expected[pid] = n
        assert got == expected


def test_query_radius_requires_positive_radius():
    road_map = parse_map(minimal_map_doc())
    with pytest.raises(ValueError):
        query_radius(road_map, (0, 0), 0.0)


# ----------------------------------------------------------------- is_on_track

def test_on_track_centered_on_route():
    road_map = parse_map(minimal_map_doc())
    assert is_on_track(road_map, (50.0, 0.0), 0.0, 4.5, 1.8)


def test_off_track_far_outside():
    road_map = parse_map(minimal_map_doc())
    assert not is_on_track(road_map, (50.0, 53.5), 0.0, 4.5, 1.8)


def test_straddling_boundary_one_corner_out():
    road_map = parse_map(minimal_map_doc())
    center = (50.0, 3.0)  # half-width 0.9 puts upper corners at y=3.9 > 3.5
    assert not is_on_track(road_map, center, 0.0, 4.5, 1.8)
    # point-in-polygon oracle corner by corner
    from condsim.geom import obb_corners
    poly = Polygon([(0, -3.5), (100, -3.5), (100, 3.5), (0, 3.5)])
    corners = obb_corners(center, 0.0, 4.5, 1.8)
    inside = [poly.buffer(1e-9).contains(Point(*c)) for c in corners]
    assert not all(inside) and any(inside)


def test_on_track_matches_shapely_oracle_random():
    road_map = load_fixture_map("four_way_stop.json")
    polys = [Polygon(p) for p in road_map.drivable_area]
    from condsim.geom import obb_corners
    rng = np.random.default_rng(7)
    for _ in range(300):
        center = rng.uniform(-60, 60, 2)
        heading = rng.uniform(-np.pi, np.pi)
        corners = obb_corners(center, heading, 4.5, 1.8)
        expected = all(any(p.buffer(1e-9).contains(Point(*c)) for p in polys)
                       for c in corners)
        assert is_on_track(road_map, center, heading, 4.5, 1.8) == expected


def test_on_track_monotone_under_shrinking():
    road_map = load_fixture_map("four_way_stop.json")
    rng = np.random.default_rng(21)
    for _ in range(200):
        center = rng.uniform(-60, 60, 2)
        heading = rng.uniform(-np.pi, np.pi)
        if is_on_track(road_map, center, heading, 4.8, 2.0):
            for scale in (0.8, 0.5, 0.2):
                assert is_on_track(road_map, center, heading,
                                   4.8 * scale, 2.0 * scale)


def test_footprint_must_be_positive():
    road_map = parse_map(minimal_map_doc())
    with pytest.raises(ValueError):
        is_on_track(road_map, (50, 0), 0.0, 0.0, 1.8)


# -------------------------------------------------------------- route_progress

def test_route_progress_endpoints_and_midpoint():
    road_map = parse_map(minimal_map_doc())
    route = road_map.routes["r"]
    s, rem = route_progress(route, (0.0, 0.0))
    assert s == 0.0 and rem == pytest.approx(100.0, abs=1e-9)
    s, rem = route_progress(route, route.terminal_point)
    assert s == pytest.approx(100.0, abs=1e-9) and rem == pytest.approx(0.0, abs=1e-9)
    s, rem = route_progress(route, (50.0, 1.0))
    assert s == pytest.approx(50.0, abs=1e-9)
    assert s + rem == pytest.approx(route.total_length, abs=1e-6)


def test_route_progress_too_far_raises():
    road_map = parse_map(minimal_map_doc())
    with pytest.raises(RouteProjectionError):
        route_progress(road_map.routes["r"], (50.0, 80.0))


def test_route_progress_non_decreasing_along_forward_traversal():
    road_map = load_fixture_map("four_way_stop.json")
    route = road_map.routes["e_left"]
    previous = -1.0
    for s in np.linspace(0.0, route.total_length, 200):
        pos, _ = route.point_at(s)
        arclength, _ = route_progress(route, pos)
        assert arclength >= previous - 1e-9
        previous = arclength

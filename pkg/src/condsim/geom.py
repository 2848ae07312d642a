"""Small planar-geometry helpers shared by the map and the simulator."""

from __future__ import annotations

import numpy as np

__all__ = [
    "wrap_angle", "rotation", "to_frame", "point_in_polygon",
    "points_in_polygon", "project_point_to_segment", "obb_corners",
    "obb_overlap",
]

BOUNDARY_TOL = 1e-9


def wrap_angle(a):
    """Normalize an angle (array ok) to (-pi, pi]; exact when already there."""
    a = np.asarray(a)
    wrapped = np.pi - (np.pi - a) % (2.0 * np.pi)
    return np.where((a > np.pi) | (a <= -np.pi), wrapped, a)


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def to_frame(points: np.ndarray, origin: np.ndarray, heading: float) -> np.ndarray:
    """Express world points in the frame at `origin` with +x along `heading`."""
    return (np.asarray(points) - np.asarray(origin)) @ rotation(heading)


def project_point_to_segment(p, a, b):
    """Return (t, distance) for the closest point a + t*(b-a), t in [0, 1]."""
    p, a, b = np.asarray(p, float), np.asarray(a, float), np.asarray(b, float)
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return 0.0, float(np.hypot(*(p - a)))
    t = float(np.clip((p - a) @ d / dd, 0.0, 1.0))
    closest = a + t * d
    return t, float(np.hypot(*(p - closest)))


def points_in_polygon(points, polygon: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Vectorized even-odd test; points within tol of the boundary count inside."""
    pts = np.atleast_2d(np.asarray(points, float))
    poly = np.asarray(polygon, float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    d = b - a  # (E, 2)
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0.0, 1.0, dd)
    # distance from every point to every edge
    rel = pts[:, None, :] - a[None, :, :]               # (M, E, 2)
    t = np.clip(np.einsum("mej,ej->me", rel, d) / dd, 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * d[None, :, :]
    dist2 = ((pts[:, None, :] - closest) ** 2).sum(axis=-1)
    on_boundary = (dist2 <= tol * tol).any(axis=1)
    # even-odd ray cast toward +x
    y = pts[:, 1][:, None]
    x = pts[:, 0][:, None]
    ay, by = a[None, :, 1], b[None, :, 1]
    crosses = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = a[None, :, 0] + (y - ay) * d[None, :, 0] / np.where(d[None, :, 1] == 0, 1.0, d[None, :, 1])
    hits = crosses & (x < x_cross)
    inside = (hits.sum(axis=1) % 2) == 1
    return on_boundary | inside


def point_in_polygon(point, polygon: np.ndarray, tol: float = BOUNDARY_TOL) -> bool:
    """Even-odd test; points within tol of the boundary count as inside."""
    return bool(points_in_polygon(np.asarray(point, float)[None, :], polygon, tol)[0])


def obb_corners(center, heading: float, length: float, width: float) -> np.ndarray:
    """Counterclockwise corners of an oriented rectangle, (4, 2)."""
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    return np.asarray(center, float) + local @ rotation(heading).T


def obb_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two oriented rectangles (touching counts)."""
    for corners in (corners_a, corners_b):
        for i in range(2):  # two unique edge directions per rectangle
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.min() > pb.max() or pb.min() > pa.max():
                return False
    return True

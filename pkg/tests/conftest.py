import numpy as np
import pytest

from bilayout.geometry import CameraFrame, LayoutAnnotation


@pytest.fixture
def frame():
    return CameraFrame()


@pytest.fixture
def square_room():
    return LayoutAnnotation(
        corners=np.array([[1.6, -1.6], [1.6, 1.6], [-1.6, 1.6], [-1.6, -1.6]]),
        room_height=3.2,
        id="square",
    )


@pytest.fixture
def l_room():
    # big square [-1,3]^2 minus the quadrant [-1,1]x[1,3]
    return LayoutAnnotation(
        corners=np.array([[-1, -1], [3, -1], [3, 3], [1, 3], [1, 1], [-1, 1]],
                         dtype=np.float64),
        room_height=3.2,
        id="l-room",
    )


L_ROOM_CORNERS = np.array([[-1, -1], [3, -1], [3, 3], [1, 3], [1, 1], [-1, 1]],
                          dtype=np.float64)


def random_star_room(rng, corners=12, r_lo=0.8, r_hi=6.0, height=None):
    """Star-shaped (hence simple, origin-inside) counterclockwise polygon.
    Angular gaps are bounded away from pi so every edge stays inside its
    wedge."""
    gaps = rng.uniform(0.5, 1.5, corners)
    gaps *= 2.0 * np.pi / gaps.sum()
    angles = -np.pi + np.cumsum(gaps) - gaps[0] + rng.uniform(0, gaps[0])
    radii = rng.uniform(r_lo, r_hi, corners)
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    h = height if height is not None else rng.uniform(2.0, 4.0)
    return LayoutAnnotation(corners=pts, room_height=float(h), id="star")


def random_manhattan_room(rng, max_notches=4):
    """Axis-aligned polygon with 4 to 12 corners: a rectangle around the
    origin with rectangular notches cut from random corners."""
    left, bottom = rng.uniform(0.5, 3.0, 2)
    right, top = rng.uniform(0.5, 3.0, 2)
    quadrant_corners = {
        0: (right, top), 1: (-left, top), 2: (-left, -bottom), 3: (right, -bottom),
    }
    n_notches = int(rng.integers(0, max_notches + 1))
    cut = set(rng.choice(4, size=n_notches, replace=False).tolist())
    pts = []

    def notch(q):
        cx, cy = quadrant_corners[q]
        w = rng.uniform(0.15, 0.8) * abs(cx)
        h = rng.uniform(0.15, 0.8) * abs(cy)
        sx = np.sign(cx)
        sy = np.sign(cy)
        # walk counterclockwise around the cut corner
        if q == 0:
            return [(cx, cy - h), (cx - w, cy - h), (cx - w, cy)]
        if q == 1:
            return [(cx + w, cy), (cx + w, cy - h), (cx, cy - h)]
        if q == 2:
            return [(cx, cy + h), (cx + w, cy + h), (cx + w, cy)]
        return [(cx - w, cy), (cx - w, cy + h), (cx, cy + h)]

    for q in range(4):
        if q in cut:
            pts.extend(notch(q))
        else:
            pts.append(quadrant_corners[q])
    return LayoutAnnotation(corners=np.array(pts, dtype=np.float64),
                            room_height=float(rng.uniform(2.0, 4.0)),
                            id="manhattan")


def ray_marching_occlusion_oracle(ann, angles, steps=4096):
    """Independent occlusion oracle: walk each ray outward and count sign
    changes of point-in-polygon membership (each exit or entry is one
    boundary crossing)."""
    import shapely
    from shapely.geometry import Polygon as ShapelyPolygon

    poly = ShapelyPolygon(ann.corners)
    r_max = float(np.hypot(*ann.corners.T).max()) * 1.001
    ts = np.linspace(1e-6, r_max, steps)
    counts = []
    for a in angles:
        inside = shapely.contains_xy(poly, ts * np.cos(a), ts * np.sin(a))
        counts.append(int(np.count_nonzero(np.diff(inside.astype(np.int8)) != 0)))
    return np.asarray(counts)


def shapely_first_hit_oracle(corners, angle):
    """Independent first-hit oracle via shapely boundary intersection."""
    from shapely.geometry import LineString, Polygon as ShapelyPolygon

    poly = ShapelyPolygon(corners)
    r = float(np.hypot(*np.asarray(corners).T).max()) * 2.0
    ray = LineString([(1e-12 * np.cos(angle), 1e-12 * np.sin(angle)),
                      (r * np.cos(angle), r * np.sin(angle))])
    hit = poly.boundary.intersection(ray)
    if hit.is_empty:
        return np.inf
    from shapely.geometry import Point
    origin = Point(0.0, 0.0)
    return float(origin.distance(hit))

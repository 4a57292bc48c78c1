"""Layout representations and the conversions among them.

Three interchangeable forms of a room layout:

* floor polygon + room height (``LayoutAnnotation``) — the canonical
  annotation form, camera at the origin of the floorplan;
* per-column horizon depth + room height (``HorizonDepth``) — the model's
  native output;
* per-column floor/ceiling pixel rows on the panorama (``BoundaryCurve``).

Column ``i`` of ``N`` looks along longitude ``theta = 2*pi*((i+0.5)/N - 0.5)``;
the half-pixel offset keeps columns off the +-pi seam.  Latitude ``phi`` maps
to pixel row ``v = (0.5 - phi/pi) * H`` (row 0 = zenith).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels

logger = logging.getLogger(__name__)

DEGENERATE_EDGE = 1e-12


class LayoutError(ValueError):
    """Invalid layout data (broken invariant or corrupted input)."""


@dataclass(frozen=True)
class CameraFrame:
    """Equirectangular camera convention: image size, column count and the
    camera's height above the floor plane."""

    width: int = 1024
    height: int = 512
    num_columns: int = 256
    camera_height: float = 1.6

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise LayoutError(f"width must be 2*height, got {self.width}x{self.height}")
        if self.num_columns < 4:
            raise LayoutError("need at least 4 columns")
        if self.width % self.num_columns != 0:
            raise LayoutError("num_columns must divide the image width")
        if not (self.camera_height > 0 and np.isfinite(self.camera_height)):
            raise LayoutError("camera_height must be positive and finite")


def column_longitudes(frame: CameraFrame) -> np.ndarray:
    i = np.arange(frame.num_columns, dtype=np.float64)
    return 2.0 * np.pi * ((i + 0.5) / frame.num_columns - 0.5)


def column_longitude(i: int, frame: CameraFrame) -> float:
    if not 0 <= i < frame.num_columns:
        raise IndexError(f"column {i} out of range [0, {frame.num_columns})")
    return 2.0 * np.pi * ((i + 0.5) / frame.num_columns - 0.5)


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True, eq=False)
class LayoutAnnotation:
    """A room layout: counterclockwise floor polygon (camera at the origin)
    plus room height."""

    corners: np.ndarray
    room_height: float
    label_kind: str = "extended"
    id: str = ""

    def __post_init__(self):
        corners = np.ascontiguousarray(np.asarray(self.corners, dtype=np.float64))
        if corners.ndim != 2 or corners.shape[1] != 2 or corners.shape[0] < 3:
            raise LayoutError(f"{self.id or 'annotation'}: corners must be (K>=3, 2)")
        if not np.isfinite(corners).all():
            raise LayoutError(f"{self.id or 'annotation'}: non-finite corner")
        object.__setattr__(self, "corners", corners)
        if self.label_kind not in ("extended", "enclosed"):
            raise LayoutError(f"{self.id or 'annotation'}: bad label_kind {self.label_kind!r}")
        if not (np.isfinite(self.room_height) and self.room_height > 0):
            raise LayoutError(f"{self.id or 'annotation'}: room_height must be positive")
        if polygon_signed_area(corners) <= 0:
            raise LayoutError(f"{self.id or 'annotation'}: corners must wind counterclockwise")
        if not polygon_is_simple(corners):
            raise LayoutError(f"{self.id or 'annotation'}: polygon self-intersects")
        if not origin_strictly_inside(corners):
            raise LayoutError(f"{self.id or 'annotation'}: camera origin not strictly inside")

    def corner_angles(self) -> np.ndarray:
        return np.arctan2(self.corners[:, 1], self.corners[:, 0])

    def corner_ranges(self) -> np.ndarray:
        return np.hypot(self.corners[:, 0], self.corners[:, 1])


@dataclass(frozen=True, eq=False)
class HorizonDepth:
    """Per-column horizontal camera-to-wall distance plus room height."""

    depths: np.ndarray
    room_height: float

    def __post_init__(self):
        depths = np.ascontiguousarray(np.asarray(self.depths, dtype=np.float64))
        if depths.ndim != 1:
            raise LayoutError("depths must be a vector")
        if not (np.isfinite(depths).all() and (depths > 0).all()):
            raise LayoutError("depths must be positive and finite")
        if not (np.isfinite(self.room_height) and self.room_height > 0):
            raise LayoutError("room_height must be positive")
        object.__setattr__(self, "depths", depths)


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Floor and ceiling boundary pixel rows, one value per column."""

    floor_v: np.ndarray
    ceil_v: np.ndarray
    frame: CameraFrame

    def __post_init__(self):
        floor_v = np.ascontiguousarray(np.asarray(self.floor_v, dtype=np.float64))
        ceil_v = np.ascontiguousarray(np.asarray(self.ceil_v, dtype=np.float64))
        h = self.frame.height
        if floor_v.shape != ceil_v.shape or floor_v.ndim != 1:
            raise LayoutError("floor_v and ceil_v must be equal-length vectors")
        if floor_v.shape[0] != self.frame.num_columns:
            raise LayoutError(
                f"curve has {floor_v.shape[0]} columns, frame expects {self.frame.num_columns}"
            )
        if not (np.isfinite(floor_v).all() and np.isfinite(ceil_v).all()):
            raise LayoutError("non-finite boundary row")
        if not ((floor_v > h / 2) & (floor_v < h)).all():
            raise LayoutError("floor boundary must lie strictly below the horizon")
        if not ((ceil_v > 0) & (ceil_v < h / 2)).all():
            raise LayoutError("ceiling boundary must lie strictly above the horizon")
        object.__setattr__(self, "floor_v", floor_v)
        object.__setattr__(self, "ceil_v", ceil_v)


@dataclass(frozen=True, eq=False)
class WallGeometry:
    """Per-column wall normals and the turning (gradient) between adjacent
    normals."""

    normals: np.ndarray
    normal_angles: np.ndarray
    gradients: np.ndarray


def polygon_signed_area(corners: np.ndarray) -> float:
    x = corners[:, 0]
    z = corners[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def _orient(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    if d1 == 0 and on_seg(q1, q2, p1):
        return True
    if d2 == 0 and on_seg(q1, q2, p2):
        return True
    if d3 == 0 and on_seg(p1, p2, q1):
        return True
    if d4 == 0 and on_seg(p1, p2, q2):
        return True
    return False


def polygon_is_simple(corners: np.ndarray) -> bool:
    k = corners.shape[0]
    for i in range(k):
        a1 = corners[i]
        a2 = corners[(i + 1) % k]
        if np.hypot(*(a2 - a1)) < DEGENERATE_EDGE:
            return False
        # consecutive edges must not double back onto each other
        a3 = corners[(i + 2) % k]
        e1 = a2 - a1
        e2 = a3 - a2
        if e1[0] * e2[1] - e1[1] * e2[0] == 0 and e1 @ e2 < 0:
            return False
        for j in range(i + 1, k):
            # adjacent edges share only their common endpoint
            if (j + 1) % k == i or (i + 1) % k == j:
                continue
            if _segments_cross(a1, a2, corners[j], corners[(j + 1) % k]):
                return False
    return True


def origin_strictly_inside(corners: np.ndarray) -> bool:
    counts = _kernels.crossing_counts(corners[:, 0], corners[:, 1], np.array([0.123456]))
    if counts[0] % 2 == 0:
        return False
    # reject the origin sitting on (or within eps of) the boundary
    a = corners
    b = np.roll(corners, -1, axis=0)
    e = b - a
    ll = np.einsum("ij,ij->i", e, e)
    t = np.clip(-np.einsum("ij,ij->i", a, e) / np.maximum(ll, 1e-300), 0.0, 1.0)
    nearest = a + t[:, None] * e
    return float(np.min(np.hypot(nearest[:, 0], nearest[:, 1]))) > 1e-9


def depth_to_boundary(hd: HorizonDepth, frame: CameraFrame) -> BoundaryCurve:
    """Project horizon depths to floor/ceiling boundary rows on the panorama."""
    if hd.depths.shape[0] != frame.num_columns:
        raise LayoutError("depth vector length does not match frame columns")
    if hd.room_height <= frame.camera_height:
        raise LayoutError("room_height must exceed camera_height")
    phi_floor = np.arctan(-frame.camera_height / hd.depths)
    phi_ceil = np.arctan((hd.room_height - frame.camera_height) / hd.depths)
    floor_v = (0.5 - phi_floor / np.pi) * frame.height
    ceil_v = (0.5 - phi_ceil / np.pi) * frame.height
    return BoundaryCurve(floor_v=floor_v, ceil_v=ceil_v, frame=frame)


def boundary_to_depth(bc: BoundaryCurve, frame: CameraFrame | None = None) -> HorizonDepth:
    """Invert :func:`depth_to_boundary`.  Room height is recovered as the
    per-column mean, which tolerates curves that became inconsistent after
    lossy edits."""
    frame = frame or bc.frame
    if frame != bc.frame:
        raise LayoutError("boundary curve belongs to a different frame")
    phi_floor = (0.5 - bc.floor_v / frame.height) * np.pi
    if np.any(phi_floor >= 0):
        raise LayoutError("floor row at or above the horizon")
    depths = frame.camera_height / np.tan(-phi_floor)
    phi_ceil = (0.5 - bc.ceil_v / frame.height) * np.pi
    height = float(np.mean(frame.camera_height + depths * np.tan(phi_ceil)))
    return HorizonDepth(depths=depths, room_height=height)


def annotation_to_depth(ann: LayoutAnnotation, frame: CameraFrame) -> HorizonDepth:
    """Sample the floor polygon into per-column depths: each column gets the
    range to the first boundary crossing of its viewing ray."""
    depths = _kernels.first_hit_depths(
        ann.corners[:, 0], ann.corners[:, 1], column_longitudes(frame)
    )
    if not np.isfinite(depths).all():
        raise LayoutError(f"{ann.id or 'annotation'}: ray hits no edge (corrupted polygon)")
    return HorizonDepth(depths=depths, room_height=ann.room_height)


def annotation_to_boundary(ann: LayoutAnnotation, frame: CameraFrame) -> BoundaryCurve:
    return depth_to_boundary(annotation_to_depth(ann, frame), frame)


def wall_geometry(hd: HorizonDepth, frame: CameraFrame) -> WallGeometry:
    """Per-column wall normals from the sampled floorplan polyline.

    Column i's normal is the camera-facing unit perpendicular of the segment
    from point i to point i+1; the gradient is the wrapped turn from the
    previous column's normal.
    """
    if hd.depths.shape[0] != frame.num_columns:
        raise LayoutError("depth vector length does not match frame columns")
    theta = column_longitudes(frame)
    px = hd.depths * np.cos(theta)
    pz = hd.depths * np.sin(theta)
    ex = np.roll(px, -1) - px
    ez = np.roll(pz, -1) - pz
    length = np.hypot(ex, ez)

    degenerate = length < DEGENERATE_EDGE
    if degenerate.any():
        logger.warning("%d degenerate floorplan edges; reusing previous normals",
                       int(degenerate.sum()))
        ok = np.nonzero(~degenerate)[0]
        if ok.size == 0:
            raise LayoutError("all floorplan edges degenerate")
        idx = np.arange(frame.num_columns)
        # previous valid column, circularly
        pos = np.searchsorted(ok, idx, side="right") - 1
        src = ok[pos]  # pos == -1 wraps to the last valid column
        ex, ez, length = ex[src], ez[src], length[src]

    nx = -ez / length
    nz = ex / length
    angles = np.arctan2(nz, nx)
    gradients = wrap_angle(angles - np.roll(angles, 1))
    return WallGeometry(
        normals=np.stack([nx, nz], axis=1),
        normal_angles=angles,
        gradients=gradients,
    )


def depth_to_annotation(
    hd: HorizonDepth,
    frame: CameraFrame,
    label_kind: str = "extended",
    id: str = "",
) -> LayoutAnnotation:
    """Promote a horizon-depth layout to an N-corner annotation polygon."""
    theta = column_longitudes(frame)
    corners = np.stack([hd.depths * np.cos(theta), hd.depths * np.sin(theta)], axis=1)
    return LayoutAnnotation(
        corners=corners, room_height=hd.room_height, label_kind=label_kind, id=id
    )

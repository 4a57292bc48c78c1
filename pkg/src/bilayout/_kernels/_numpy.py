"""Pure-numpy implementations of the geometry kernels.

Same contracts as the compiled backend in ``_native.pyx``; used when the
extension is unavailable or ``BILAYOUT_PURE_PYTHON`` is set.
"""

import numpy as np

BACKEND = "numpy"


def first_hit_depths(xs, zs, angles):
    """Distance from the origin to the first polygon-boundary crossing along
    each ray direction.  Columns whose ray misses every edge get +inf.

    xs, zs: polygon vertex coordinates, counterclockwise.
    angles: ray longitudes in radians.
    """
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)

    ax, az = xs, zs
    bx, bz = np.roll(xs, -1), np.roll(zs, -1)
    ex, ez = bx - ax, bz - az

    ux = np.cos(angles)[:, None]
    uz = np.sin(angles)[:, None]

    # ray t*u meets edge a + s*e where t = (a x e)/(u x e), s = (a x u)/(u x e)
    denom = ux * ez[None, :] - uz * ex[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ez - az * ex)[None, :] / denom
        s = (ax[None, :] * uz - az[None, :] * ux) / denom
    valid = (np.abs(denom) > 1e-300) & (s >= 0.0) & (s < 1.0) & (t > 0.0)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


def crossing_counts(xs, zs, angles):
    """Number of polygon-boundary crossings along each ray.

    A ray through a vertex counts one crossing when the incident edges lie on
    opposite sides of the ray and zero otherwise.
    """
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    k = xs.shape[0]

    ux = np.cos(angles)[:, None]
    uz = np.sin(angles)[:, None]

    # side of each vertex relative to the ray line, and whether it is ahead
    side = np.sign(ux * zs[None, :] - uz * xs[None, :])  # (n, k)
    ahead = (ux * xs[None, :] + uz * zs[None, :]) > 0.0

    side_a = side
    side_b = np.roll(side, -1, axis=1)

    # strict straddles: intersection parameter must be positive
    ax, az = xs, zs
    ex, ez = np.roll(xs, -1) - xs, np.roll(zs, -1) - zs
    denom = ux * ez[None, :] - uz * ex[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ez - az * ex)[None, :] / denom
    strict = (side_a * side_b < 0) & (t > 0.0)
    counts = strict.sum(axis=1)

    # vertices exactly on the ray, ahead of the camera: count once when the
    # neighbouring vertices straddle the ray line
    on_ray = (side == 0) & ahead
    if on_ray.any():
        prev_side = np.roll(side, 1, axis=1)
        next_side = np.roll(side, -1, axis=1)
        counts = counts + (on_ray & (prev_side * next_side < 0)).sum(axis=1)
    return counts.astype(np.int64)


def raster_fill(xs, zs, x0, y0, sx, sy, nx, ny):
    """Even-odd rasterization of a polygon on a pixel-center grid.

    Pixel (j, i) center sits at (x0 + (i+0.5)*sx, y0 + (j+0.5)*sy).
    Returns a uint8 mask of shape (ny, nx).
    """
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    ya = zs
    yb = np.roll(zs, -1)
    xa = xs
    xb = np.roll(xs, -1)

    rows = y0 + (np.arange(ny) + 0.5) * sy
    # edge crosses the scanline when exactly one endpoint is at or below it
    below_a = ya[None, :] <= rows[:, None]
    below_b = yb[None, :] <= rows[:, None]
    crossing = below_a != below_b

    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xa[None, :] + (rows[:, None] - ya[None, :]) * (
            (xb - xa)[None, :] / (yb - ya)[None, :]
        )
    xcross = np.where(crossing, xcross, np.inf)
    xcross.sort(axis=1)

    counts = crossing.sum(axis=1)
    max_pairs = int(counts.max()) // 2 if counts.size else 0
    mask = np.zeros((ny, nx + 1), dtype=np.int32)
    for p in range(max_pairs):
        lo = xcross[:, 2 * p]
        hi = xcross[:, 2 * p + 1]
        live = np.isfinite(hi)
        if not live.any():
            break
        lo = np.where(live, lo, 0.0)
        hi = np.where(live, hi, 0.0)
        # first pixel center >= lo, first pixel center >= hi
        i0 = np.clip(np.ceil((lo - x0) / sx - 0.5), 0, nx).astype(np.int64)
        i1 = np.clip(np.ceil((hi - x0) / sx - 0.5), 0, nx).astype(np.int64)
        r = np.nonzero(live & (i1 > i0))[0]
        np.add.at(mask, (r, i0[r]), 1)
        np.add.at(mask, (r, i1[r]), -1)
    return (np.cumsum(mask[:, :-1], axis=1) % 2).astype(np.uint8)

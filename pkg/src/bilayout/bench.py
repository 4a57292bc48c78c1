"""Benchmark the compiled kernels against the numpy fallback.

Hot paths: ray casting over layout polygons (depth sampling, occlusion
counting) and even-odd rasterization (the IoU oracle and containment
checks).
"""

from __future__ import annotations

import time

import numpy as np

from ._kernels import BACKEND, _numpy

try:
    from ._kernels import _native
except ImportError:
    _native = None


def _star_polygon(rng: np.random.Generator, corners: int = 24) -> np.ndarray:
    angles = np.sort(rng.uniform(-np.pi, np.pi, corners))
    radii = rng.uniform(1.0, 5.0, corners)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def _time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_benchmark(repeat: int = 5, columns: int = 1024, resolution: int = 1024) -> dict:
    rng = np.random.default_rng(7)
    poly = _star_polygon(rng)
    xs, zs = poly[:, 0], poly[:, 1]
    angles = 2.0 * np.pi * ((np.arange(columns) + 0.5) / columns - 0.5)
    lo = poly.min(axis=0) - 0.1
    hi = poly.max(axis=0) + 0.1
    sx = (hi[0] - lo[0]) / resolution
    sy = (hi[1] - lo[1]) / resolution

    backends = {"numpy": _numpy}
    if _native is not None:
        backends["native"] = _native

    cases = {
        "first_hit_depths": lambda mod: mod.first_hit_depths(xs, zs, angles),
        "crossing_counts": lambda mod: mod.crossing_counts(xs, zs, angles),
        "raster_fill": lambda mod: mod.raster_fill(xs, zs, lo[0], lo[1], sx, sy,
                                                   resolution, resolution),
    }

    print(f"active backend: {BACKEND}")
    print(f"polygon corners: {poly.shape[0]}, columns: {columns}, "
          f"raster: {resolution}x{resolution}, repeat: {repeat}")
    results: dict = {}
    for case, fn in cases.items():
        row = {}
        for name, mod in backends.items():
            row[name] = _time(lambda: fn(mod), repeat)
        results[case] = row
        line = f"{case:>18}: " + "  ".join(
            f"{name} {seconds * 1e3:8.3f} ms" for name, seconds in row.items())
        if "native" in row and "numpy" in row:
            line += f"  (speedup {row['numpy'] / row['native']:.1f}x)"
        print(line)

    # both backends must agree bit-for-bit on integer outputs and to float
    # tolerance on depths
    if _native is not None:
        d_py = _numpy.first_hit_depths(xs, zs, angles)
        d_nat = _native.first_hit_depths(xs, zs, angles)
        assert np.allclose(d_py, d_nat, rtol=1e-12)
        assert np.array_equal(_numpy.crossing_counts(xs, zs, angles),
                              _native.crossing_counts(xs, zs, angles))
        assert np.array_equal(
            _numpy.raster_fill(xs, zs, lo[0], lo[1], sx, sy, resolution, resolution),
            _native.raster_fill(xs, zs, lo[0], lo[1], sx, sy, resolution, resolution))
        print("backend parity: ok")
    return results

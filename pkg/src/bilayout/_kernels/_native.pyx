# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled geometry kernels: ray casting against floor polygons and even-odd
polygon rasterization.  Mirrors the contracts of ``_numpy.py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, ceil, INFINITY

cnp.import_array()

BACKEND = "native"


def first_hit_depths(object xs_in, object zs_in, object angles_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zs = np.ascontiguousarray(zs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] angles = np.ascontiguousarray(angles_in, dtype=np.float64)
    cdef Py_ssize_t k = xs.shape[0]
    cdef Py_ssize_t n = angles.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)

    cdef Py_ssize_t i, j, jn
    cdef double ux, uz, ax, az, ex, ez, denom, t, s, best
    for i in range(n):
        ux = cos(angles[i])
        uz = sin(angles[i])
        best = INFINITY
        for j in range(k):
            jn = j + 1
            if jn == k:
                jn = 0
            ax = xs[j]
            az = zs[j]
            ex = xs[jn] - ax
            ez = zs[jn] - az
            denom = ux * ez - uz * ex
            if denom > 1e-300 or denom < -1e-300:
                t = (ax * ez - az * ex) / denom
                s = (ax * uz - az * ux) / denom
                if s >= 0.0 and s < 1.0 and t > 0.0 and t < best:
                    best = t
        out[i] = best
    return out


def crossing_counts(object xs_in, object zs_in, object angles_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zs = np.ascontiguousarray(zs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] angles = np.ascontiguousarray(angles_in, dtype=np.float64)
    cdef Py_ssize_t k = xs.shape[0]
    cdef Py_ssize_t n = angles.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] side = np.empty(k, dtype=np.float64)

    cdef Py_ssize_t i, j, jn, jp
    cdef double ux, uz, ax, az, ex, ez, denom, t, c
    cdef long count
    for i in range(n):
        ux = cos(angles[i])
        uz = sin(angles[i])
        for j in range(k):
            c = ux * zs[j] - uz * xs[j]
            side[j] = 0.0 if c == 0.0 else (1.0 if c > 0.0 else -1.0)
        count = 0
        for j in range(k):
            jn = j + 1
            if jn == k:
                jn = 0
            if side[j] * side[jn] < 0.0:
                ax = xs[j]
                az = zs[j]
                ex = xs[jn] - ax
                ez = zs[jn] - az
                denom = ux * ez - uz * ex
                t = (ax * ez - az * ex) / denom
                if t > 0.0:
                    count += 1
            if side[j] == 0.0 and (ux * xs[j] + uz * zs[j]) > 0.0:
                jp = j - 1
                if jp < 0:
                    jp = k - 1
                if side[jp] * side[jn] < 0.0:
                    count += 1
        out[i] = count
    return out


def raster_fill(object xs_in, object zs_in, double x0, double y0,
                double sx, double sy, Py_ssize_t nx, Py_ssize_t ny):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zs = np.ascontiguousarray(zs_in, dtype=np.float64)
    cdef Py_ssize_t k = xs.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] mask = np.zeros((ny, nx), dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cross = np.empty(k, dtype=np.float64)

    cdef Py_ssize_t j, e, en, nc, p, i0, i1, i
    cdef double y, ya, yb, xa, xb
    cdef bint ba, bb
    for j in range(ny):
        y = y0 + (j + 0.5) * sy
        nc = 0
        for e in range(k):
            en = e + 1
            if en == k:
                en = 0
            ya = zs[e]
            yb = zs[en]
            ba = ya <= y
            bb = yb <= y
            if ba != bb:
                xa = xs[e]
                xb = xs[en]
                cross[nc] = xa + (y - ya) * (xb - xa) / (yb - ya)
                nc += 1
        if nc == 0:
            continue
        cross[:nc].sort()
        p = 0
        while p + 1 < nc:
            i0 = <Py_ssize_t>ceil((cross[p] - x0) / sx - 0.5)
            i1 = <Py_ssize_t>ceil((cross[p + 1] - x0) / sx - 0.5)
            if i0 < 0:
                i0 = 0
            if i1 > nx:
                i1 = nx
            for i in range(i0, i1):
                mask[j, i] = 1
            p += 2
    return mask

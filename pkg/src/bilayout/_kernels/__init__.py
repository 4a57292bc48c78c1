"""Geometry kernel backend selection.

The compiled extension is preferred; the numpy implementation is the
fallback.  Set ``BILAYOUT_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and the backend-parity tests).
"""

import os

from . import _numpy

if os.environ.get("BILAYOUT_PURE_PYTHON"):
    _impl = _numpy
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _numpy

BACKEND = _impl.BACKEND
first_hit_depths = _impl.first_hit_depths
crossing_counts = _impl.crossing_counts
raster_fill = _impl.raster_fill


def get_backend(name=None):
    """Return the kernel module for `name` ("native", "numpy" or None for
    the active default).  Raises ImportError if the native backend was not
    built."""
    if name is None or name == BACKEND:
        return _impl
    if name == "numpy":
        return _numpy
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown kernel backend: {name!r}")

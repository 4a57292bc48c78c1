"""Panoramic room-layout toolkit: dual-annotation layout geometry, metrics,
losses, a desk-scale model forward pass, and a semi-automatic relabeling
pipeline with a human-in-the-loop selection step."""

from ._kernels import BACKEND as kernel_backend
from .geometry import (
    BoundaryCurve,
    CameraFrame,
    HorizonDepth,
    LayoutAnnotation,
    LayoutError,
    WallGeometry,
    annotation_to_boundary,
    annotation_to_depth,
    boundary_to_depth,
    column_longitude,
    column_longitudes,
    depth_to_annotation,
    depth_to_boundary,
    wall_geometry,
)
from .losses import LossBreakdown, LossWeights, branch_loss, total_loss
from .metrics import (
    AmbiguityResult,
    EvalReport,
    IoUPair,
    build_subset,
    detect_ambiguity,
    disambiguate,
    evaluate,
    iou2d,
    iou2d_raster,
    iou3d,
    polygon_area,
)

__version__ = "0.1.0"

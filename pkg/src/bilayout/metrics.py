"""Layout evaluation: 2D/3D IoU, branch disambiguation, failure subsets and
per-column ambiguity detection.

The exact IoU path clips polygons with shapely; an independent even-odd
rasterization oracle backs it for testing and for near-degenerate inputs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import Polygon as ShapelyPolygon

from . import _kernels
from .geometry import BoundaryCurve, LayoutAnnotation, polygon_signed_area

logger = logging.getLogger(__name__)

BRANCHES = ("extended", "enclosed")
SUBSET_THRESHOLD = 0.6
GT_AMBIGUITY_PX = 2.0
PRED_AMBIGUITY_PX = 10.0


class MetricError(ValueError):
    """Degenerate or mismatched metric inputs."""


@dataclass(frozen=True)
class IoUPair:
    iou2d: float
    iou3d: float


@dataclass(frozen=True)
class SampleResult:
    id: str
    iou_extended: IoUPair
    iou_enclosed: IoUPair
    iou_disambiguate: IoUPair
    chosen_branch: str


@dataclass(frozen=True)
class EvalReport:
    per_sample: tuple[SampleResult, ...]
    equivalent_branch: str = "extended"
    subset_threshold: float = SUBSET_THRESHOLD

    @property
    def num_samples(self) -> int:
        return len(self.per_sample)

    def aggregate(self, column: str) -> IoUPair:
        pairs = [getattr(s, column) for s in self.per_sample]
        return IoUPair(
            iou2d=float(np.mean([p.iou2d for p in pairs])),
            iou3d=float(np.mean([p.iou3d for p in pairs])),
        )

    @property
    def subset_ids(self) -> list[str]:
        return build_subset(self, threshold=self.subset_threshold)


@dataclass(frozen=True, eq=False)
class AmbiguityResult:
    gt_mask: np.ndarray
    pred_mask: np.ndarray
    confidence: np.ndarray
    precision: float
    recall: float
    regions: tuple[tuple[int, int], ...]


def _corners_of(poly) -> np.ndarray:
    corners = poly.corners if isinstance(poly, LayoutAnnotation) else np.asarray(
        poly, dtype=np.float64)
    if corners.ndim != 2 or corners.shape[1] != 2 or corners.shape[0] < 3:
        raise MetricError("polygon needs at least 3 corners")
    return corners


def polygon_area(corners) -> float:
    """Signed shoelace area; positive for counterclockwise corners."""
    return polygon_signed_area(_corners_of(corners))


def _as_shapely(poly) -> ShapelyPolygon:
    shape = ShapelyPolygon(_corners_of(poly))
    if not shape.is_valid or shape.area <= 0:
        name = poly.id if isinstance(poly, LayoutAnnotation) and poly.id else "polygon"
        raise MetricError(f"{name} is degenerate")
    return shape


def _intersection_area(pred, gt, resolution: int = 2048) -> float:
    try:
        return float(_as_shapely(pred).intersection(_as_shapely(gt)).area)
    except shapely.errors.GEOSException:
        logger.warning("exact polygon clip failed; falling back to raster oracle")
        a_p = abs(polygon_area(pred))
        a_g = abs(polygon_area(gt))
        i2d = iou2d_raster(pred, gt, resolution=resolution)
        # invert IoU = I / (Ap + Ag - I)
        return i2d * (a_p + a_g) / (1.0 + i2d)


def iou2d(pred, gt) -> float:
    """Exact 2D IoU of two simple floor polygons (annotations or bare corner
    arrays)."""
    inter = _intersection_area(pred, gt)
    union = abs(polygon_area(pred)) + abs(polygon_area(gt)) - inter
    if union <= 0:
        raise MetricError("degenerate polygons: empty union")
    return inter / union


def iou2d_raster(pred, gt, resolution: int = 2048) -> float:
    """Rasterization oracle: even-odd fill of both polygons on a shared
    resolution x resolution grid over the joint bounding box."""
    pc = _corners_of(pred)
    gc = _corners_of(gt)
    pts = np.vstack([pc, gc])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    pad = 1e-9 + 1e-6 * float(span.max())
    lo = lo - pad
    hi = hi + pad
    sx = (hi[0] - lo[0]) / resolution
    sy = (hi[1] - lo[1]) / resolution
    mask_p = _kernels.raster_fill(pc[:, 0], pc[:, 1], lo[0], lo[1], sx, sy,
                                  resolution, resolution)
    mask_g = _kernels.raster_fill(gc[:, 0], gc[:, 1], lo[0], lo[1], sx, sy,
                                  resolution, resolution)
    inter = int(np.count_nonzero(mask_p & mask_g))
    union = int(np.count_nonzero(mask_p | mask_g))
    if union == 0:
        raise MetricError("degenerate polygons: empty raster union")
    return inter / union


def raster_containment(inner, outer, resolution: int = 1024) -> int:
    """Number of raster pixels of `inner` that fall outside `outer`."""
    ic = _corners_of(inner)
    oc = _corners_of(outer)
    pts = np.vstack([ic, oc])
    lo = pts.min(axis=0) - 1e-9
    hi = pts.max(axis=0) + 1e-9
    sx = (hi[0] - lo[0]) / resolution
    sy = (hi[1] - lo[1]) / resolution
    mask_i = _kernels.raster_fill(ic[:, 0], ic[:, 1], lo[0], lo[1], sx, sy,
                                  resolution, resolution)
    mask_o = _kernels.raster_fill(oc[:, 0], oc[:, 1], lo[0], lo[1], sx, sy,
                                  resolution, resolution)
    return int(np.count_nonzero(mask_i & ~mask_o))


def iou3d(pred: LayoutAnnotation, gt: LayoutAnnotation) -> float:
    """Volume IoU of the two layout prisms, which share the floor plane."""
    inter2d = _intersection_area(pred, gt)
    a_p = abs(polygon_area(pred))
    a_g = abs(polygon_area(gt))
    inter = inter2d * min(pred.room_height, gt.room_height)
    union = a_p * pred.room_height + a_g * gt.room_height - inter
    if union <= 0:
        raise MetricError("degenerate prisms: empty union")
    return inter / union


def iou_pair(pred: LayoutAnnotation, gt: LayoutAnnotation) -> IoUPair:
    return IoUPair(iou2d=iou2d(pred, gt), iou3d=iou3d(pred, gt))


def disambiguate(preds: dict[str, LayoutAnnotation],
                 gt: LayoutAnnotation) -> tuple[IoUPair, str]:
    """Score both branch predictions against one ground truth and keep the
    branch with the higher 2D IoU (ties go to the extended branch)."""
    pair_ext = iou_pair(preds["extended"], gt)
    pair_enc = iou_pair(preds["enclosed"], gt)
    if pair_enc.iou2d > pair_ext.iou2d:
        return pair_enc, "enclosed"
    return pair_ext, "extended"


def evaluate_sample(sample_id: str, pred_ext: LayoutAnnotation,
                    pred_enc: LayoutAnnotation, gt: LayoutAnnotation) -> SampleResult:
    pair_ext = iou_pair(pred_ext, gt)
    pair_enc = iou_pair(pred_enc, gt)
    if pair_enc.iou2d > pair_ext.iou2d:
        chosen, pair = "enclosed", pair_enc
    else:
        chosen, pair = "extended", pair_ext
    return SampleResult(
        id=sample_id,
        iou_extended=pair_ext,
        iou_enclosed=pair_enc,
        iou_disambiguate=pair,
        chosen_branch=chosen,
    )


def evaluate(samples, equivalent_branch: str = "extended",
             subset_threshold: float = SUBSET_THRESHOLD) -> EvalReport:
    """Build an EvalReport from (id, pred_extended, pred_enclosed, gt) tuples.
    Rows are ordered by id so aggregation is deterministic."""
    if equivalent_branch not in BRANCHES:
        raise MetricError(f"unknown branch {equivalent_branch!r}")
    rows = [evaluate_sample(*s) for s in samples]
    rows.sort(key=lambda r: r.id)
    ids = [r.id for r in rows]
    if len(set(ids)) != len(ids):
        raise MetricError("duplicate sample ids")
    return EvalReport(per_sample=tuple(rows), equivalent_branch=equivalent_branch,
                      subset_threshold=subset_threshold)


def build_subset(*reports: EvalReport, threshold: float | None = None) -> list[str]:
    """Ids whose equivalent-branch 2D IoU falls strictly below the threshold;
    multiple reports combine as the union of their failure sets."""
    ids: set[str] = set()
    for report in reports:
        thr = threshold if threshold is not None else report.subset_threshold
        col = f"iou_{report.equivalent_branch}"
        for row in report.per_sample:
            if getattr(row, col).iou2d < thr:
                ids.add(row.id)
    return sorted(ids)


def detect_ambiguity(pred_ext: BoundaryCurve, pred_enc: BoundaryCurve,
                     gt_ext: BoundaryCurve, gt_enc: BoundaryCurve,
                     gt_thresh: float = GT_AMBIGUITY_PX,
                     pred_thresh: float = PRED_AMBIGUITY_PX) -> AmbiguityResult:
    """Per-column ambiguity classification from dual predictions and dual
    ground truths, on the floor boundary.  Strict thresholds: a column is
    ambiguous only when its pixel difference exceeds the threshold."""
    frames = {pred_ext.frame, pred_enc.frame, gt_ext.frame, gt_enc.frame}
    if len(frames) != 1:
        raise MetricError("all four curves must share one camera frame")
    confidence = np.abs(pred_ext.floor_v - pred_enc.floor_v)
    pred_mask = confidence > pred_thresh
    gt_mask = np.abs(gt_ext.floor_v - gt_enc.floor_v) > gt_thresh

    tp = int(np.count_nonzero(pred_mask & gt_mask))
    fp = int(np.count_nonzero(pred_mask & ~gt_mask))
    fn = int(np.count_nonzero(~pred_mask & gt_mask))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    return AmbiguityResult(
        gt_mask=gt_mask,
        pred_mask=pred_mask,
        confidence=confidence,
        precision=precision,
        recall=recall,
        regions=tuple(circular_runs(pred_mask)),
    )


def circular_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True in a circular boolean mask, as inclusive
    (start, end) column pairs; a run crossing the seam has start > end."""
    n = mask.shape[0]
    if mask.all():
        return [(0, n - 1)]
    if not mask.any():
        return []
    diff = np.diff(mask.astype(np.int8), prepend=mask[-1].astype(np.int8))
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    runs = []
    for s in starts:
        later = ends[ends > s]
        e = int(later[0]) if later.size else int(ends[0])
        runs.append((int(s), (e - 1) % n))
    return runs


def report_to_dict(report: EvalReport) -> dict:
    subset = set(report.subset_ids)

    def pair(p: IoUPair) -> dict:
        return {"iou2d": p.iou2d, "iou3d": p.iou3d}

    return {
        "num_samples": report.num_samples,
        "equivalent_branch": report.equivalent_branch,
        "subset_threshold": report.subset_threshold,
        "aggregates": {
            "extended": pair(report.aggregate("iou_extended")),
            "enclosed": pair(report.aggregate("iou_enclosed")),
            "disambiguate": pair(report.aggregate("iou_disambiguate")),
        },
        "subset_ids": sorted(subset),
        "per_sample": [
            {
                "id": r.id,
                "iou_extended": pair(r.iou_extended),
                "iou_enclosed": pair(r.iou_enclosed),
                "iou_disambiguate": pair(r.iou_disambiguate),
                "chosen_branch": r.chosen_branch,
                "in_subset": r.id in subset,
            }
            for r in report.per_sample
        ],
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


CSV_COLUMNS = ["id", "iou2d_ext", "iou3d_ext", "iou2d_enc", "iou3d_enc",
               "iou2d_dis", "iou3d_dis", "chosen_branch", "in_subset"]


def report_to_csv(report: EvalReport) -> str:
    subset = set(report.subset_ids)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.per_sample:
        writer.writerow([
            r.id,
            repr(r.iou_extended.iou2d), repr(r.iou_extended.iou3d),
            repr(r.iou_enclosed.iou2d), repr(r.iou_enclosed.iou3d),
            repr(r.iou_disambiguate.iou2d), repr(r.iou_disambiguate.iou3d),
            r.chosen_branch,
            str(r.id in subset).lower(),
        ])
    return buf.getvalue()

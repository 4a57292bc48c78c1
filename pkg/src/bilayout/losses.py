"""Branch losses on horizon-depth layouts and their analytic gradients.

Per branch: L1 on depths, negative cosine similarity on wall normals, L1 on
wrapped normal gradients, and L1 on room height, combined with weights
(0.9, 0.1, 0.1, 0.1).  Gradients are taken with respect to the predicted
depths and height; L1 kinks and angle-wrap discontinuities use subgradient 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraFrame, HorizonDepth, column_longitudes, wall_geometry


@dataclass(frozen=True)
class LossWeights:
    depth: float = 0.9
    normal: float = 0.1
    gradient: float = 0.1
    height: float = 0.1

    def __post_init__(self):
        for name in ("depth", "normal", "gradient", "height"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {name} must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    depth: float
    normal: float
    gradient: float
    height: float
    branch_total: float
    grad_depths: np.ndarray
    grad_height: float


def branch_loss(pred: HorizonDepth, gt: HorizonDepth, weights: LossWeights,
                frame: CameraFrame) -> LossBreakdown:
    n = frame.num_columns
    if pred.depths.shape[0] != n or gt.depths.shape[0] != n:
        raise ValueError("prediction and ground truth must both have N columns")

    d = pred.depths
    d_gt = gt.depths
    geo = wall_geometry(pred, frame)
    geo_gt = wall_geometry(gt, frame)

    depth_loss = float(np.mean(np.abs(d - d_gt)))
    angle_diff = geo.normal_angles - geo_gt.normal_angles
    normal_loss = float(np.mean(-np.cos(angle_diff)))
    grad_diff = geo.gradients - geo_gt.gradients
    gradient_loss = float(np.mean(np.abs(grad_diff)))
    height_loss = float(abs(pred.room_height - gt.room_height))
    total = (weights.depth * depth_loss + weights.normal * normal_loss
             + weights.gradient * gradient_loss + weights.height * height_loss)

    # adjoint on the edge angles: angle(n_i) depends on d_i and d_{i+1}
    # through the floorplan segment e_i = p_{i+1} - p_i
    ds_dangle = (weights.normal * np.sin(angle_diff)
                 + weights.gradient * (np.sign(grad_diff) - np.roll(np.sign(grad_diff), -1))) / n

    theta = column_longitudes(frame)
    ux = np.cos(theta)
    uz = np.sin(theta)
    px = d * ux
    pz = d * uz
    ex = np.roll(px, -1) - px
    ez = np.roll(pz, -1) - pz
    sq = ex * ex + ez * ez
    # d angle_i / d d_i and d angle_i / d d_{i+1}
    dang_own = (ux * ez - uz * ex) / sq
    dang_next = (ex * np.roll(uz, -1) - ez * np.roll(ux, -1)) / sq

    grad_depths = (weights.depth * np.sign(d - d_gt) / n
                   + ds_dangle * dang_own
                   + np.roll(ds_dangle * dang_next, 1))
    grad_height = float(weights.height * np.sign(pred.room_height - gt.room_height))

    return LossBreakdown(
        depth=depth_loss,
        normal=normal_loss,
        gradient=gradient_loss,
        height=height_loss,
        branch_total=float(total),
        grad_depths=grad_depths,
        grad_height=grad_height,
    )


def total_loss(pred_ext: HorizonDepth, pred_enc: HorizonDepth,
               gt_ext: HorizonDepth, gt_enc: HorizonDepth,
               weights: LossWeights, frame: CameraFrame) -> dict:
    """Both branch losses plus their sum."""
    extended = branch_loss(pred_ext, gt_ext, weights, frame)
    enclosed = branch_loss(pred_enc, gt_enc, weights, frame)
    return {
        "extended": extended,
        "enclosed": enclosed,
        "total": extended.branch_total + enclosed.branch_total,
    }

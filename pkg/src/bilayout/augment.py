"""Layout-preserving augmentations: left-right flip, panoramic horizontal
rotation, axis stretch, and luminance adjustment (images only).

All annotation transforms are linear maps of the floorplan, so validity
(simple, counterclockwise, camera inside) is preserved by construction and
re-checked by the LayoutAnnotation constructor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraFrame, LayoutAnnotation

STRETCH_RANGE = (0.5, 2.0)
GAMMA_MAX = 4.0


@dataclass(frozen=True)
class AugmentSpec:
    flip: bool = False
    rotate_columns: int = 0
    stretch_kx: float = 1.0
    stretch_kz: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for k in (self.stretch_kx, self.stretch_kz):
            if not (STRETCH_RANGE[0] <= k <= STRETCH_RANGE[1]):
                raise ValueError(f"stretch factor {k} outside {STRETCH_RANGE}")
        if not (0.0 < self.gamma <= GAMMA_MAX):
            raise ValueError(f"gamma {self.gamma} outside (0, {GAMMA_MAX}]")


def flip(ann: LayoutAnnotation) -> LayoutAnnotation:
    """Left-right flip: mirror the floorplan across the x axis, reversing
    corner order to restore counterclockwise winding."""
    corners = ann.corners.copy()
    corners[:, 1] = -corners[:, 1]
    return replace(ann, corners=corners[::-1].copy())


def rotate(ann: LayoutAnnotation, k: int, frame: CameraFrame) -> LayoutAnnotation:
    """Panoramic rotation by k columns: rotate corners by 2*pi*k/N."""
    if not 0 <= k <= frame.num_columns:
        raise ValueError(f"rotation columns {k} outside [0, {frame.num_columns}]")
    a = 2.0 * np.pi * k / frame.num_columns
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return replace(ann, corners=ann.corners @ rot.T)


def stretch(ann: LayoutAnnotation, kx: float, kz: float) -> LayoutAnnotation:
    """Panoramic stretch: scale the floorplan axes independently."""
    if kx <= 0 or kz <= 0:
        raise ValueError("stretch factors must be positive")
    return replace(ann, corners=ann.corners * np.array([kx, kz]))


def luminance(image: np.ndarray, gamma: float) -> np.ndarray:
    """Per-channel gamma curve on pixels normalized to [0, 1]."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    img = np.asarray(image, dtype=np.float64)
    if img.min() < 0 or img.max() > 1:
        raise ValueError("pixels must be normalized to [0, 1]")
    return np.power(img, gamma)


def apply_spec(ann: LayoutAnnotation, spec: AugmentSpec,
               frame: CameraFrame) -> LayoutAnnotation:
    out = ann
    if spec.flip:
        out = flip(out)
    if spec.rotate_columns:
        out = rotate(out, spec.rotate_columns, frame)
    if spec.stretch_kx != 1.0 or spec.stretch_kz != 1.0:
        out = stretch(out, spec.stretch_kx, spec.stretch_kz)
    return out


def sample_spec(rng: np.random.Generator, frame: CameraFrame,
                flip_prob: float = 0.5,
                stretch_range: tuple[float, float] = STRETCH_RANGE,
                gamma_range: tuple[float, float] = (0.5, 2.0)) -> AugmentSpec:
    """Random augmentation; stretch factors are log-uniform so shrinking and
    growing are equally likely."""
    lo, hi = np.log(stretch_range[0]), np.log(stretch_range[1])
    glo, ghi = np.log(gamma_range[0]), np.log(gamma_range[1])
    return AugmentSpec(
        flip=bool(rng.random() < flip_prob),
        rotate_columns=int(rng.integers(0, frame.num_columns)),
        stretch_kx=float(np.exp(rng.uniform(lo, hi))),
        stretch_kz=float(np.exp(rng.uniform(lo, hi))),
        gamma=float(np.exp(rng.uniform(glo, ghi))),
    )

"""Depth-image processing: deprojection, contact-patch masks, cropping.

Depth rasters are (height, width) float arrays of z-depth in meters; 0.0 is
the invalid-pixel sentinel (it lies outside the sensor's working range, so
no valid measurement collides with it). Contact is detected as the membrane
moving toward the camera relative to a contact-free reference frame, i.e.
reference - current above a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

INVALID_DEPTH = 0.0
WORKING_RANGE = (0.04, 0.11)
DEFAULT_RESOLUTION = (224, 176)  # (width, height)
DEFAULT_DIFF_THRESHOLD = 0.002  # meters
DEFAULT_OPEN_RADIUS = 1  # pixels


@dataclass(frozen=True)
class PinholeModel:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass(eq=False)
class DepthImage:
    """Row-major z-depth raster in meters with its pinhole intrinsics."""

    data: np.ndarray
    intrinsics: PinholeModel

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ValueError("depth data must be a 2D raster")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.data != INVALID_DEPTH


@dataclass(eq=False)
class IrImage:
    """Normalized-intensity raster, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ValueError("IR data must be a 2D raster")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(eq=False)
class ContactPatchMask:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def pixel_count(self) -> int:
        return int(self.bits.sum())


def pixel_rays(intrinsics: PinholeModel, width: int, height: int) -> np.ndarray:
    """Unnormalized ray directions ((u-cx)/fx, (v-cy)/fy, 1) as (H, W, 3)."""
    u = np.arange(width, dtype=float)
    v = np.arange(height, dtype=float)
    xs = (u - intrinsics.cx) / intrinsics.fx
    ys = (v - intrinsics.cy) / intrinsics.fy
    dirs = np.empty((height, width, 3))
    dirs[..., 0] = xs[None, :]
    dirs[..., 1] = ys[:, None]
    dirs[..., 2] = 1.0
    return dirs


def deproject(img: DepthImage, select: np.ndarray | None = None):
    """Back-project valid pixels to camera-frame 3D points.

    Args:
        img: depth image with intrinsics.
        select: optional boolean raster further restricting which pixels
            are deprojected (used for contact-patch cropping).

    Returns:
        PointCloud in the camera frame, in row-major pixel order.
    """
    from .geometry import PointCloud

    keep = img.valid
    if select is not None:
        sel = np.asarray(select, dtype=bool)
        if sel.shape != img.data.shape:
            raise ValueError("selection mask dimensions do not match the image")
        keep = keep & sel
    dirs = pixel_rays(img.intrinsics, img.width, img.height)
    pts = dirs[keep] * img.data[keep][:, None]
    return PointCloud(pts.reshape(-1, 3), frame="C")


def project(intrinsics: PinholeModel, points: np.ndarray) -> np.ndarray:
    """Pinhole projection of camera-frame points to (u, v, depth) triples."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    z = pts[:, 2]
    u = pts[:, 0] / z * intrinsics.fx + intrinsics.cx
    v = pts[:, 1] / z * intrinsics.fy + intrinsics.cy
    return np.stack([u, v, z], axis=1)


def difference_mask(
    current: DepthImage, reference: DepthImage, threshold: float = DEFAULT_DIFF_THRESHOLD
) -> ContactPatchMask:
    """Pixels where the membrane moved toward the camera by more than `threshold`.

    Both pixels must be valid; the dimension mismatch case raises.
    """
    if threshold <= 0:
        raise ValueError("difference threshold must be positive")
    if current.data.shape != reference.data.shape:
        raise ValueError("current and reference image dimensions differ")
    bits = (reference.data - current.data > threshold) & current.valid & reference.valid
    return ContactPatchMask(bits)


def crop_to_patch(img: DepthImage, mask: ContactPatchMask):
    """Deproject only the pixels flagged by the contact-patch mask."""
    if mask.bits.shape != img.data.shape:
        raise ValueError("mask dimensions do not match the image")
    return deproject(img, select=mask.bits)


def _disc(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.ogrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def morphological_clean(mask: ContactPatchMask, open_radius: int = DEFAULT_OPEN_RADIUS) -> ContactPatchMask:
    """Binary opening with a disc element; radius 0 is the identity."""
    if open_radius < 0:
        raise ValueError("open radius must be >= 0")
    if open_radius == 0:
        return ContactPatchMask(mask.bits.copy())
    opened = ndimage.binary_opening(mask.bits, structure=_disc(open_radius))
    return ContactPatchMask(opened)

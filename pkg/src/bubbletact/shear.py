"""Shear-displacement estimation from dense optical flow on IR images.

Flow is always computed between a stable-grasp reference frame and the
current frame (never frame-to-frame), so the estimate is the accumulated
relative displacement since the reference was captured. The per-pixel flow
vectors are summed into a single shear vector whose direction is the
normalized sum and whose magnitude drives the release monitor.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .tactile import IrImage

ZERO_DIRECTION_EPS = 1e-6


class NotInitializedError(RuntimeError):
    """A release monitor was queried before a reference was set."""


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of the pyramidal polynomial-expansion flow estimator."""

    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window: int = 15
    iterations_per_level: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if not (0.0 < self.pyramid_scale < 1.0):
            raise ValueError("pyramid_scale must be in (0, 1)")
        if self.window % 2 == 0:
            raise ValueError("window must be odd")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise ValueError("poly_n must be odd and >= 3")


@dataclass(eq=False)
class FlowField:
    """Per-pixel 2D displacement, (H, W, 2) in pixels, (vx, vy) order.

    `border_margin` is the ring of pixels near the border excluded from
    shear sums (set by dense_flow to poly_n to keep border-extrapolation
    artifacts out of the aggregate); directly constructed fields default
    to 0 so sums run over every pixel. `low_confidence` marks degenerate
    (featureless) input pairs.
    """

    vectors: np.ndarray
    border_margin: int = 0
    low_confidence: bool = False

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError("flow vectors must have shape (H, W, 2)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("flow field contains non-finite vectors")
        self.vectors = arr

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    def interior(self) -> np.ndarray:
        m = self.border_margin
        if m <= 0:
            return self.vectors
        if 2 * m >= min(self.height, self.width):
            return self.vectors[0:0, 0:0]
        return self.vectors[m:-m, m:-m]


@dataclass(frozen=True)
class ShearEstimate:
    """Summed flow vector: raw sum, unit direction (zero if below eps), magnitude."""

    raw_sum: np.ndarray
    direction: np.ndarray
    magnitude: float


def dense_flow(reference: IrImage, current: IrImage, config: FlowConfig = FlowConfig()) -> FlowField:
    """Dense displacement field from `reference` to `current`.

    Uses pyramidal polynomial-expansion flow (Farneback); the output vector
    at pixel p estimates where the patch at p in the reference moved to in
    the current frame. Constant (featureless) inputs produce a zero field
    flagged low-confidence.
    """
    ref = np.asarray(reference.data, dtype=float)
    cur = np.asarray(current.data, dtype=float)
    if ref.shape != cur.shape:
        raise ValueError("reference and current image dimensions differ")
    if ref.min() < -1e-9 or ref.max() > 1.0 + 1e-9 or cur.min() < -1e-9 or cur.max() > 1.0 + 1e-9:
        raise ValueError("IR intensities must lie in [0, 1]")

    if ref.std() < 1e-6 or cur.std() < 1e-6:
        return FlowField(
            np.zeros(ref.shape + (2,)), border_margin=config.poly_n, low_confidence=True
        )
    if np.array_equal(ref, cur):
        # identical frames: zero displacement by definition
        return FlowField(np.zeros(ref.shape + (2,)), border_margin=config.poly_n)

    ref8 = np.clip(ref * 255.0, 0, 255).astype(np.uint8)
    cur8 = np.clip(cur * 255.0, 0, 255).astype(np.uint8)
    flow = cv2.calcOpticalFlowFarneback(
        ref8,
        cur8,
        None,
        pyr_scale=config.pyramid_scale,
        levels=config.pyramid_levels,
        winsize=config.window,
        iterations=config.iterations_per_level,
        poly_n=config.poly_n,
        poly_sigma=config.poly_sigma,
        flags=0,
    )
    return FlowField(np.asarray(flow, dtype=float), border_margin=config.poly_n)


def shear_displacement(flow: FlowField, mask: np.ndarray | None = None) -> ShearEstimate:
    """Sum the flow vectors into a single shear-displacement estimate.

    The sum runs over the field's interior (its border margin excluded) and,
    when given, only over pixels selected by `mask`. The direction is the
    normalized sum, or the zero vector when the magnitude is below eps.
    """
    vecs = flow.interior()
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != flow.vectors.shape[:2]:
            raise ValueError("mask dimensions do not match the flow field")
        b = flow.border_margin
        m = m[b:-b, b:-b] if b > 0 else m
        vecs = vecs[m]
    s = vecs.reshape(-1, 2).sum(axis=0)
    magnitude = float(np.linalg.norm(s))
    if magnitude > ZERO_DIRECTION_EPS:
        direction = s / magnitude
    else:
        direction = np.zeros(2)
    return ShearEstimate(raw_sum=s, direction=direction, magnitude=magnitude)


def torsion_decompose(flow: FlowField) -> dict:
    """Split the field into a mean translation and a rigid-rotation rate.

    The torsional component is the average of cross(r, v) / ||r||^2 about
    the image centroid, i.e. the angular rate (radians per frame) of the
    best single rotation explaining the residual field.
    """
    vecs = flow.interior().reshape(-1, 2)
    h, w = flow.interior().shape[:2]
    if vecs.size == 0:
        return {"tangential": np.zeros(2), "torsional": 0.0}
    tangential = vecs.mean(axis=0)

    ys, xs = np.mgrid[0:h, 0:w]
    rx = (xs - (w - 1) / 2.0).ravel()
    ry = (ys - (h - 1) / 2.0).ravel()
    r2 = rx * rx + ry * ry
    good = r2 > 1e-12
    resid = vecs - tangential
    cross = rx * resid[:, 1] - ry * resid[:, 0]
    torsional = float(np.mean(cross[good] / r2[good]))
    return {"tangential": tangential, "torsional": torsional}


class ReleaseMonitor:
    """Latching threshold monitor on the shear magnitude.

    Fires exactly once, on the first observation whose magnitude exceeds
    the effective threshold; setting a new reference re-arms it. The user
    threshold is scaled by the contact-patch pixel count captured at
    reference time, so the same setting tracks across patch sizes.
    """

    def __init__(self, threshold: float):
        if threshold <= 0:
            raise ValueError("release threshold must be positive")
        self.threshold = float(threshold)
        self._patch_pixels: int | None = None
        self._fired = False

    def set_reference(self, patch_pixels: int = 1) -> None:
        if patch_pixels < 1:
            raise ValueError("reference patch pixel count must be >= 1")
        self._patch_pixels = int(patch_pixels)
        self._fired = False

    @property
    def effective_threshold(self) -> float:
        if self._patch_pixels is None:
            raise NotInitializedError("release monitor has no reference")
        return self.threshold * self._patch_pixels

    @property
    def triggered(self) -> bool:
        return self._fired

    def observe(self, estimate: ShearEstimate) -> bool:
        """Feed one estimate; True exactly when this one first crosses."""
        if self._patch_pixels is None:
            raise NotInitializedError("release monitor has no reference")
        if self._fired:
            return False
        if estimate.magnitude > self.effective_threshold:
            self._fired = True
            return True
        return False

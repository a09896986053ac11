"""Synthetic two-finger bubble sensor.

Renders depth and patterned-IR images of a rigid object pressed between two
inward-facing short-range depth cameras, models membrane pressure, and
provides the stable-grasp predicate. The membrane is a geometric model, not
a mechanical one: each finger has a spherical-cap rest surface, and contact
replaces the rest surface with the object surface wherever the object lies
nearer to the camera, with a Gaussian-falloff skirt around the contact
silhouette. That is sufficient to exercise the perception stack; it makes
no claim of physical accuracy.

Frames: the tool frame T sits between the fingertips with y the closing
axis and z pointing along the fingers. Finger 0 ("left") is at -y with its
membrane facing +y; finger 1 is the same part rotated 180 degrees about z,
so the two membranes face each other and the rig is mirror-symmetric about
the y = 0 mid-plane (up to the in-image u-flip that parity forces on any
rigidly mounted camera pair). Each camera is tilted toward the fingertip
and its principal ray passes through the membrane apex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fields import ProximityField
from .geometry import RigidPose, rotation_z
from .tactile import (
    DEFAULT_RESOLUTION,
    INVALID_DEPTH,
    WORKING_RANGE,
    DepthImage,
    IrImage,
    PinholeModel,
    pixel_rays,
)

GRIPPER_WIDTH_RANGE = (0.0, 0.11)
MAX_TRACE_STEPS = 256
HIT_TOLERANCE = 1e-7
DEFAULT_PRESSURE_GAIN = 50.0  # kPa per normalized displaced volume


class NoContactError(RuntimeError):
    """The object touches neither membrane rest surface."""


class InfeasiblePatternError(RuntimeError):
    """The requested dot pattern cannot be packed without overlaps."""


@dataclass(frozen=True)
class GripperState:
    width: float
    finger_velocity: float = 0.0
    pressure: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (GRIPPER_WIDTH_RANGE[0] <= self.width <= GRIPPER_WIDTH_RANGE[1]):
            raise ValueError(f"gripper width {self.width} outside {GRIPPER_WIDTH_RANGE}")
        if any(p < 0 for p in self.pressure):
            raise ValueError("pressures must be >= 0")


@dataclass(frozen=True)
class DotPattern:
    density: float  # dots per mm^2
    min_diameter: float = 0.6  # mm
    max_diameter: float = 1.2  # mm
    randomness: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("dot density must be positive")
        if self.min_diameter > self.max_diameter or self.min_diameter <= 0:
            raise ValueError("need 0 < min_diameter <= max_diameter")
        if not (0.0 <= self.randomness <= 1.0):
            raise ValueError("randomness must lie in [0, 1]")


@dataclass(eq=False)
class CameraRig:
    """Two mirror-mounted finger cameras plus their membrane rest geometry."""

    intrinsics: PinholeModel
    resolution: tuple[int, int]  # (width, height)
    working_range: tuple[float, float]
    camera_in_finger: RigidPose
    rest_depth: np.ndarray  # (H, W) z-depth of the rest membrane, camera frame
    bubble_center: np.ndarray  # rest-sphere center in the camera frame
    bubble_radius: float
    blend_radius_px: float = 6.0

    def __post_init__(self):
        lo, hi = self.working_range
        if self.rest_depth.min() < lo or self.rest_depth.max() > hi:
            raise ValueError("rest membrane leaves the working range")

    def rest_image(self) -> DepthImage:
        return DepthImage(self.rest_depth.copy(), self.intrinsics)

    def finger_pose(self, width: float, finger: int) -> RigidPose:
        """Finger frame in T. Finger 0 at -y facing +y; finger 1 mirrored."""
        if not (GRIPPER_WIDTH_RANGE[0] <= width <= GRIPPER_WIDTH_RANGE[1]):
            raise ValueError(f"gripper width {width} outside {GRIPPER_WIDTH_RANGE}")
        if finger == 0:
            return RigidPose(np.array([0.0, -0.5 * width, 0.0]), np.array([1.0, 0, 0, 0]))
        if finger == 1:
            return RigidPose.from_matrix(rotation_z(np.pi), np.array([0.0, 0.5 * width, 0.0]))
        raise ValueError("finger index must be 0 or 1")

    def camera_pose(self, width: float, finger: int) -> RigidPose:
        """Camera frame in T for the given gripper width."""
        return self.finger_pose(width, finger).compose(self.camera_in_finger)


def default_rig(
    resolution: tuple[int, int] = DEFAULT_RESOLUTION,
    focal_px: float = 210.0,
    tilt_deg: float = 25.0,
    apex_depth: float = 0.055,
    bubble_radius: float = 0.12,
    working_range: tuple[float, float] = WORKING_RANGE,
    blend_radius_px: float = 6.0,
) -> CameraRig:
    """Build the default rig: angled cameras, spherical-cap rest membrane.

    The camera sits inside the finger, tilted `tilt_deg` from the membrane
    normal toward the fingertip, positioned so the membrane apex lies on
    the principal ray at `apex_depth`. The rest membrane is the far wall of
    a sphere of `bubble_radius` through that apex, which puts the apex at
    the maximum rest depth and lets contact only ever reduce depth.
    """
    w, h = resolution
    intr = PinholeModel(fx=focal_px, fy=focal_px, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0)

    tau = np.deg2rad(tilt_deg)
    # columns: camera x, y, z axes in the finger frame (x shared, z = optical
    # axis tilted from the +y membrane normal toward the +z fingertip)
    r_fc = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, np.sin(tau), np.cos(tau)],
            [0.0, -np.cos(tau), np.sin(tau)],
        ]
    )
    cam_pos = -apex_depth * r_fc[:, 2]
    camera_in_finger = RigidPose.from_matrix(r_fc, cam_pos)

    center = np.array([0.0, 0.0, apex_depth - bubble_radius])
    dirs = pixel_rays(intr, w, h)
    rest = _sphere_far_depth(dirs, center, bubble_radius)

    return CameraRig(
        intrinsics=intr,
        resolution=(w, h),
        working_range=working_range,
        camera_in_finger=camera_in_finger,
        rest_depth=rest,
        bubble_center=center,
        bubble_radius=bubble_radius,
        blend_radius_px=blend_radius_px,
    )


def _sphere_far_depth(dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """z-depth of the far ray-sphere intersection, for rays from the origin."""
    d = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    b = d @ center
    disc = b * b + radius * radius - center @ center
    if np.any(disc <= 0):
        raise ValueError("rest sphere does not cover the full field of view")
    t = b + np.sqrt(disc)
    return t * d[..., 2]


def _rng(seed: int, stream: int) -> np.random.Generator:
    # counter-style keying: one independent deterministic stream per
    # (seed, stream) pair regardless of evaluation order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(stream)))))


def _trace_object_depth(
    rig: CameraRig,
    finger: int,
    object_field: ProximityField,
    object_pose: RigidPose,
    width: float,
):
    """Sphere-trace the object from one finger camera.

    Returns (z_depth, exhausted): z_depth is +inf where the ray reaches the
    rest membrane without hitting the object, and exhausted flags rays that
    used all trace steps without resolving (marked invalid downstream).
    `object_pose` is the geometry frame expressed in T.
    """
    w, h = rig.resolution
    cam = rig.camera_pose(width, finger)
    to_geometry = object_pose.inverse().compose(cam)  # camera -> G

    dirs_cam = pixel_rays(rig.intrinsics, w, h).reshape(-1, 3)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    dz = dirs_cam[:, 2]
    origins = np.broadcast_to(to_geometry.translation, dirs_cam.shape)
    dirs = dirs_cam @ to_geometry.rotation_matrix().T

    # beyond the rest membrane the membrane itself is what the camera sees,
    # so each ray only needs tracing up to its rest-surface range
    t_max = rig.rest_depth.reshape(-1) / dz + 1e-4

    n = dirs.shape[0]
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    exhausted = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    start_vals = object_field.value(origins[0])
    if np.ndim(start_vals) == 0 and start_vals <= 0:
        # camera inside the object: nothing sensible to render
        return np.full((h, w), np.inf), np.ones((h, w), dtype=bool)

    for _ in range(MAX_TRACE_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p = origins[idx] + t[idx, None] * dirs[idx]
        phi = object_field.value(p)

        newly_hit = phi < HIT_TOLERANCE
        hit[idx[newly_hit]] = True
        active[idx[newly_hit]] = False

        adv = ~newly_hit
        t[idx[adv]] += phi[adv]
        passed = t[idx] > t_max[idx]
        active[idx[passed]] = False
    exhausted[active] = True

    if np.any(hit):
        # Newton polish along the ray so hit points sit on the zero level set
        idx = np.flatnonzero(hit)
        for _ in range(3):
            p = origins[idx] + t[idx, None] * dirs[idx]
            phi, grad = object_field.evaluate(p)
            slope = np.einsum("ij,ij->i", grad, dirs[idx])
            safe = np.abs(slope) > 1e-3
            t[idx[safe]] -= phi[safe] / slope[safe]

    z = np.where(hit, t * dz, np.inf)
    return z.reshape(h, w), exhausted.reshape(h, w)


def _compose_depth(
    rig: CameraRig,
    finger: int,
    obj_z: np.ndarray | None,
    exhausted: np.ndarray | None,
    noise_sigma: float,
    seed: int,
) -> DepthImage:
    """Drape the membrane over a traced object depth and add sensor noise."""
    w, h = rig.resolution
    rest = rig.rest_depth

    if obj_z is None:
        depth = rest.copy()
        exhausted = np.zeros((h, w), dtype=bool)
    else:
        contact = obj_z < rest
        displacement = np.where(contact, rest - obj_z, 0.0)
        skirt = ndimage.gaussian_filter(displacement, sigma=rig.blend_radius_px / 2.0)
        depth = np.where(contact, obj_z, rest - skirt)

    if noise_sigma > 0:
        depth = depth + noise_sigma * _rng(seed, finger).standard_normal((h, w))

    lo, hi = rig.working_range
    depth = np.where((depth < lo) | (depth > hi) | exhausted, INVALID_DEPTH, depth)
    return DepthImage(depth, rig.intrinsics)


def render_depth(
    rig: CameraRig,
    finger: int,
    object_field: ProximityField | None,
    object_pose: RigidPose | None,
    state: GripperState,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> DepthImage:
    """Render one finger's depth image.

    With no object (`object_field` None) this is the rest membrane plus
    noise. Otherwise the object is sphere-traced and the membrane drapes
    over it: contact pixels take the exact object depth, and a Gaussian
    skirt (sigma = blend_radius/2) eases the surrounding membrane toward
    the silhouette. Depths outside the working range become the invalid
    sentinel. Deterministic per (inputs, seed).
    """
    if object_field is None:
        return _compose_depth(rig, finger, None, None, noise_sigma, seed)
    if object_pose is None:
        raise ValueError("object_pose required when an object field is given")
    obj_z, exhausted = _trace_object_depth(rig, finger, object_field, object_pose, state.width)
    return _compose_depth(rig, finger, obj_z, exhausted, noise_sigma, seed)


def contact_mask(
    rig: CameraRig,
    finger: int,
    object_field: ProximityField,
    object_pose: RigidPose,
    state: GripperState,
) -> np.ndarray:
    """Ground-truth indented pixels (object in front of the rest membrane)."""
    obj_z, _ = _trace_object_depth(rig, finger, object_field, object_pose, state.width)
    return obj_z < rig.rest_depth


def render_ir(rig: CameraRig, finger: int, pattern_image: IrImage, displacement_field) -> IrImage:
    """Warp the printed pattern by a pixel displacement field.

    Inverse bilinear warp: output(x) = pattern(x - displacement(x)), with
    clamped borders, so a later flow estimate between pattern and output
    recovers the displacement. Zero displacement reproduces the pattern
    exactly.
    """
    w, h = rig.resolution
    img = pattern_image.data
    if img.shape != (h, w):
        raise ValueError("pattern dimensions do not match the sensor resolution")
    disp = np.asarray(displacement_field, dtype=float)
    if disp.shape != (h, w, 2):
        raise ValueError("displacement field must have shape (H, W, 2)")

    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    sx = np.clip(xs - disp[..., 0], 0.0, w - 1.0)
    sy = np.clip(ys - disp[..., 1], 0.0, h - 1.0)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    return IrImage(out)


def pattern_layout(pattern: DotPattern, resolution: tuple[int, int], mm_per_pixel: float):
    """Dot centers (px) and radii (px) for a pattern specification.

    Dots start from a uniform grid at the requested density; `randomness`
    blends each center toward an independent uniform position (0 = exact
    grid, 1 = fully uniform). Placement is rejection-sampled so dots never
    overlap; packing that cannot fit raises InfeasiblePatternError.
    """
    w, h = resolution
    width_mm = w * mm_per_pixel
    height_mm = h * mm_per_pixel
    area = width_mm * height_mm
    count = int(round(pattern.density * area))
    if count < 1:
        raise InfeasiblePatternError("pattern density yields zero dots")

    lo, hi = pattern.min_diameter, pattern.max_diameter
    mean_dot_area = np.pi * (lo * lo + lo * hi + hi * hi) / 12.0
    if count * mean_dot_area > 0.6 * area:
        raise InfeasiblePatternError(
            f"requested dot area covers {count * mean_dot_area / area:.0%} of the surface"
        )

    rng = _rng(pattern.seed, 0)
    pitch = 1.0 / np.sqrt(pattern.density)  # mm between grid nodes
    nx = int(np.ceil(width_mm / pitch))
    ny = int(np.ceil(height_mm / pitch))
    gx, gy = np.meshgrid(
        (np.arange(nx) + 0.5) * width_mm / nx, (np.arange(ny) + 0.5) * height_mm / ny
    )
    nodes = np.stack([gx.ravel(), gy.ravel()], axis=1)
    order = rng.permutation(len(nodes))[:count]
    grid_centers = nodes[order]

    diameters = rng.uniform(lo, hi, size=count)
    centers = np.empty((count, 2))
    r = pattern.randomness
    margin = 0.5 * diameters
    for i in range(count):
        for _ in range(500):
            uniform = rng.uniform([margin[i], margin[i]], [width_mm - margin[i], height_mm - margin[i]])
            cand = (1.0 - r) * grid_centers[i] + r * uniform
            if i == 0:
                break
            gap = np.linalg.norm(centers[:i] - cand, axis=1) - 0.5 * (diameters[:i] + diameters[i])
            if np.all(gap > 0):
                break
            if r == 0.0:
                raise InfeasiblePatternError("grid pitch too tight for the dot diameters")
        else:
            raise InfeasiblePatternError("rejection sampling could not place all dots")
        centers[i] = cand

    return centers / mm_per_pixel, 0.5 * diameters / mm_per_pixel


def generate_pattern(
    pattern: DotPattern,
    resolution: tuple[int, int] = DEFAULT_RESOLUTION,
    mm_per_pixel: float = 0.26,
    background: float = 0.9,
    dot_intensity: float = 0.15,
) -> IrImage:
    """Rasterize a pseudorandom dot pattern with ~1 px antialiased edges."""
    w, h = resolution
    centers, radii = pattern_layout(pattern, resolution, mm_per_pixel)
    img = np.full((h, w), background)
    for (cx, cy), rad in zip(centers, radii):
        x0 = max(int(np.floor(cx - rad - 2)), 0)
        x1 = min(int(np.ceil(cx + rad + 2)), w - 1)
        y0 = max(int(np.floor(cy - rad - 2)), 0)
        y1 = min(int(np.ceil(cy + rad + 2)), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        dist = np.hypot(xs - cx, ys - cy)
        coverage = np.clip(rad - dist + 0.5, 0.0, 1.0)
        patch = img[y0 : y1 + 1, x0 : x1 + 1]
        img[y0 : y1 + 1, x0 : x1 + 1] = patch + coverage * (dot_intensity - patch)
    return IrImage(np.clip(img, 0.0, 1.0))


def displaced_volume(rest_depth: np.ndarray, object_depth: np.ndarray, intrinsics: PinholeModel) -> float:
    """Volume between the rest membrane and the object where it indents.

    Integrates indentation depth times the pixel footprint at the rest
    surface (rest_z^2 / (fx fy) per pixel).
    """
    indent = np.maximum(rest_depth - object_depth, 0.0)
    pixel_area = rest_depth * rest_depth / (intrinsics.fx * intrinsics.fy)
    return float(np.sum(indent * pixel_area))


def simulate_pressure(
    rig: CameraRig,
    finger: int,
    object_field: ProximityField | None,
    object_pose: RigidPose | None,
    state: GripperState,
    gain: float = DEFAULT_PRESSURE_GAIN,
) -> float:
    """Membrane pressure rise (kPa) as gain times the displaced volume."""
    if object_field is None:
        return 0.0
    obj_z, _ = _trace_object_depth(rig, finger, object_field, object_pose, state.width)
    return gain * displaced_volume(rig.rest_depth, obj_z, rig.intrinsics)


def stable_grasp(state: GripperState, pressure_threshold: float, velocity_threshold: float) -> bool:
    """True when both membranes are pressurized and the fingers have settled."""
    if pressure_threshold <= 0 or velocity_threshold <= 0:
        raise ValueError("thresholds must be positive")
    return min(state.pressure) > pressure_threshold and abs(state.finger_velocity) < velocity_threshold


def synthesize_grasp_scene(
    rig: CameraRig,
    object_field: ProximityField,
    object_pose: RigidPose,
    state: GripperState,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> dict:
    """Render both fingers of a grasp and return the pose-estimation truth.

    `object_pose` places the geometry frame in T; `truth` is its inverse,
    the transform the pose estimator recovers (tool frame seen from the
    geometry frame). Raises NoContactError when the object indents neither
    membrane. Deterministic per seed.
    """
    traces = [_trace_object_depth(rig, f, object_field, object_pose, state.width) for f in (0, 1)]
    counts = [int((obj_z < rig.rest_depth).sum()) for obj_z, _ in traces]
    if not any(counts):
        raise NoContactError("object does not reach either membrane")
    left = _compose_depth(rig, 0, traces[0][0], traces[0][1], noise_sigma, seed)
    right = _compose_depth(rig, 1, traces[1][0], traces[1][1], noise_sigma, seed)
    return {
        "left": left,
        "right": right,
        "truth": object_pose.inverse(),
        "contact_pixels": (counts[0], counts[1]),
    }

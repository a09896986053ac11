"""In-hand pose estimation as nonlinear least squares over SE(3).

The estimate is the transform from the tool frame T (where the measured
cloud lives) into the object's geometry frame G: the cost is the sum of
squared field values of the transformed points, which vanishes exactly when
every point lies on the object surface. The 7-vector parameterization is
translation plus quaternion; rotations use the norm-invariant quaternion
form, so the cost is smooth in the raw parameters, the analytic gradient is
finite-difference checkable, and the unit constraint is enforced by
renormalizing after each step (the pre-normalization defect is kept below
1e-3 by limiting the step).

The solver is damped Gauss-Newton: it only ever accepts cost-decreasing
steps, so the returned cost never exceeds the seed's, and it reports the
first-order optimality norm it stopped at. `converged` is only set when
that norm is below FIRST_ORDER_TOL (or the machine-level gradient floor),
never merely because iterations ran out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ProximityField, eval_field_batch
from .geometry import PointCloud, RigidPose, quat_geodesic_angle, rotation_x, rotation_y

FIRST_ORDER_TOL = 1e-4
GRAD_FLOOR = 1e-10
QUAT_STEP_VIOLATION = 1e-3
MAX_DAMPING = 1e10


class EmptyCloudError(ValueError):
    """Pose estimation needs at least one point."""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    cost_tolerance: float = 1e-10  # absolute cost decrease, m^2
    step_tolerance: float = 1e-8
    damping_init: float = 1e-4
    robust_loss_scale: float = 0.0  # meters; 0 disables Huber weighting

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.cost_tolerance, self.step_tolerance, self.damping_init) <= 0:
            raise ValueError("tolerances and damping must be positive")
        if self.robust_loss_scale < 0:
            raise ValueError("robust_loss_scale must be >= 0")


@dataclass(frozen=True)
class EstimateResult:
    pose: RigidPose
    final_cost: float
    iterations: int
    converged: bool
    residual_rms: float
    first_order_norm: float


def _cloud_points(cloud: PointCloud) -> np.ndarray:
    pts = cloud.points
    if len(pts) == 0:
        raise EmptyCloudError("point cloud is empty")
    return pts


def pose_cost(field: ProximityField, theta: RigidPose, cloud: PointCloud) -> float:
    """Sum of squared field values of the cloud mapped into the geometry frame."""
    pts = _cloud_points(cloud)
    values, _ = eval_field_batch(field, theta.transform_points(pts))
    return float(np.dot(values, values))


def _rotation_derivative(quat: np.ndarray, pts: np.ndarray, rotated: np.ndarray) -> np.ndarray:
    """d(R(q) p)/dq for the norm-invariant rotation, as (N, 3, 4).

    Valid at unit quaternions; the derivative of the normalization shows up
    as the -2 q_k (R p) terms, which make the result tangent to the unit
    sphere (the cost is scale-invariant in q).
    """
    w, v = quat[0], quat[1:]
    n = pts.shape[0]
    d = np.empty((n, 3, 4))
    d[:, :, 0] = 2.0 * w * pts + 2.0 * np.cross(v, pts) - 2.0 * w * rotated
    vdotp = pts @ v
    for j in range(3):
        ej_cross = np.cross(np.eye(3)[j], pts)
        d[:, :, j + 1] = (
            -2.0 * v[j] * pts
            + 2.0 * pts[:, j, None] * v
            + 2.0 * w * ej_cross
            - 2.0 * v[j] * rotated
        )
        d[:, j, j + 1] += 2.0 * vdotp
    return d


def _residuals_and_jacobian(field: ProximityField, theta: RigidPose, pts: np.ndarray):
    """Field residuals phi(R p + t) and their (N, 7) Jacobian in theta."""
    rotated = pts @ theta.rotation_matrix().T
    mapped = rotated + theta.translation
    values, grads = eval_field_batch(field, mapped)
    jac = np.empty((pts.shape[0], 7))
    jac[:, :3] = grads
    jac[:, 3:] = np.einsum("ni,nik->nk", grads, _rotation_derivative(theta.quaternion, pts, rotated))
    return values, jac


def pose_cost_gradient(field: ProximityField, theta: RigidPose, cloud: PointCloud) -> np.ndarray:
    """Exact 7-vector gradient of pose_cost; matches central finite differences."""
    pts = _cloud_points(cloud)
    r, jac = _residuals_and_jacobian(field, theta, pts)
    return 2.0 * (jac.T @ r)


def _huber_weights(residuals: np.ndarray, scale: float) -> np.ndarray:
    a = np.abs(residuals)
    return np.where(a <= scale, 1.0, scale / np.maximum(a, 1e-300))


def _robust_cost(residuals: np.ndarray, scale: float) -> float:
    if scale <= 0:
        return float(np.dot(residuals, residuals))
    a = np.abs(residuals)
    quad = a <= scale
    return float(np.sum(np.where(quad, a * a, 2.0 * scale * a - scale * scale)))


def _limit_step(theta: RigidPose, delta: np.ndarray) -> np.ndarray:
    """Scale the step so the quaternion unit-norm defect stays below 1e-3."""
    q = theta.quaternion
    scale = 1.0
    for _ in range(60):
        defect = abs(np.linalg.norm(q + scale * delta[3:]) - 1.0)
        if defect <= QUAT_STEP_VIOLATION:
            break
        scale *= 0.5
    return scale * delta


def estimate_pose(
    field: ProximityField,
    cloud: PointCloud,
    seed: RigidPose,
    config: SolverConfig = SolverConfig(),
    callback=None,
) -> EstimateResult:
    """Damped Gauss-Newton fit of the cloud to the field's zero level set.

    Deterministic given identical inputs. Only cost-decreasing steps are
    accepted, so under the default quadratic loss final_cost never exceeds
    the seed's cost (with Huber weighting enabled the monotone objective is
    the robust one; final_cost still reports the plain sum of squares).
    Non-convergence within the iteration budget is reported via
    `converged`, not raised. `callback(iteration, cost, pose)`, when given,
    fires after every accepted step.
    """
    pts = _cloud_points(cloud)
    theta = seed
    scale = config.robust_loss_scale

    def effective(res, jacobian):
        if scale <= 0:
            return res, jacobian
        w = np.sqrt(_huber_weights(res, scale))
        return res * w, jacobian * w[:, None]

    r, jac = _residuals_and_jacobian(field, theta, pts)
    cost = _robust_cost(r, scale)
    damping = config.damping_init
    iterations = 0
    converged = False
    last_improvement = np.inf
    last_step = np.inf
    identity = np.eye(7)

    for _ in range(config.max_iterations):
        r_eff, jac_eff = effective(r, jac)
        first_order = float(np.abs(2.0 * (jac_eff.T @ r_eff)).max())
        if first_order < GRAD_FLOOR:
            converged = True
            break
        if (
            first_order < FIRST_ORDER_TOL
            and last_improvement < config.cost_tolerance
            and last_step < config.step_tolerance
        ):
            converged = True
            break

        jtj = jac_eff.T @ jac_eff
        jtr = jac_eff.T @ r_eff
        accepted = False
        while damping <= MAX_DAMPING:
            try:
                delta = np.linalg.solve(jtj + damping * identity, -jtr)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            delta = _limit_step(theta, delta)
            candidate = RigidPose(theta.translation + delta[:3], theta.quaternion + delta[3:])
            r_new, jac_new = _residuals_and_jacobian(field, candidate, pts)
            cost_new = _robust_cost(r_new, scale)
            if cost_new < cost:
                last_improvement = cost - cost_new
                last_step = float(np.linalg.norm(delta))
                theta, r, jac, cost = candidate, r_new, jac_new, cost_new
                damping = max(damping / 3.0, 1e-12)
                iterations += 1
                accepted = True
                if callback is not None:
                    callback(iterations, cost, theta)
                break
            damping *= 10.0

        if not accepted:
            # no descent direction at any damping: numerically stationary
            converged = first_order < FIRST_ORDER_TOL
            break

    r_eff, jac_eff = effective(r, jac)
    first_order = float(np.abs(2.0 * (jac_eff.T @ r_eff)).max())
    converged = converged and first_order < FIRST_ORDER_TOL
    return EstimateResult(
        pose=theta,
        final_cost=float(np.dot(r, r)),
        iterations=iterations,
        converged=converged,
        residual_rms=float(np.sqrt(np.mean(r * r))),
        first_order_norm=first_order,
    )


def cardinal_seed_poses(cloud: PointCloud) -> list[RigidPose]:
    """Six axis-aligned orientations placing the object at the cloud centroid.

    The fallback seeding when no prior pose exists: the object frame is set
    at the centroid with its z axis along each of the six tool-frame
    cardinal directions, and each candidate is expressed as the tool-in-
    geometry transform the estimator optimizes.
    """
    c = cloud.centroid
    half = np.pi / 2.0
    rotations = [
        np.eye(3),
        rotation_x(half),
        rotation_x(-half),
        rotation_y(half),
        rotation_y(-half),
        rotation_x(np.pi),
    ]
    return [RigidPose.from_matrix(r.T, -r.T @ c) for r in rotations]


def estimate_pose_cardinal(
    field: ProximityField, cloud: PointCloud, config: SolverConfig = SolverConfig()
) -> EstimateResult:
    """Run the estimator from every cardinal seed and keep the lowest cost."""
    best: EstimateResult | None = None
    for seed in cardinal_seed_poses(cloud):
        result = estimate_pose(field, cloud, seed, config)
        if best is None or result.final_cost < best.final_cost:
            best = result
    return best


def concatenate_grasp_cloud(
    cloud_left: PointCloud,
    cloud_right: PointCloud,
    gripper_width: float,
    finger_geometry,
) -> PointCloud:
    """Merge the per-finger camera clouds into one tool-frame cloud.

    Each cloud is pushed through its finger-mounted camera extrinsics at
    the measured gripper width; point count and order (left block first)
    are preserved.
    """
    if not (0.0 <= gripper_width <= 0.11):
        raise ValueError(f"gripper width {gripper_width} outside mechanical limits [0, 0.11]")
    blocks = []
    for finger, cloud in ((0, cloud_left), (1, cloud_right)):
        if len(cloud) == 0:
            continue
        cam = finger_geometry.camera_pose(gripper_width, finger)
        blocks.append(cam.transform_points(cloud.points))
    if not blocks:
        return PointCloud(np.zeros((0, 3)), frame="T")
    return PointCloud(np.vstack(blocks), frame="T")


def pose_error(estimate: RigidPose, truth: RigidPose, symmetry_axis=None) -> dict:
    """Translation and rotation error, optionally modulo an axis symmetry.

    With a symmetry axis (unit vector in the geometry frame), poses that
    differ only by a rotation about that axis compare as identical: the
    translation error is the distance between the object origins expressed
    in the tool frame, and the rotation error is the angle between the
    object axes in the tool frame. The axes compare as unsigned lines,
    because an axisymmetric solid is also mapped to itself by a half-turn
    about any diameter, which reverses the axis vector. Without symmetry
    the errors are the plain origin distance and the full geodesic angle.
    """
    if symmetry_axis is None:
        return {
            "translation_error": float(np.linalg.norm(estimate.translation - truth.translation)),
            "axis_angle_error": quat_geodesic_angle(estimate.quaternion, truth.quaternion),
        }
    axis = np.asarray(symmetry_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    inv_e, inv_t = estimate.inverse(), truth.inverse()
    t_err = float(np.linalg.norm(inv_e.translation - inv_t.translation))
    a_e = estimate.rotation_matrix().T @ axis
    a_t = truth.rotation_matrix().T @ axis
    angle = float(np.arccos(np.clip(abs(np.dot(a_e, a_t)), 0.0, 1.0)))
    return {"translation_error": t_err, "axis_angle_error": angle}

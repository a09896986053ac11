"""Tactile perception stack for air-filled visuotactile gripper fingers.

Four capabilities built on depth and IR images from two finger-mounted
short-range cameras:

  - analytic distance fields with exact exterior gradients (`fields`),
  - in-hand pose estimation by nonlinear least squares on those fields
    (`pose`),
  - contact-patch extraction from depth differences (`tactile`),
  - shear-displacement tracking by dense optical flow (`shear`),

plus a synthetic two-finger sensor (`sim`) that exercises the whole stack
end to end, file formats (`io`), and a CLI (`bubbletact ...`).
"""

from .fields import (
    Box,
    Cylinder,
    FieldSample,
    InvalidFieldError,
    ProximityField,
    Sphere,
    Transformed,
    Union,
    box_distance,
    cylinder_distance,
    eval_field,
    eval_field_batch,
    sphere_distance,
)
from .geometry import PointCloud, RigidPose
from .pose import (
    EmptyCloudError,
    EstimateResult,
    SolverConfig,
    cardinal_seed_poses,
    concatenate_grasp_cloud,
    estimate_pose,
    estimate_pose_cardinal,
    pose_cost,
    pose_cost_gradient,
    pose_error,
)
from .shear import (
    FlowConfig,
    FlowField,
    NotInitializedError,
    ReleaseMonitor,
    ShearEstimate,
    dense_flow,
    shear_displacement,
    torsion_decompose,
)
from .sim import (
    CameraRig,
    DotPattern,
    GripperState,
    InfeasiblePatternError,
    NoContactError,
    default_rig,
    generate_pattern,
    render_depth,
    render_ir,
    simulate_pressure,
    stable_grasp,
    synthesize_grasp_scene,
)
from .tactile import (
    ContactPatchMask,
    DepthImage,
    IrImage,
    PinholeModel,
    crop_to_patch,
    deproject,
    difference_mask,
    morphological_clean,
)

__version__ = "0.1.0"

"""Convergence-basin benchmark: seeded trials, CSV records, verifiable aggregates.

Each trial renders a randomized synthetic cylinder grasp, perturbs the
ground-truth pose by pitch/roll offsets drawn from a grid, runs the
estimator, and scores the result modulo the cylinder's yaw symmetry.
Per-trial randomness derives from (root_seed, trial index) only, so the
records are identical for any worker-pool size; wall-clock columns are the
one exception, being measured times.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from .fields import Cylinder, ProximityField
from .geometry import PointCloud, RigidPose, quat_from_axis_angle
from .pose import SolverConfig, concatenate_grasp_cloud, estimate_pose, pose_error
from .sim import GripperState, default_rig, synthesize_grasp_scene, _compose_depth
from .tactile import crop_to_patch, difference_mask, morphological_clean

CSV_COLUMNS = (
    "trial",
    "offset_pitch_deg",
    "offset_roll_deg",
    "converged",
    "trans_err_m",
    "rot_err_rad",
    "iters",
    "wall_s",
)

SUCCESS_TRANS_M = 0.005
SUCCESS_ROT_RAD = np.deg2rad(5.0)


@dataclass(frozen=True)
class BasinBenchSpec:
    """Benchmark configuration.

    The default grasp is a short cylinder placed so both rim circles fall
    inside the tactile patch: with contact only on the side wall the axial
    coordinate is unobservable (sliding along the axis is cost-free), so
    no estimator could meet a translation criterion there. The rims make
    the pose fully observable up to yaw.
    """

    trials: int = 100
    offset_max_deg: float = 30.0
    offset_grid_steps: int = 13
    noise_sigma: float = 0.0
    root_seed: int = 0
    cylinder_radius: float = 0.04
    cylinder_height: float = 0.024
    object_center_z: float = -0.008  # centers the object in the patch window
    gripper_width: float = 0.07
    diff_threshold: float = 0.002
    open_radius: int = 1
    max_points: int = 4000
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")


@dataclass
class TrialRecord:
    trial: int
    offset_pitch_deg: float
    offset_roll_deg: float
    converged: bool
    trans_err_m: float
    rot_err_rad: float
    iters: int
    wall_s: float

    @property
    def success(self) -> bool:
        return self.trans_err_m < SUCCESS_TRANS_M and self.rot_err_rad < SUCCESS_ROT_RAD


def run_trial(spec: BasinBenchSpec, trial: int) -> TrialRecord:
    """One seeded benchmark trial; deterministic apart from wall_s."""
    start = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((spec.root_seed, trial))))
    rig = default_rig()
    object_field = ProximityField(Cylinder(spec.cylinder_radius, spec.cylinder_height))

    # randomized grasp: yaw spin (unobservable), small in-plane jitter and tilt
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    tilt_dir = rng.uniform(0.0, 2.0 * np.pi)
    tilt = np.deg2rad(rng.uniform(0.0, 3.0))
    jitter = np.array(
        [rng.uniform(-0.004, 0.004), 0.0, spec.object_center_z + rng.uniform(-0.001, 0.001)]
    )
    object_pose = RigidPose.from_axis_angle(
        [np.cos(tilt_dir), np.sin(tilt_dir), 0.0], tilt, jitter
    ).compose(RigidPose.from_axis_angle([0.0, 0.0, 1.0], yaw))
    state = GripperState(width=spec.gripper_width)
    scene_seed = int(rng.integers(0, 2**31))
    scene = synthesize_grasp_scene(rig, object_field, object_pose, state, spec.noise_sigma, scene_seed)

    refs = [
        _compose_depth(rig, f, None, None, spec.noise_sigma, scene_seed + 1) for f in (0, 1)
    ]
    clouds = []
    for img, ref, f in ((scene["left"], refs[0], 0), (scene["right"], refs[1], 1)):
        mask = morphological_clean(difference_mask(img, ref, spec.diff_threshold), spec.open_radius)
        clouds.append(crop_to_patch(img, mask))
    cloud = concatenate_grasp_cloud(clouds[0], clouds[1], spec.gripper_width, rig)
    if len(cloud) > spec.max_points:
        keep = rng.choice(len(cloud), size=spec.max_points, replace=False)
        cloud = PointCloud(cloud.points[np.sort(keep)], frame="T")

    grid = np.linspace(-spec.offset_max_deg, spec.offset_max_deg, spec.offset_grid_steps)
    pitch = float(rng.choice(grid))
    roll = float(rng.choice(grid))
    truth = scene["truth"]
    seed_pose = _offset_seed(truth, pitch, roll)

    result = estimate_pose(object_field, cloud, seed_pose, spec.solver)
    err = pose_error(result.pose, truth, symmetry_axis=[0.0, 0.0, 1.0])
    return TrialRecord(
        trial=trial,
        offset_pitch_deg=pitch,
        offset_roll_deg=roll,
        converged=result.converged,
        trans_err_m=err["translation_error"],
        rot_err_rad=err["axis_angle_error"],
        iters=result.iterations,
        # rounded to the CSV precision so aggregates recompute exactly
        wall_s=round(time.perf_counter() - start, 6),
    )


def _offset_seed(truth: RigidPose, pitch_deg: float, roll_deg: float) -> RigidPose:
    """Perturb the guessed object orientation about its own position in T."""
    object_in_tool = truth.inverse()
    q = quat_from_axis_angle([0.0, 1.0, 0.0], np.deg2rad(pitch_deg))
    q = np.array(q)
    offset = RigidPose(np.zeros(3), q).compose(
        RigidPose(np.zeros(3), quat_from_axis_angle([1.0, 0.0, 0.0], np.deg2rad(roll_deg)))
    )
    c = object_in_tool.translation
    rotated = RigidPose(c - offset.rotation_matrix() @ c, offset.quaternion).compose(object_in_tool)
    return rotated.inverse()


def _trial_star(args) -> TrialRecord:
    return run_trial(*args)


def run_basin_bench(spec: BasinBenchSpec, workers: int = 1) -> list[TrialRecord]:
    """All trials, optionally across a process pool; order is by trial index."""
    jobs = [(spec, t) for t in range(spec.trials)]
    if workers <= 1:
        return [run_trial(spec, t) for t in range(spec.trials)]
    with multiprocessing.Pool(workers) as pool:
        return pool.map(_trial_star, jobs)


def aggregate(records: list[TrialRecord]) -> dict:
    succ = [r.success for r in records]
    return {
        "trials": len(records),
        "success_rate": float(np.mean(succ)),
        "success_trans_threshold_m": SUCCESS_TRANS_M,
        "success_rot_threshold_rad": float(SUCCESS_ROT_RAD),
        "median_trans_err_m": float(np.median([r.trans_err_m for r in records])),
        "median_rot_err_rad": float(np.median([r.rot_err_rad for r in records])),
        "median_iters": float(np.median([r.iters for r in records])),
        "converged_rate": float(np.mean([r.converged for r in records])),
        "total_wall_s": float(sum(r.wall_s for r in records)),
    }


def write_report(out_dir, records: list[TrialRecord], extra_meta: dict | None = None) -> None:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "bench.csv").open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.trial,
                    f"{r.offset_pitch_deg:.10g}",
                    f"{r.offset_roll_deg:.10g}",
                    int(r.converged),
                    f"{r.trans_err_m:.12e}",
                    f"{r.rot_err_rad:.12e}",
                    r.iters,
                    f"{r.wall_s:.6f}",
                ]
            )
    agg = aggregate(records)
    if extra_meta:
        agg = {**agg, **extra_meta}
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")


def read_records(csv_path) -> list[TrialRecord]:
    records = []
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{csv_path}: unexpected CSV columns {reader.fieldnames}")
        for row in reader:
            records.append(
                TrialRecord(
                    trial=int(row["trial"]),
                    offset_pitch_deg=float(row["offset_pitch_deg"]),
                    offset_roll_deg=float(row["offset_roll_deg"]),
                    converged=bool(int(row["converged"])),
                    trans_err_m=float(row["trans_err_m"]),
                    rot_err_rad=float(row["rot_err_rad"]),
                    iters=int(row["iters"]),
                    wall_s=float(row["wall_s"]),
                )
            )
    return records


def verify_report(report_dir) -> tuple[bool, dict]:
    """Recompute the aggregates from the per-trial CSV and diff against the JSON."""
    from pathlib import Path

    report = Path(report_dir)
    records = read_records(report / "bench.csv")
    stored = json.loads((report / "aggregate.json").read_text())
    recomputed = aggregate(records)
    mismatches = {}
    for key, value in recomputed.items():
        if key not in stored:
            mismatches[key] = ("missing", value)
        elif isinstance(value, float):
            if not np.isclose(stored[key], value, rtol=1e-9, atol=1e-12):
                mismatches[key] = (stored[key], value)
        elif stored[key] != value:
            mismatches[key] = (stored[key], value)
    return (not mismatches), mismatches

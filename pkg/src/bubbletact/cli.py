"""Command-line harness tying the stack together.

Subcommands: simulate, estimate, basin-bench, shear-demo, field-slice,
verify-report. Flags override config-file keys, which override defaults;
every command echoes its effective configuration into the output directory
so runs are reproducible. Exit codes: 0 success, 1 usage/input error,
2 no-contact scene, 3 empty contact patch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as bio
from .bench import BasinBenchSpec, run_basin_bench, verify_report, write_report
from .geometry import RigidPose
from .pose import (
    SolverConfig,
    concatenate_grasp_cloud,
    estimate_pose,
    estimate_pose_cardinal,
)
from .shear import FlowConfig, ReleaseMonitor, dense_flow, shear_displacement
from .sim import (
    DotPattern,
    GripperState,
    NoContactError,
    default_rig,
    generate_pattern,
    render_ir,
    synthesize_grasp_scene,
    _compose_depth,
)
from .tactile import crop_to_patch, difference_mask, morphological_clean

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONTACT = 2
EXIT_EMPTY_PATCH = 3


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; argparse's default 2 is reserved for no-contact scenes
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fail(message: str, code: int = EXIT_USAGE) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config-file keys < explicitly passed flags."""
    effective = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        for key, value in bio.parse_key_values(path.read_text()).items():
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r}")
            effective[key] = type(defaults[key])(value) if defaults[key] is not None else value
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            effective[key] = flag
    return effective


def _write_metadata(out_dir: Path, command: str, effective: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"command": command, **{k: _jsonable(v) for k, v in effective.items()}}
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (Path, RigidPose)):
        return str(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    scene_path = Path(args.scene)
    if not scene_path.exists():
        return _fail(f"scene file not found: {scene_path}")
    try:
        scene = bio.read_scene_description(scene_path)
    except ValueError as e:
        return _fail(str(e))
    if not Path(scene["field_path"]).exists():
        return _fail(f"field file not found: {scene['field_path']}")

    effective = {
        "scene": str(scene_path),
        "field": str(scene["field_path"]),
        "gripper_width": scene["gripper_width"],
        "noise_sigma": args.noise_sigma if args.noise_sigma is not None else scene["noise_sigma"],
        "seed": args.seed if args.seed is not None else scene["seed"],
        "pattern_density": scene["pattern_density"],
        "pattern_min_diameter": scene["pattern_min_diameter"],
        "pattern_max_diameter": scene["pattern_max_diameter"],
        "pattern_randomness": scene["pattern_randomness"],
    }
    out = Path(args.out)
    field = bio.read_field_description(scene["field_path"])
    rig = default_rig()
    state = GripperState(width=effective["gripper_width"])
    seed = int(effective["seed"])
    sigma = float(effective["noise_sigma"])

    try:
        rendered = synthesize_grasp_scene(rig, field, scene["object_pose"], state, sigma, seed)
    except NoContactError as e:
        print(f"no-contact scene: {e}", file=sys.stderr)
        return EXIT_NO_CONTACT

    out.mkdir(parents=True, exist_ok=True)
    refs = [_compose_depth(rig, f, None, None, sigma, seed + 1) for f in (0, 1)]
    bio.write_depth_image(out / "left.bdi", rendered["left"])
    bio.write_depth_image(out / "right.bdi", rendered["right"])
    bio.write_depth_image(out / "ref_left.bdi", refs[0])
    bio.write_depth_image(out / "ref_right.bdi", refs[1])
    bio.write_pose(out / "truth.pose", rendered["truth"])

    clouds = []
    for img, ref in ((rendered["left"], refs[0]), (rendered["right"], refs[1])):
        mask = morphological_clean(difference_mask(img, ref, args.threshold))
        clouds.append(crop_to_patch(img, mask))
    patch = concatenate_grasp_cloud(clouds[0], clouds[1], state.width, rig)
    bio.write_point_cloud(out / "patch.bpc", patch)

    pattern = DotPattern(
        density=effective["pattern_density"],
        min_diameter=effective["pattern_min_diameter"],
        max_diameter=effective["pattern_max_diameter"],
        randomness=effective["pattern_randomness"],
        seed=seed,
    )
    for finger, name in ((0, "ir_left.bir"), (1, "ir_right.bir")):
        pat = generate_pattern(
            DotPattern(
                pattern.density,
                pattern.min_diameter,
                pattern.max_diameter,
                pattern.randomness,
                seed + finger,
            ),
            rig.resolution,
        )
        bio.write_ir_image(out / name, pat)

    _write_metadata(out, "simulate", {**effective, "contact_pixels": rendered["contact_pixels"]})
    print(f"wrote scene to {out} (contact pixels: {rendered['contact_pixels']})")
    return EXIT_OK


# --- estimate -----------------------------------------------------------------


def cmd_estimate(args) -> int:
    defaults = {
        "threshold": 0.002,
        "open_radius": 1,
        "seed_pose": "cardinal",
        "max_iterations": 100,
        "robust_scale": 0.0,
    }
    try:
        effective = _merge_config(args, defaults)
    except (FileNotFoundError, ValueError) as e:
        return _fail(str(e))

    src = Path(args.scene_dir)
    names = {
        "left": src / "left.bdi",
        "right": src / "right.bdi",
        "ref_left": src / "ref_left.bdi",
        "ref_right": src / "ref_right.bdi",
    }
    for label, path in names.items():
        if not path.exists():
            return _fail(f"{label} depth image not found: {path}")
    field_path = Path(args.field) if args.field else src / "field.txt"
    if args.field is None:
        meta = src / "metadata.json"
        if meta.exists():
            field_path = Path(json.loads(meta.read_text())["field"])
    if not field_path.exists():
        return _fail(f"field file not found: {field_path}")

    width = args.width
    if width is None:
        meta = src / "metadata.json"
        if not meta.exists():
            return _fail("gripper width unknown: pass --width or provide metadata.json")
        width = float(json.loads(meta.read_text())["gripper_width"])

    field = bio.read_field_description(field_path)
    rig = default_rig()
    imgs = {k: bio.read_depth_image(p, rig.intrinsics) for k, p in names.items()}

    solver = SolverConfig(
        max_iterations=int(effective["max_iterations"]),
        robust_loss_scale=float(effective["robust_scale"]),
    )
    t_start = time.perf_counter()
    clouds = []
    patch_sizes = []
    for cur, ref in (("left", "ref_left"), ("right", "ref_right")):
        mask = morphological_clean(
            difference_mask(imgs[cur], imgs[ref], float(effective["threshold"])),
            int(effective["open_radius"]),
        )
        cloud = crop_to_patch(imgs[cur], mask)
        patch_sizes.append(len(cloud))
        clouds.append(cloud)
    merged = concatenate_grasp_cloud(clouds[0], clouds[1], width, rig)
    if len(merged) == 0:
        print("no contact detected: contact patch is empty", file=sys.stderr)
        return EXIT_EMPTY_PATCH

    if effective["seed_pose"] == "cardinal":
        result = estimate_pose_cardinal(field, merged, solver)
        seed_desc = "cardinal"
    else:
        seed_path = Path(effective["seed_pose"])
        if not seed_path.exists():
            return _fail(f"seed pose file not found: {seed_path}")
        result = estimate_pose(field, merged, bio.read_pose(seed_path), solver)
        seed_desc = str(seed_path)
    wall = time.perf_counter() - t_start

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bio.write_pose(out / "estimated.pose", result.pose)
    record = {
        "event": "estimate",
        "pose": result.pose.to_vector().tolist(),
        "final_cost_m2": result.final_cost,
        "residual_rms_m": result.residual_rms,
        "iterations": result.iterations,
        "converged": result.converged,
        "patch_left": patch_sizes[0],
        "patch_right": patch_sizes[1],
        "points": len(merged),
        "wall_s": wall,
        "seed_pose": seed_desc,
    }
    with (out / "estimate.jsonl").open("a") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")
    _write_metadata(
        out,
        "estimate",
        {**effective, "scene_dir": str(src), "field": str(field_path), "width": width,
         "seed_pose": seed_desc},
    )
    print(
        f"estimate: cost {result.final_cost:.3e} m^2, {len(merged)} pts, "
        f"{result.iterations} iters, {wall:.2f} s -> {out / 'estimated.pose'}"
    )
    return EXIT_OK


# --- basin-bench ----------------------------------------------------------------


def cmd_basin_bench(args) -> int:
    defaults = {
        "trials": 100,
        "offset_max_deg": 30.0,
        "noise_sigma": 0.0,
        "seed": 0,
        "workers": 1,
        "max_points": 4000,
    }
    try:
        effective = _merge_config(args, defaults)
    except (FileNotFoundError, ValueError) as e:
        return _fail(str(e))
    spec = BasinBenchSpec(
        trials=int(effective["trials"]),
        offset_max_deg=float(effective["offset_max_deg"]),
        noise_sigma=float(effective["noise_sigma"]),
        root_seed=int(effective["seed"]),
        max_points=int(effective["max_points"]),
    )
    records = run_basin_bench(spec, workers=int(effective["workers"]))
    out = Path(args.out)
    write_report(out, records, extra_meta={"root_seed": spec.root_seed})
    _write_metadata(out, "basin-bench", effective)
    ok = sum(r.success for r in records)
    print(f"basin-bench: {ok}/{len(records)} within tolerance -> {out / 'bench.csv'}")
    return EXIT_OK


# --- shear-demo -----------------------------------------------------------------


def _demo_displacements(frames: int, max_shift: float, direction=(1.0, 0.35)):
    """Scripted ramp-and-release shear profile (release keeps a residual)."""
    d = np.asarray(direction) / np.linalg.norm(direction)
    ramp_end = max(2, int(frames * 0.7))
    mags = []
    for k in range(frames):
        if k <= ramp_end:
            mags.append(max_shift * k / ramp_end)
        else:
            mags.append(0.25 * max_shift)  # post-release residual
    return [m * d for m in mags]


def cmd_shear_demo(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    defaults = {
        "frames": 13,
        "threshold": 60000.0,
        "max_shift": 6.0,
        "pattern_density": 0.15,
        "seed": 0,
    }
    try:
        effective = _merge_config(args, defaults)
    except (FileNotFoundError, ValueError) as e:
        return _fail(str(e))

    rig = default_rig()
    cfg = FlowConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.frames_dir:
        frame_paths = sorted(Path(args.frames_dir).glob("*.bir"))
        if len(frame_paths) < 2:
            return _fail(f"need at least 2 BIR1 frames in {args.frames_dir}")
        frames = [bio.read_ir_image(p) for p in frame_paths]
        shapes = {f.data.shape for f in frames}
        if len(shapes) > 1:
            return _fail("frame sizes differ across the sequence")
    else:
        pattern = generate_pattern(
            DotPattern(density=float(effective["pattern_density"]), seed=int(effective["seed"])),
            rig.resolution,
        )
        h, w = pattern.data.shape
        frames = [pattern]
        for shift in _demo_displacements(int(effective["frames"]) - 1, float(effective["max_shift"])):
            disp = np.broadcast_to(shift, (h, w, 2)).copy()
            frames.append(render_ir(rig, 0, pattern, disp))

    monitor = ReleaseMonitor(float(effective["threshold"]))
    monitor.set_reference(patch_pixels=1)
    reference = frames[0]
    trigger_frame = None
    log_path = out / "shear.jsonl"
    with log_path.open("w") as log:
        for k, frame in enumerate(frames[1:], start=1):
            flow = dense_flow(reference, frame, cfg)
            est = shear_displacement(flow)
            fired = monitor.observe(est)
            if fired:
                trigger_frame = k
            bio.write_flow_field(out / f"flow_{k:03d}.bff", flow)
            log.write(
                json.dumps(
                    {
                        "event": "shear",
                        "frame": k,
                        "sum_px": est.raw_sum.tolist(),
                        "magnitude_px": est.magnitude,
                        "direction": est.direction.tolist(),
                        "triggered": fired,
                        "low_confidence": flow.low_confidence,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            if fired:
                log.write(
                    json.dumps(
                        {"event": "release_trigger", "frame": k, "magnitude_px": est.magnitude}
                    )
                    + "\n"
                )

            step = 16
            ys, xs = np.mgrid[0 : flow.height : step, 0 : flow.width : step]
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.imshow(frame.data, cmap="gray", vmin=0, vmax=1)
            ax.quiver(
                xs,
                ys,
                flow.vectors[::step, ::step, 0],
                flow.vectors[::step, ::step, 1],
                color="red",
                angles="xy",
                scale_units="xy",
                scale=0.25,
            )
            ax.set_title(f"frame {k}: |s| = {est.magnitude:.0f} px" + (" TRIGGER" if fired else ""))
            ax.set_axis_off()
            fig.savefig(out / f"overlay_{k:03d}.png", dpi=110, bbox_inches="tight")
            plt.close(fig)

    _write_metadata(
        out,
        "shear-demo",
        {**effective, "frames": len(frames), "frames_dir": args.frames_dir,
         "trigger_frame": trigger_frame},
    )
    msg = f"trigger at frame {trigger_frame}" if trigger_frame else "no trigger"
    print(f"shear-demo: {len(frames) - 1} flows, {msg} -> {log_path}")
    return EXIT_OK


# --- field-slice ----------------------------------------------------------------


_PLANES = {"xy": (0, 1, 2), "xz": (0, 2, 1), "yz": (1, 2, 0)}


def cmd_field_slice(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import TwoSlopeNorm

    field_path = Path(args.field)
    if not field_path.exists():
        return _fail(f"field file not found: {field_path}")
    if args.plane not in _PLANES:
        return _fail(f"plane must be one of {sorted(_PLANES)}")
    field = bio.read_field_description(field_path)

    ia, ib, ic = _PLANES[args.plane]
    n = args.resolution
    axis = np.linspace(-args.extent, args.extent, n)
    aa, bb = np.meshgrid(axis, axis)
    pts = np.zeros((n * n, 3))
    pts[:, ia] = aa.ravel()
    pts[:, ib] = bb.ravel()
    pts[:, ic] = args.offset
    values, grads = field.evaluate(pts)
    phi = values.reshape(n, n)

    fig, ax = plt.subplots(figsize=(6, 6))
    vmax = max(abs(phi.min()), abs(phi.max()), 1e-9)
    norm = TwoSlopeNorm(vcenter=0.0, vmin=-vmax, vmax=vmax)
    ax.pcolormesh(aa, bb, phi, cmap="RdBu_r", norm=norm, shading="auto")
    ax.contour(aa, bb, phi, levels=[0.0], colors="black", linewidths=1.5)
    step = max(1, n // 24)
    ax.quiver(
        aa[::step, ::step],
        bb[::step, ::step],
        grads.reshape(n, n, 3)[::step, ::step, ia],
        grads.reshape(n, n, 3)[::step, ::step, ib],
        color="black",
        width=0.003,
    )
    names = "xyz"
    ax.set_xlabel(f"{names[ia]} (m)")
    ax.set_ylabel(f"{names[ib]} (m)")
    ax.set_aspect("equal")
    ax.set_title(f"distance field, {args.plane} plane at {names[ic]}={args.offset:g} m")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=130, bbox_inches="tight")
    plt.close(fig)
    print(f"field-slice -> {out}")
    return EXIT_OK


# --- verify-report ----------------------------------------------------------------


def cmd_verify_report(args) -> int:
    report = Path(args.report)
    if not (report / "bench.csv").exists() or not (report / "aggregate.json").exists():
        return _fail(f"report directory missing bench.csv/aggregate.json: {report}")
    ok, mismatches = verify_report(report)
    if ok:
        print("verify-report: aggregates match the per-trial records")
        return EXIT_OK
    print(f"verify-report: MISMATCH {mismatches}", file=sys.stderr)
    return EXIT_USAGE


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bubbletact", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a synthetic grasp scene to files")
    sim.add_argument("--scene", required=True, help="scene description file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override scene seed")
    sim.add_argument("--noise-sigma", type=float, default=None, help="override noise sigma (m)")
    sim.add_argument("--threshold", type=float, default=0.002, help="patch threshold (m)")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate in-hand pose from a scene directory")
    est.add_argument("--scene-dir", required=True, help="directory from `simulate`")
    est.add_argument("--out", required=True)
    est.add_argument("--config", default=None, help="key=value config file")
    est.add_argument("--field", default=None, help="field file (default: from metadata)")
    est.add_argument("--width", type=float, default=None, help="gripper width (m)")
    est.add_argument("--seed-pose", default=None, dest="seed_pose", help="pose file or 'cardinal'")
    est.add_argument("--threshold", type=float, default=None)
    est.add_argument("--open-radius", type=int, default=None, dest="open_radius")
    est.add_argument("--max-iterations", type=int, default=None, dest="max_iterations")
    est.add_argument("--robust-scale", type=float, default=None, dest="robust_scale")
    est.set_defaults(func=cmd_estimate)

    bb = sub.add_parser("basin-bench", help="convergence-basin benchmark")
    bb.add_argument("--out", required=True)
    bb.add_argument("--config", default=None, help="key=value config file")
    bb.add_argument("--trials", type=int, default=None)
    bb.add_argument("--offset-max-deg", type=float, default=None, dest="offset_max_deg")
    bb.add_argument("--noise-sigma", type=float, default=None, dest="noise_sigma")
    bb.add_argument("--seed", type=int, default=None)
    bb.add_argument("--workers", type=int, default=None)
    bb.add_argument("--max-points", type=int, default=None, dest="max_points")
    bb.set_defaults(func=cmd_basin_bench)

    sh = sub.add_parser("shear-demo", help="shear ramp/release demo with flow overlays")
    sh.add_argument("--out", required=True)
    sh.add_argument("--config", default=None, help="key=value config file")
    sh.add_argument("--frames-dir", default=None, help="read BIR1 frames instead of synthesizing")
    sh.add_argument("--frames", type=int, default=None)
    sh.add_argument("--threshold", type=float, default=None, help="summed-flow trigger (px)")
    sh.add_argument("--max-shift", type=float, default=None, dest="max_shift", help="peak shift (px)")
    sh.add_argument("--pattern-density", type=float, default=None, dest="pattern_density")
    sh.add_argument("--seed", type=int, default=None)
    sh.set_defaults(func=cmd_shear_demo)

    fs = sub.add_parser("field-slice", help="render a 2D slice of a distance field")
    fs.add_argument("--field", required=True)
    fs.add_argument("--out", required=True, help="output image path (.png)")
    fs.add_argument("--plane", default="xz", help="xy, xz, or yz")
    fs.add_argument("--offset", type=float, default=0.0, help="third-axis offset (m)")
    fs.add_argument("--extent", type=float, default=0.1, help="half side length (m)")
    fs.add_argument("--resolution", type=int, default=201)
    fs.set_defaults(func=cmd_field_slice)

    vr = sub.add_parser("verify-report", help="recompute bench aggregates from records")
    vr.add_argument("--report", required=True, help="directory holding bench.csv/aggregate.json")
    vr.set_defaults(func=cmd_verify_report)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoContactError as e:
        print(f"no-contact scene: {e}", file=sys.stderr)
        return EXIT_NO_CONTACT
    except (ValueError, OSError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    raise SystemExit(main())

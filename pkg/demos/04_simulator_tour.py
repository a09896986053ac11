"""
A tour of the synthetic two-finger sensor
=========================================

Two short-range depth cameras, each tilted toward its fingertip, view the
inside of an inflated membrane. An object pressed between the fingers
replaces the membrane wherever it is nearer to the camera. Pressure is the
displaced volume; grasp stability gates on pressure and finger speed.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bubbletact import Cylinder, GripperState, ProximityField, stable_grasp
from bubbletact.geometry import RigidPose
from bubbletact.sim import default_rig, render_depth, simulate_pressure, synthesize_grasp_scene

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

rig = default_rig()
print(f"resolution: {rig.resolution}, working range: {rig.working_range} m")
print(f"rest membrane depth: {rig.rest_depth.min():.4f}..{rig.rest_depth.max():.4f} m")

field = ProximityField(Cylinder(0.04, 0.1))
state = GripperState(width=0.07)
scene = synthesize_grasp_scene(rig, field, RigidPose.identity(), state, noise_sigma=0.0004, seed=1)

rest = render_depth(rig, 0, None, None, state)
fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
for ax, (title, img) in zip(
    axes,
    [("rest membrane", rest), ("left finger", scene["left"]), ("right finger", scene["right"])],
):
    shown = np.where(img.data > 0, img.data, np.nan)
    im = ax.imshow(shown, cmap="viridis")
    ax.set_title(title)
    ax.set_axis_off()
    fig.colorbar(im, ax=ax, shrink=0.8, label="depth (m)")
fig.savefig(out_dir / "depth_images.png", dpi=120, bbox_inches="tight")
print(f"wrote {out_dir / 'depth_images.png'}")

# Pressure rises with indentation: close the gripper in 1 mm steps.
print("width sweep (pressure is gain * displaced volume):")
for width in (0.080, 0.075, 0.070, 0.065):
    s = GripperState(width=width)
    p = [simulate_pressure(rig, f, field, RigidPose.identity(), s) for f in (0, 1)]
    grasped = stable_grasp(
        GripperState(width=width, finger_velocity=0.0, pressure=tuple(p)),
        pressure_threshold=1e-6,
        velocity_threshold=0.01,
    )
    print(f"  width {width * 1000:.0f} mm -> pressures ({p[0]:.2e}, {p[1]:.2e}) kPa, stable: {grasped}")

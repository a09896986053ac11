"""Synthetic sensor: rendering oracles, pattern generation, pressure, scenes."""

import numpy as np
import pytest

from bubbletact.fields import Box, Cylinder, ProximityField, Sphere, eval_field_batch
from bubbletact.geometry import RigidPose
from bubbletact.pose import concatenate_grasp_cloud
from bubbletact.sim import (
    CameraRig,
    DotPattern,
    GripperState,
    InfeasiblePatternError,
    NoContactError,
    default_rig,
    generate_pattern,
    pattern_layout,
    render_depth,
    render_ir,
    simulate_pressure,
    stable_grasp,
    synthesize_grasp_scene,
)
from bubbletact.tactile import crop_to_patch, difference_mask


@pytest.fixture(scope="module")
def rig():
    return default_rig()


STATE = GripperState(width=0.07)
CANONICAL = ProximityField(Cylinder(0.04, 0.1))


def flat_rest_rig(depth=0.08):
    """Untilted rig with a flat rest membrane: closed-form test geometry."""
    base = default_rig(tilt_deg=0.0)
    return CameraRig(
        intrinsics=base.intrinsics,
        resolution=base.resolution,
        working_range=base.working_range,
        camera_in_finger=base.camera_in_finger,
        rest_depth=np.full(base.rest_depth.shape, depth),
        bubble_center=base.bubble_center,
        bubble_radius=base.bubble_radius,
    )


class TestRig:
    def test_rest_membrane_within_working_range(self, rig):
        lo, hi = rig.working_range
        assert rig.rest_depth.min() >= lo and rig.rest_depth.max() <= hi

    def test_apex_on_principal_ray(self, rig):
        cy = int(round(rig.intrinsics.cy))
        cx = int(round(rig.intrinsics.cx))
        window = rig.rest_depth[cy - 2 : cy + 3, cx - 2 : cx + 3]
        assert rig.rest_depth.max() == pytest.approx(window.max(), abs=1e-9)

    def test_fingers_face_each_other(self, rig):
        for width in (0.02, 0.07, 0.11):
            f0 = rig.finger_pose(width, 0)
            f1 = rig.finger_pose(width, 1)
            np.testing.assert_allclose(f0.rotation_matrix() @ [0, 1, 0], [0, 1, 0], atol=1e-12)
            np.testing.assert_allclose(f1.rotation_matrix() @ [0, 1, 0], [0, -1, 0], atol=1e-12)
            assert f1.translation[1] - f0.translation[1] == pytest.approx(width)

    def test_width_out_of_range_rejected(self, rig):
        with pytest.raises(ValueError):
            rig.camera_pose(0.2, 0)


class TestRenderDepth:
    def test_no_object_equals_rest_map(self, rig):
        img = render_depth(rig, 0, None, None, STATE, noise_sigma=0.0, seed=0)
        np.testing.assert_array_equal(img.data, rig.rest_depth)

    def test_no_object_with_noise_statistics(self, rig):
        sigma = 0.0005
        img = render_depth(rig, 0, None, None, STATE, noise_sigma=sigma, seed=9)
        resid = img.data - rig.rest_depth
        assert abs(resid.mean()) < 0.1 * sigma
        assert abs(resid.std() / sigma - 1.0) < 0.1

    def test_sphere_front_depth_closed_form(self, rig):
        # sphere centered on the left camera's principal ray, front pole
        # pressed 5 mm past the rest apex: minimum depth = apex - 5 mm
        r = 0.02
        cam = rig.camera_pose(STATE.width, 0)
        front = 0.055 - 0.005
        center_t = cam.transform_points(np.array([0.0, 0.0, front + r]))
        pose = RigidPose(center_t, np.array([1.0, 0, 0, 0]))
        img = render_depth(rig, 0, ProximityField(Sphere(r)), pose, STATE)
        assert img.data[img.data > 0].min() == pytest.approx(front, abs=1e-5)

    def test_never_renders_outside_working_range(self, rig):
        # huge noise pushes many pixels out of range: they must all invalidate
        img = render_depth(rig, 0, None, None, STATE, noise_sigma=0.05, seed=4)
        valid = img.data[img.data > 0]
        assert valid.min() >= rig.working_range[0]
        assert valid.max() <= rig.working_range[1]

    def test_contact_pixels_take_exact_object_depth(self, rig):
        pose = RigidPose.identity()
        img = render_depth(rig, 0, CANONICAL, pose, STATE)
        mask = difference_mask(img, rig.rest_image(), 0.002)
        cloud = crop_to_patch(img, mask)
        pts_t = rig.camera_pose(STATE.width, 0).transform_points(cloud.points)
        values, _ = eval_field_batch(CANONICAL, pts_t)
        assert np.abs(values).max() < 1e-6

    def test_camera_engulfed_by_object_gives_invalid_image(self, rig):
        # degenerate configuration: nothing sensible to trace
        everything = ProximityField(Sphere(1.0))
        img = render_depth(rig, 0, everything, RigidPose.identity(), STATE)
        assert not img.valid.any()

    def test_gripper_state_validation(self):
        with pytest.raises(ValueError):
            GripperState(width=0.2)
        with pytest.raises(ValueError):
            GripperState(width=0.07, pressure=(-1.0, 0.0))

    def test_mirror_symmetry_swaps_finger_images_up_to_u_flip(self, rig):
        pose = RigidPose.from_axis_angle([1, 0, 0], 0.1, translation=[0.004, 0.003, -0.002])
        mirror = np.diag([1.0, -1.0, 1.0])
        reflected = RigidPose.from_matrix(
            mirror @ pose.rotation_matrix() @ mirror, mirror @ pose.translation
        )
        left = render_depth(rig, 0, CANONICAL, pose, STATE)
        right_of_reflected = render_depth(rig, 1, CANONICAL, reflected, STATE)
        np.testing.assert_allclose(right_of_reflected.data, np.fliplr(left.data), atol=1e-9)


class TestPatternGeneration:
    RES = (224, 176)
    MM = 0.26

    def density_for(self, count):
        area = self.RES[0] * self.MM * self.RES[1] * self.MM
        return count / area

    def test_dot_count_within_five_percent(self):
        centers, _ = pattern_layout(DotPattern(self.density_for(100), seed=1), self.RES, self.MM)
        assert 95 <= len(centers) <= 105

    def test_same_seed_bit_identical(self):
        p = DotPattern(0.15, seed=11)
        a = generate_pattern(p, self.RES, self.MM)
        b = generate_pattern(p, self.RES, self.MM)
        np.testing.assert_array_equal(a.data, b.data)

    def test_different_seeds_differ(self):
        a = generate_pattern(DotPattern(0.15, seed=1), self.RES, self.MM)
        b = generate_pattern(DotPattern(0.15, seed=2), self.RES, self.MM)
        assert np.any(a.data != b.data)

    def test_zero_randomness_centers_on_grid(self):
        pattern = DotPattern(0.1, randomness=0.0, seed=5)
        centers_px, _ = pattern_layout(pattern, self.RES, self.MM)
        centers_mm = centers_px * self.MM
        pitch = 1.0 / np.sqrt(pattern.density)
        nx = int(np.ceil(self.RES[0] * self.MM / pitch))
        ny = int(np.ceil(self.RES[1] * self.MM / pitch))
        sx = self.RES[0] * self.MM / nx
        sy = self.RES[1] * self.MM / ny
        fx = (centers_mm[:, 0] - 0.5 * sx) / sx
        fy = (centers_mm[:, 1] - 0.5 * sy) / sy
        np.testing.assert_allclose(fx, np.round(fx), atol=1e-9)
        np.testing.assert_allclose(fy, np.round(fy), atol=1e-9)

    def test_diameters_within_bounds_and_no_overlap(self):
        pattern = DotPattern(0.12, min_diameter=0.5, max_diameter=1.0, seed=3)
        centers, radii = pattern_layout(pattern, self.RES, self.MM)
        assert radii.min() >= 0.5 / 2 / self.MM - 1e-9
        assert radii.max() <= 1.0 / 2 / self.MM + 1e-9
        d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        rr = radii[:, None] + radii[None, :]
        np.fill_diagonal(d, np.inf)
        assert np.all(d > rr - 1e-9)

    def test_infeasible_packing_rejected(self):
        with pytest.raises(InfeasiblePatternError):
            pattern_layout(DotPattern(2.0, min_diameter=1.0, max_diameter=2.0, seed=0), self.RES, self.MM)

    def test_intensities_normalized(self):
        img = generate_pattern(DotPattern(0.15, seed=0), self.RES, self.MM)
        assert img.data.min() >= 0.0 and img.data.max() <= 1.0


class TestRenderIr:
    def test_zero_displacement_identity(self, rig):
        pat = generate_pattern(DotPattern(0.15, seed=2), rig.resolution)
        out = render_ir(rig, 0, pat, np.zeros(pat.data.shape + (2,)))
        np.testing.assert_array_equal(out.data, pat.data)

    def test_integer_shift_moves_pixels(self, rig):
        pat = generate_pattern(DotPattern(0.15, seed=2), rig.resolution)
        disp = np.zeros(pat.data.shape + (2,))
        disp[..., 0] = 5.0
        out = render_ir(rig, 0, pat, disp)
        np.testing.assert_array_equal(out.data[:, 5:], pat.data[:, :-5])

    def test_dimension_checks(self, rig):
        pat = generate_pattern(DotPattern(0.15, seed=2), rig.resolution)
        with pytest.raises(ValueError):
            render_ir(rig, 0, pat, np.zeros((10, 10, 2)))


class TestPressure:
    def test_no_contact_zero(self, rig):
        assert simulate_pressure(rig, 0, None, None, STATE) == 0.0
        far = RigidPose(np.array([0.0, 0.5, 0.0]), np.array([1.0, 0, 0, 0]))
        assert simulate_pressure(rig, 0, ProximityField(Sphere(0.01)), far, STATE) == 0.0

    def test_uniform_block_closed_form_volume(self):
        """40x40 px flat face indented exactly 5 mm against a flat membrane."""
        rig = flat_rest_rig(depth=0.08)
        state = GripperState(width=0.0)
        face = 0.075
        fx = rig.intrinsics.fx
        hx = face * 20.0 / fx
        cam = rig.camera_pose(0.0, 0)
        center_t = cam.transform_points(np.array([0.0, 0.0, face + 0.01]))
        pose = RigidPose(center_t, cam.quaternion)
        gain = 50.0
        pressure = simulate_pressure(rig, 0, ProximityField(Box((hx, hx, 0.01))), pose, state, gain)
        expected = gain * 1600 * (0.08**2 / (fx * fx)) * 0.005
        assert pressure == pytest.approx(expected, rel=1e-3)

    def test_monotone_in_indentation(self, rig):
        # sphere front surface reaches push meters past the left membrane apex
        volumes = []
        for push in (0.002, 0.004, 0.006):
            pose = RigidPose(np.array([0.0, 0.005 - push, 0.0]), np.array([1.0, 0, 0, 0]))
            volumes.append(simulate_pressure(rig, 0, ProximityField(Sphere(0.04)), pose, STATE))
        assert 0.0 < volumes[0] < volumes[1] < volumes[2]


class TestStableGrasp:
    def test_truth_table(self):
        def state(p, v):
            return GripperState(width=0.07, finger_velocity=v, pressure=(p, p))

        assert not stable_grasp(state(0.0, 0.0), 1.0, 0.01)
        assert stable_grasp(state(2.0, 0.0), 1.0, 0.01)
        assert not stable_grasp(state(2.0, 0.02), 1.0, 0.01)  # still closing
        assert not stable_grasp(GripperState(0.07, 0.0, (2.0, 0.5)), 1.0, 0.01)

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            stable_grasp(GripperState(0.07), -1.0, 0.01)


class TestGraspScene:
    def test_canonical_cylinder_scene(self, rig):
        scene = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0, 0)
        left_px, right_px = scene["contact_pixels"]
        assert left_px > 1000 and right_px > 1000
        assert abs(left_px - right_px) <= 0.1 * max(left_px, right_px)
        np.testing.assert_allclose(
            scene["truth"].to_vector(), RigidPose.identity().to_vector(), atol=1e-12
        )

    def test_truth_is_inverse_of_object_pose(self, rig):
        pose = RigidPose.from_axis_angle([0, 0, 1], 0.5, translation=[0.002, 0.0, -0.003])
        scene = synthesize_grasp_scene(rig, CANONICAL, pose, STATE, 0.0, 0)
        np.testing.assert_allclose(
            scene["truth"].to_vector(), pose.inverse().to_vector(), atol=1e-12
        )

    def test_no_contact_raises(self, rig):
        far = RigidPose(np.array([0.0, 0.0, 0.3]), np.array([1.0, 0, 0, 0]))
        with pytest.raises(NoContactError):
            synthesize_grasp_scene(rig, ProximityField(Sphere(0.01)), far, STATE, 0.0, 0)

    def test_same_seed_bit_identical(self, rig):
        a = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0005, 13)
        b = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0005, 13)
        np.testing.assert_array_equal(a["left"].data, b["left"].data)
        np.testing.assert_array_equal(a["right"].data, b["right"].data)

    def test_noise_statistics_against_noiseless_render(self, rig):
        sigma = 0.0005
        resid = []
        for seed in (21, 22):
            clean = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0, seed)
            noisy = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, sigma, seed)
            for side in ("left", "right"):
                both = (clean[side].data > 0) & (noisy[side].data > 0)
                resid.append((noisy[side].data - clean[side].data)[both])
        resid = np.concatenate(resid)
        assert resid.size > 1e5
        assert abs(resid.mean()) < 0.1 * sigma
        assert abs(resid.std() / sigma - 1.0) < 0.1

    def test_patch_size_tracks_indented_pixel_count(self, rig):
        scene = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0, 0)
        for finger, img in ((0, scene["left"]), (1, scene["right"])):
            mask = difference_mask(img, rig.rest_image(), 0.002)
            cloud = crop_to_patch(img, mask)
            indented = scene["contact_pixels"][finger]
            assert abs(len(cloud) - indented) <= 0.3 * indented

    def test_render_deproject_patch_on_zero_level_set(self, rig):
        scene = synthesize_grasp_scene(rig, CANONICAL, RigidPose.identity(), STATE, 0.0, 0)
        clouds = []
        for finger, img in ((0, scene["left"]), (1, scene["right"])):
            mask = difference_mask(img, rig.rest_image(), 0.002)
            clouds.append(crop_to_patch(img, mask))
        merged = concatenate_grasp_cloud(clouds[0], clouds[1], STATE.width, rig)
        values, _ = eval_field_batch(CANONICAL, scene["truth"].transform_points(merged.points))
        assert np.abs(values).max() < 1e-4

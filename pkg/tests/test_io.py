"""File formats: round trips, header validation, field-tree parsing."""

import numpy as np
import pytest

from bubbletact import io as bio
from bubbletact.fields import Box, Cylinder, Sphere, Transformed, Union
from bubbletact.geometry import PointCloud, RigidPose
from bubbletact.shear import FlowField
from bubbletact.tactile import DepthImage, IrImage, PinholeModel

INTR = PinholeModel(fx=210.0, fy=210.0, cx=111.5, cy=87.5)


class TestPointCloudFormat:
    def test_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.normal(scale=0.05, size=(100, 3)), frame="T")
        path = tmp_path / "cloud.bpc"
        bio.write_point_cloud(path, cloud)
        back = bio.read_point_cloud(path)
        assert back.frame == "T"
        np.testing.assert_allclose(back.points, cloud.points, rtol=1e-9, atol=1e-15)

    def test_header_and_digits(self, tmp_path):
        cloud = PointCloud(np.array([[0.123456789123, -1e-5, 2.0]]), frame="C0")
        path = tmp_path / "cloud.bpc"
        bio.write_point_cloud(path, cloud)
        lines = path.read_text().splitlines()
        assert lines[0] == "BPC1 1 C0"
        mantissa = lines[1].split()[0].split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) >= 9

    def test_empty_cloud(self, tmp_path):
        path = tmp_path / "empty.bpc"
        bio.write_point_cloud(path, PointCloud(np.zeros((0, 3)), frame="G"))
        back = bio.read_point_cloud(path)
        assert len(back) == 0 and back.frame == "G"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bpc"
        path.write_text("NOPE 1 T\n0 0 0\n")
        with pytest.raises(ValueError):
            bio.read_point_cloud(path)

    def test_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "short.bpc"
        path.write_text("BPC1 2 T\n0 0 0\n")
        with pytest.raises(ValueError):
            bio.read_point_cloud(path)


class TestRasterFormats:
    def test_depth_round_trip_with_invalid_sentinel(self, tmp_path, rng):
        data = rng.uniform(0.04, 0.11, (176, 224)).astype(np.float32).astype(float)
        data[10:20, 30:40] = 0.0
        img = DepthImage(data, INTR)
        path = tmp_path / "img.bdi"
        bio.write_depth_image(path, img)
        back = bio.read_depth_image(path, INTR)
        np.testing.assert_array_equal(back.data, data)
        assert not back.valid[15, 35]

    def test_header_is_ascii_line(self, tmp_path):
        bio.write_depth_image(tmp_path / "img.bdi", DepthImage(np.full((4, 6), 0.05), INTR))
        first = (tmp_path / "img.bdi").read_bytes().split(b"\n", 1)[0]
        assert first == b"BDI1 6 4"

    def test_ir_round_trip(self, tmp_path, rng):
        img = IrImage(rng.random((50, 60)).astype(np.float32).astype(float))
        bio.write_ir_image(tmp_path / "a.bir", img)
        np.testing.assert_array_equal(bio.read_ir_image(tmp_path / "a.bir").data, img.data)

    def test_flow_round_trip_interleaved(self, tmp_path, rng):
        flow = FlowField(rng.normal(size=(30, 40, 2)).astype(np.float32).astype(float))
        bio.write_flow_field(tmp_path / "f.bff", flow)
        back = bio.read_flow_field(tmp_path / "f.bff")
        np.testing.assert_array_equal(back.vectors, flow.vectors)
        payload = (tmp_path / "f.bff").read_bytes().split(b"\n", 1)[1]
        first_two = np.frombuffer(payload[:8], dtype="<f4")
        np.testing.assert_allclose(first_two, flow.vectors[0, 0].astype(np.float32))

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.bdi"
        path.write_bytes(b"BDI1 4 4\n" + b"\x00" * 10)
        with pytest.raises(ValueError):
            bio.read_depth_image(path, INTR)


class TestPoseFormat:
    def test_round_trip(self, tmp_path):
        pose = RigidPose.from_axis_angle([1, 2, -1], 0.83, translation=[0.01, -0.02, 0.3])
        bio.write_pose(tmp_path / "p.pose", pose)
        back = bio.read_pose(tmp_path / "p.pose")
        np.testing.assert_allclose(back.to_vector(), pose.to_vector(), atol=1e-10)

    def test_wrong_arity_rejected(self, tmp_path):
        (tmp_path / "p.pose").write_text("1 2 3\n")
        with pytest.raises(ValueError):
            bio.read_pose(tmp_path / "p.pose")


class TestFieldDescription:
    def test_single_primitive(self):
        field = bio.parse_field_description("cylinder r=0.04 h=0.1\n")
        assert field.root == Cylinder(0.04, 0.1)

    def test_nested_union_with_transforms(self):
        text = (
            "union\n"
            " sphere r=0.03\n"
            " transform 0.05 0 0 1 0 0 0\n"
            "  cylinder r=0.01 h=0.08\n"
            " box hx=0.01 hy=0.02 hz=0.03\n"
        )
        field = bio.parse_field_description(text)
        assert isinstance(field.root, Union)
        assert len(field.root.children) == 3
        assert field.root.children[0] == Sphere(0.03)
        assert isinstance(field.root.children[1], Transformed)
        assert field.root.children[1].child == Cylinder(0.01, 0.08)
        assert field.root.children[2] == Box((0.01, 0.02, 0.03))

    def test_round_trip_formatting(self):
        text = "union\n sphere r=0.03\n transform 0.05 0 0 1 0 0 0\n  box hx=0.01 hy=0.02 hz=0.03\n"
        field = bio.parse_field_description(text)
        again = bio.parse_field_description(bio.format_field_description(field))
        pts = np.random.default_rng(0).uniform(-0.1, 0.1, (50, 3))
        np.testing.assert_allclose(again.value(pts), field.value(pts), atol=1e-12)

    def test_comments_and_blank_lines_skipped(self):
        field = bio.parse_field_description("# a field\n\nsphere r=0.02\n")
        assert field.root == Sphere(0.02)

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "walrus r=1\n",
            "sphere\n",
            "union\n",
            "transform 1 2 3 1 0 0 0\n",  # transform missing its child
            "sphere r=0.02\nsphere r=0.03\n",  # two roots
            "cylinder r=-1 h=2\n",
        ],
    )
    def test_malformed_rejected(self, text):
        with pytest.raises((ValueError, IndexError)):
            bio.parse_field_description(text)


class TestSceneDescription:
    def test_full_scene(self, tmp_path):
        (tmp_path / "f.txt").write_text("cylinder r=0.04 h=0.1\n")
        scene_text = (
            "field = f.txt\n"
            "object_pose = 0 0 -0.008 1 0 0 0\n"
            "gripper_width = 0.065\n"
            "noise_sigma = 0.0005\n"
            "seed = 9\n"
            "pattern_density = 0.2\n"
        )
        (tmp_path / "scene.txt").write_text(scene_text)
        scene = bio.read_scene_description(tmp_path / "scene.txt")
        assert scene["gripper_width"] == 0.065
        assert scene["noise_sigma"] == 0.0005
        assert scene["seed"] == 9
        assert scene["pattern_density"] == 0.2
        np.testing.assert_allclose(scene["object_pose"].translation, [0, 0, -0.008])
        assert scene["field_path"].name == "f.txt"

    def test_missing_field_key_rejected(self, tmp_path):
        (tmp_path / "scene.txt").write_text("gripper_width = 0.07\n")
        with pytest.raises(ValueError):
            bio.read_scene_description(tmp_path / "scene.txt")

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            bio.parse_key_values("not a key value line\n")

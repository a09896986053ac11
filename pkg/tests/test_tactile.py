"""Depth processing: deprojection round trips, contact masks, cleanup."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubbletact.tactile import (
    ContactPatchMask,
    DepthImage,
    PinholeModel,
    crop_to_patch,
    deproject,
    difference_mask,
    morphological_clean,
    project,
)

INTR = PinholeModel(fx=210.0, fy=210.0, cx=111.5, cy=87.5)


def flat_image(depth=0.08, shape=(176, 224)):
    return DepthImage(np.full(shape, depth), INTR)


class TestDeproject:
    def test_principal_point_lies_on_optical_axis(self):
        intr = PinholeModel(fx=210.0, fy=210.0, cx=100.0, cy=80.0)
        data = np.zeros((176, 224))
        data[80, 100] = 0.08
        cloud = deproject(DepthImage(data, intr))
        np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 0.08]], atol=1e-15)

    def test_all_invalid_gives_empty_cloud(self):
        cloud = deproject(DepthImage(np.zeros((176, 224)), INTR))
        assert len(cloud) == 0

    def test_unit_tangent_pixel(self):
        intr = PinholeModel(fx=100.0, fy=100.0, cx=50.0, cy=40.0)
        data = np.zeros((90, 160))
        data[40, 150] = 0.1  # u = cx + fx
        cloud = deproject(DepthImage(data, intr))
        np.testing.assert_allclose(cloud.points, [[0.1, 0.0, 0.1]], atol=1e-15)

    def test_projection_round_trip(self, rng):
        data = rng.uniform(0.04, 0.11, (176, 224))
        img = DepthImage(data, INTR)
        cloud = deproject(img)
        uvz = project(INTR, cloud.points)
        vs, us = np.mgrid[0:176, 0:224]
        np.testing.assert_allclose(uvz[:, 0], us.ravel(), atol=1e-6)
        np.testing.assert_allclose(uvz[:, 1], vs.ravel(), atol=1e-6)
        np.testing.assert_array_equal(uvz[:, 2], data.ravel())


class TestDifferenceMask:
    def test_identical_images_all_false(self):
        img = flat_image()
        assert difference_mask(img, img, 0.002).pixel_count == 0

    def test_indented_block_detected_exactly(self):
        ref = flat_image()
        cur = ref.data.copy()
        cur[50:90, 60:100] -= 0.005
        mask = difference_mask(DepthImage(cur, INTR), ref, 0.002)
        expected = np.zeros((176, 224), dtype=bool)
        expected[50:90, 60:100] = True
        np.testing.assert_array_equal(mask.bits, expected)

    def test_below_threshold_ignored(self):
        ref = flat_image()
        cur = ref.data.copy()
        cur[50:90, 60:100] -= 0.001
        assert difference_mask(DepthImage(cur, INTR), ref, 0.002).pixel_count == 0

    def test_invalid_pixels_never_in_mask(self):
        ref = flat_image()
        cur = ref.data.copy()
        cur[50:90, 60:100] -= 0.005
        cur[50, 60] = 0.0
        mask = difference_mask(DepthImage(cur, INTR), ref, 0.002)
        assert not mask.bits[50, 60]

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            difference_mask(flat_image(shape=(10, 10)), flat_image(), 0.002)

    @settings(max_examples=40, deadline=None)
    @given(t1=st.floats(1e-4, 0.02), t2=st.floats(1e-4, 0.02))
    def test_mask_monotone_in_threshold(self, t1, t2):
        rng = np.random.default_rng(5)
        ref = DepthImage(np.full((40, 50), 0.08), INTR)
        cur = DepthImage(0.08 - rng.uniform(0, 0.01, (40, 50)), INTR)
        lo, hi = sorted((t1, t2))
        m_lo = difference_mask(cur, ref, lo).bits
        m_hi = difference_mask(cur, ref, hi).bits
        assert not np.any(m_hi & ~m_lo)


class TestCropToPatch:
    def test_all_false_mask_empty(self):
        img = flat_image()
        mask = ContactPatchMask(np.zeros((176, 224), dtype=bool))
        assert len(crop_to_patch(img, mask)) == 0

    def test_all_true_mask_equals_deproject(self, rng):
        img = DepthImage(rng.uniform(0.04, 0.11, (176, 224)), INTR)
        mask = ContactPatchMask(np.ones((176, 224), dtype=bool))
        np.testing.assert_array_equal(crop_to_patch(img, mask).points, deproject(img).points)

    def test_crop_is_subset_of_deproject(self, rng):
        img = DepthImage(rng.uniform(0.04, 0.11, (176, 224)), INTR)
        mask = ContactPatchMask(rng.random((176, 224)) < 0.3)
        full = {tuple(p) for p in deproject(img).points}
        assert all(tuple(p) in full for p in crop_to_patch(img, mask).points)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            crop_to_patch(flat_image(), ContactPatchMask(np.ones((5, 5), dtype=bool)))


class TestMorphologicalClean:
    def test_radius_zero_identity(self, rng):
        mask = ContactPatchMask(rng.random((60, 80)) < 0.5)
        np.testing.assert_array_equal(morphological_clean(mask, 0).bits, mask.bits)

    def test_single_pixel_removed(self):
        bits = np.zeros((30, 30), dtype=bool)
        bits[15, 15] = True
        assert morphological_clean(ContactPatchMask(bits), 1).pixel_count == 0

    def test_solid_block_preserved_up_to_boundary(self):
        bits = np.zeros((100, 100), dtype=bool)
        bits[30:70, 30:70] = True
        cleaned = morphological_clean(ContactPatchMask(bits), 2).bits
        assert cleaned[32:68, 32:68].all()  # intact within 2 px of the boundary
        assert not np.any(cleaned & ~bits)  # opening never adds pixels
        assert cleaned.sum() > 0.9 * bits.sum()

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            morphological_clean(ContactPatchMask(np.ones((5, 5), dtype=bool)), -1)

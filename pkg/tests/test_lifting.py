import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from panolift.errors import ArgumentError, DataError
from panolift.fusion import InverseDepthMap
from panolift.geometry import FaceCamera, FaceId
from panolift.lifting import (
    GaussianSet,
    LiftParams,
    count_budget,
    lift_face,
    pixel_angular_extent,
    quat_to_matrix,
    rotation_to_ray,
)
from panolift.synthroom import CubeRoom, face_ground_truth


def ref_solid_angle_triangle(r1, r2, r3):
    """Van Oosterom-Strackee formula, scalar oracle."""
    num = abs(np.dot(r1, np.cross(r2, r3)))
    den = 1.0 + np.dot(r1, r2) + np.dot(r2, r3) + np.dot(r3, r1)
    return 2.0 * math.atan2(num, den)


def ref_pixel_solid_angle(face_size, a0, b0):
    """Exact solid angle of the pixel quad centered at plane coords (a0, b0)."""
    h = 1.0 / face_size

    def v(a, b):
        d = np.array([a, b, 1.0])
        return d / np.linalg.norm(d)

    c = [v(a0 - h, b0 - h), v(a0 + h, b0 - h), v(a0 + h, b0 + h), v(a0 - h, b0 + h)]
    return ref_solid_angle_triangle(c[0], c[1], c[2]) + ref_solid_angle_triangle(
        c[0], c[2], c[3]
    )


class TestRotationToRay:
    def test_identity_for_forward(self):
        q = rotation_to_ray(np.array([[0.0, 0.0, 1.0]]))
        assert np.allclose(q[0], [1.0, 0.0, 0.0, 0.0], atol=1e-15)

    def test_antipodal_fallback(self):
        q = rotation_to_ray(np.array([[0.0, 0.0, -1.0]]))
        assert np.allclose(q[0], [0.0, 1.0, 0.0, 0.0], atol=1e-15)
        R = quat_to_matrix(q)[0]
        assert np.allclose(R @ [0, 0, 1], [0, 0, -1], atol=1e-12)

    def test_rotates_z_onto_direction(self, rng):
        d = rng.standard_normal((1000, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        q = rotation_to_ray(d)
        assert np.abs(np.linalg.norm(q, axis=1) - 1.0).max() < 1e-12
        R = quat_to_matrix(q)
        got = R @ np.array([0.0, 0.0, 1.0])
        assert np.abs(got - d).max() < 1e-6

    def test_near_antipodal_stays_accurate(self):
        eps = np.array([1e-12, 1e-9, 1e-7, 1e-5])
        d = np.stack([eps, np.zeros(4), -np.sqrt(1 - eps * eps)], axis=1)
        q = rotation_to_ray(d)
        got = quat_to_matrix(q) @ np.array([0.0, 0.0, 1.0])
        assert np.abs(got - d).max() < 1e-6

    def test_matrix_matches_scipy(self, rng):
        q = rng.standard_normal((200, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        got = quat_to_matrix(q)
        # scipy uses scalar-last (x, y, z, w) order
        ref = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
        assert np.abs(got - ref).max() < 1e-12


class TestPixelAngularExtent:
    def test_center_pixel(self):
        assert pixel_angular_extent(64, 0.0, 0.0) == pytest.approx(
            2 * math.atan(1 / 64), abs=1e-15
        )

    def test_corner_obliquity_ratio(self):
        r = pixel_angular_extent(64, 1.0, 1.0) / pixel_angular_extent(64, 0.0, 0.0)
        assert r == pytest.approx(3.0 ** -0.75, abs=1e-12)

    def test_squared_extent_matches_exact_solid_angle(self):
        # solid-angle consistency across the face, spherical-quad oracle
        S = 64
        for a0, b0 in [(0.0, 0.0), (0.5, 0.25), (0.984375, 0.984375), (-0.75, 0.5)]:
            delta = pixel_angular_extent(S, a0, b0)
            omega = ref_pixel_solid_angle(S, a0, b0)
            assert delta * delta == pytest.approx(omega, rel=2e-3), (a0, b0)


class TestLiftFace:
    def test_center_pixel_of_back_face(self):
        rgb = np.ones((9, 9, 3))
        inv = InverseDepthMap(np.full((9, 9), 0.5))
        gset = lift_face(rgb, inv, FaceCamera(FaceId.NZ, 9))
        center = gset.means[4 * 9 + 4]
        assert np.abs(center - np.array([0.0, 0.0, -2.0])).max() < 1e-9

    def test_opacity_logit_value(self):
        rgb = np.zeros((8, 8, 3))
        inv = InverseDepthMap(np.ones((8, 8)))
        gset = lift_face(rgb, inv, FaceCamera(FaceId.PZ, 8),
                         LiftParams(initial_opacity=0.8))
        assert np.abs(gset.opacity_logits - 1.3862944).max() < 1e-6

    def test_white_color_transform(self):
        rgb = np.ones((8, 8, 3))
        inv = InverseDepthMap(np.ones((8, 8)))
        gset = lift_face(rgb, inv, FaceCamera(FaceId.PZ, 8))
        assert np.abs(gset.sh_dc - 1.77245385).max() < 1e-6

    def test_room_back_face_means_on_wall(self):
        room = CubeRoom()
        rgb, inv = face_ground_truth(room, (0, 0, 0), FaceId.NZ, 32)
        gset = lift_face(rgb, InverseDepthMap(inv), FaceCamera(FaceId.NZ, 32))
        assert len(gset) == 1024
        assert np.abs(gset.means[:, 2] + 2.0).max() < 1e-4
        assert np.abs(gset.means[:, :2]).max() <= 2.0 + 1e-4

    def test_depth_constraint_invariant(self, rng):
        vals = rng.uniform(0.2, 1.0, (16, 16))
        inv = InverseDepthMap(vals)
        cam = FaceCamera(FaceId.PX, 16, center=(0.3, -0.2, 0.1))
        gset = lift_face(rng.random((16, 16, 3)), inv, cam)
        d = 1.0 / vals.ravel()
        r = np.linalg.norm(gset.means.astype(np.float64) - cam.center, axis=1)
        assert np.all(np.abs(r - d) < 1e-6 * d)

    def test_scale_doubles_with_depth(self, rng):
        rgb = rng.random((8, 8, 3))
        near = lift_face(rgb, InverseDepthMap(np.full((8, 8), 1.0)),
                         FaceCamera(FaceId.PY, 8))
        far = lift_face(rgb, InverseDepthMap(np.full((8, 8), 0.5)),
                        FaceCamera(FaceId.PY, 8))
        dl = far.log_scales.astype(np.float64) - near.log_scales.astype(np.float64)
        assert np.abs(dl - math.log(2.0)).max() < 1e-6

    def test_thin_axis_ratio(self):
        gset = lift_face(
            np.zeros((8, 8, 3)), InverseDepthMap(np.ones((8, 8))),
            FaceCamera(FaceId.PZ, 8), LiftParams(thin_axis_ratio=0.2),
        )
        dl = gset.log_scales[:, 2].astype(np.float64) - gset.log_scales[:, 0].astype(np.float64)
        assert np.abs(dl - math.log(0.2)).max() < 1e-6
        assert np.array_equal(gset.log_scales[:, 0], gset.log_scales[:, 1])

    def test_rotation_carries_ray(self):
        cam = FaceCamera(FaceId.NX, 12)
        gset = lift_face(np.zeros((12, 12, 3)),
                         InverseDepthMap(np.full((12, 12), 0.5)), cam)
        rays = cam.ray_directions().reshape(-1, 3)
        got = quat_to_matrix(gset.rotations.astype(np.float64)) @ np.array([0.0, 0.0, 1.0])
        assert np.abs(got - rays).max() < 1e-6

    def test_masked_pixels_skipped_exactly(self, rng):
        vals = rng.uniform(0.3, 1.0, (32, 32))
        mask = np.ones((32, 32), dtype=bool)
        drop = rng.choice(1024, size=31, replace=False)
        mask.ravel()[drop] = False
        gset = lift_face(rng.random((32, 32, 3)),
                         InverseDepthMap(vals, mask), FaceCamera(FaceId.PZ, 32))
        assert len(gset) == count_budget(32, 1) - 31
        assert gset.stats["skipped"] == 31
        assert gset.stats["count"] == len(gset)

    def test_stride_subsampling(self):
        gset = lift_face(np.zeros((16, 16, 3)),
                         InverseDepthMap(np.ones((16, 16))),
                         FaceCamera(FaceId.PZ, 16), LiftParams(stride=4))
        assert len(gset) == 16

    def test_nan_rejected(self):
        rgb = np.zeros((8, 8, 3))
        rgb[3, 3, 1] = np.nan
        with pytest.raises(DataError):
            lift_face(rgb, InverseDepthMap(np.ones((8, 8))), FaceCamera(FaceId.PZ, 8))

    def test_resolution_mismatch_rejected(self):
        with pytest.raises(ArgumentError):
            lift_face(np.zeros((8, 8, 3)), InverseDepthMap(np.ones((9, 9))),
                      FaceCamera(FaceId.PZ, 8))

    def test_stats_depth_range(self):
        vals = np.full((8, 8), 0.25)
        vals[0, 0] = 0.5
        gset = lift_face(np.zeros((8, 8, 3)), InverseDepthMap(vals),
                         FaceCamera(FaceId.PZ, 8))
        assert gset.stats["depth_min"] == pytest.approx(2.0)
        assert gset.stats["depth_max"] == pytest.approx(4.0)


class TestCountBudget:
    def test_known_values(self):
        assert count_budget(512, 1) == 262144
        assert count_budget(512, 2) == 65536
        assert count_budget(10, 3) == 16

    def test_bad_stride(self):
        with pytest.raises(ArgumentError):
            count_budget(8, 0)


class TestGaussianSet:
    def test_arrays_coerced_to_float32(self, rng):
        g = GaussianSet(
            rng.standard_normal((5, 3)), rng.standard_normal((5, 3)),
            np.tile([1.0, 0, 0, 0], (5, 1)), rng.standard_normal(5),
            rng.standard_normal((5, 3)),
        )
        for arr in (g.means, g.log_scales, g.rotations, g.opacity_logits, g.sh_dc):
            assert arr.dtype == np.float32

    def test_length_mismatch_rejected(self):
        with pytest.raises(ArgumentError):
            GaussianSet(np.zeros((3, 3)), np.zeros((2, 3)), np.zeros((3, 4)),
                        np.zeros(3), np.zeros((3, 3)))

    def test_take_preserves_face(self):
        g = GaussianSet.empty(FaceId.PX)
        assert len(g) == 0
        assert g.take(np.zeros(0, dtype=bool)).source_face == FaceId.PX

    def test_validate_catches_bad_quaternions(self):
        g = GaussianSet(np.zeros((1, 3)), np.zeros((1, 3)),
                        np.array([[0.5, 0, 0, 0]]), np.zeros(1), np.zeros((1, 3)))
        with pytest.raises(DataError):
            g.validate()

    def test_validate_catches_non_finite(self):
        g = GaussianSet(np.array([[np.inf, 0, 0]], dtype=np.float32),
                        np.zeros((1, 3)), np.array([[1.0, 0, 0, 0]]),
                        np.zeros(1), np.zeros((1, 3)))
        with pytest.raises(DataError):
            g.validate()

    def test_params_validated(self):
        with pytest.raises(ArgumentError):
            LiftParams(scale_gain=0.0)
        with pytest.raises(ArgumentError):
            LiftParams(initial_opacity=1.0)
        with pytest.raises(ArgumentError):
            LiftParams(stride=0)

import math

import numpy as np
import pytest

from panolift.errors import ArgumentError
from panolift.geometry import FaceId
from panolift.synthroom import (
    CubeRoom,
    analytic_depth,
    face_ground_truth,
    face_inverse_depth,
    render_ground_truth,
    smooth_panorama,
    wall_color,
    wall_face_id,
)


def ref_wall_distance(half, p, d):
    """Nearest positive intersection with the six wall planes, checked per plane."""
    best = math.inf
    for axis in range(3):
        if d[axis] == 0.0:
            continue
        for wall in (half, -half):
            t = (wall - p[axis]) / d[axis]
            if t <= 0:
                continue
            q = p + t * d
            others = [q[k] for k in range(3) if k != axis]
            if all(abs(v) <= half + 1e-9 for v in others):
                best = min(best, t)
    return best


class TestAnalyticDepth:
    def test_axis_examples(self):
        room = CubeRoom()
        assert analytic_depth(room, (0, 0, 0), np.array([0.0, 0.0, -1.0])) == 2.0
        assert analytic_depth(room, (1, 0, 0), np.array([1.0, 0.0, 0.0])) == 1.0
        assert analytic_depth(room, (0, 0, 0), np.array([0.0, 1.0, 0.0])) == 2.0

    def test_corner_direction(self):
        room = CubeRoom()
        d = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
        got = analytic_depth(room, (0, 0, 0), d)
        assert got == pytest.approx(2.0 * math.sqrt(3.0), abs=1e-12)
        assert got == pytest.approx(3.46410162, abs=1e-8)

    def test_matches_plane_intersection_oracle(self, rng):
        room = CubeRoom(half_extent=1.7, center=(0.2, -0.1, 0.4))
        pos = room.center + rng.uniform(-1.2, 1.2, 3)
        dirs = rng.standard_normal((500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        got = analytic_depth(room, pos, dirs)
        p = pos - room.center
        for i in range(len(dirs)):
            assert got[i] == pytest.approx(
                ref_wall_distance(1.7, p, dirs[i]), abs=1e-9)

    def test_off_center_position(self):
        room = CubeRoom()
        assert analytic_depth(room, (0.0, 0.0, 1.5), np.array([0.0, 0.0, 1.0])) == 0.5
        assert analytic_depth(room, (0.0, 0.0, 1.5), np.array([0.0, 0.0, -1.0])) == 3.5

    def test_outside_position_rejected(self):
        room = CubeRoom()
        with pytest.raises(ArgumentError):
            analytic_depth(room, (2.0, 0, 0), np.array([1.0, 0, 0]))
        with pytest.raises(ArgumentError):
            room.require_inside((0, -2.5, 0))

    def test_bad_room_rejected(self):
        with pytest.raises(ArgumentError):
            CubeRoom(half_extent=0.0)


class TestWalls:
    def test_wall_face_ids(self):
        assert wall_face_id(0, True) is FaceId.PX
        assert wall_face_id(0, False) is FaceId.NX
        assert wall_face_id(1, True) is FaceId.PY
        assert wall_face_id(2, False) is FaceId.NZ

    def test_checker_parity_on_back_wall(self):
        room = CubeRoom(checker_size=0.5)
        hits = np.array([[0.1, 0.1, -2.0], [0.6, 0.1, -2.0], [0.6, 0.6, -2.0]])
        got = wall_color(room, np.full(3, 2), np.zeros(3, dtype=bool), hits)
        c0, c1 = room.palette[FaceId.NZ]
        assert np.allclose(got[0], c0)
        assert np.allclose(got[1], c1)
        assert np.allclose(got[2], c0)

    def test_palette_colors_distinct(self):
        room = CubeRoom()
        for fid, (c0, c1) in room.palette.items():
            assert c0 != c1, fid


class TestGroundTruth:
    def test_inverse_depth_range_from_center(self):
        room = CubeRoom()
        _, inv, mask = render_ground_truth(room, (0, 0, 0), 1024, 512)
        assert mask.all()
        lo = 1.0 / (2.0 * math.sqrt(3.0))
        assert inv.min() >= lo - 1e-9
        assert inv.max() <= 0.5 + 1e-9
        assert inv.max() > 0.4999
        # nearest pixel center sits ~half a pixel pitch off the corner direction
        assert inv.min() < lo * 1.005

    def test_checker_edges_on_gridlines(self):
        # every rendered color change along the equator sits within one pixel
        # of an analytic checker gridline or cube corner, and vice versa
        # (0.5 m cells give denser edge coverage than the default room)
        room = CubeRoom(checker_size=0.5)
        W, H = 2048, 1024
        rgb, _, _ = render_ground_truth(room, (0, 0, 0), W, H)
        row = rgb[H // 2 - 1]

        thetas = []
        for c in np.arange(-1.5, 1.75, 0.5):
            thetas.append(math.atan2(c, 2.0))    # z = -2 wall, x gridlines
            thetas.append(math.atan2(c, -2.0))   # z = +2 wall
            thetas.append(math.atan2(2.0, -c))   # x = +2 wall, z gridlines
            thetas.append(math.atan2(-2.0, -c))  # x = -2 wall
        thetas += [math.pi / 4, -math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4]
        bounds = np.array([(t + math.pi) * W / (2 * math.pi) - 0.5 for t in thetas]) % W

        diff = np.abs(row - np.roll(row, -1, axis=0)).max(axis=1)
        changes = np.where(diff > 0.01)[0] + 0.5

        for c in changes:
            d = np.min(np.minimum(np.abs(bounds - c), W - np.abs(bounds - c)))
            assert d <= 1.0, f"change at column {c} off-grid by {d}"
        for b in bounds:
            d = np.min(np.minimum(np.abs(changes - b), W - np.abs(changes - b)))
            assert d <= 1.0, f"gridline at {b} has no rendered edge within {d}"

    def test_face_center_pixel_inverse_depth(self):
        room = CubeRoom()
        rgb, inv = face_ground_truth(room, (0, 0, 0), FaceId.NZ, 9)
        assert rgb.shape == (9, 9, 3)
        assert inv[4, 4] == pytest.approx(0.5, abs=1e-12)
        assert inv.min() >= 1.0 / (2.0 * math.sqrt(3.0)) - 1e-9

    def test_face_colors_come_from_own_wall(self):
        room = CubeRoom()
        rgb, _ = face_ground_truth(room, (0, 0, 0), FaceId.PY, 16)
        allowed = np.array(room.palette[FaceId.PY])
        flat = rgb.reshape(-1, 3)
        match = np.min(np.abs(flat[:, None, :] - allowed[None]).max(axis=2), axis=1)
        assert match.max() < 1e-12


class TestProviderStyleMaps:
    def test_scale_is_multiplicative(self):
        room = CubeRoom()
        base = face_inverse_depth(room, (0, 0, 0), FaceId.PX, 32)
        scaled = face_inverse_depth(room, (0, 0, 0), FaceId.PX, 32, scale=0.7)
        assert np.allclose(scaled, 0.7 * base, atol=1e-15)

    def test_texture_bounded_and_nonzero(self):
        room = CubeRoom()
        base = face_inverse_depth(room, (0, 0, 0), FaceId.NX, 64)
        tex = face_inverse_depth(room, (0, 0, 0), FaceId.NX, 64,
                                 texture_amp=0.05, texture_cycles=8.0)
        delta = tex - base
        assert np.abs(delta).max() <= 0.05 + 1e-12
        assert np.abs(delta).max() > 0.01


class TestSmoothPanorama:
    def test_shape_range_determinism(self):
        a = smooth_panorama(64, 32)
        b = smooth_panorama(64, 32)
        assert a.shape == (32, 64, 3)
        assert a.min() >= 0.0 and a.max() <= 1.0
        assert np.array_equal(a, b)

    def test_is_smooth_across_columns(self):
        img = smooth_panorama(256, 128)
        step = np.abs(np.diff(img, axis=1)).max()
        assert step < 0.08

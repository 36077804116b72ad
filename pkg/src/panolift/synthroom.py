"""Analytic cube-room scene used as ground truth in tests and demos.

An axis-aligned cubic room with checkerboard walls has closed-form
ray-wall distances, so panoramas, per-face views, and depth maps can be
generated with known-exact geometry.  Corruption knobs (per-face depth
scale, additive high-frequency texture) produce controlled inputs for the
fusion and seam-consistency experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .geometry import FACE_ORDER, FaceId, face_directions, pixel_to_direction

# two checker colors per wall, keyed by the outward axis the wall sits on
_DEFAULT_PALETTE = {
    FaceId.PX: ((0.85, 0.25, 0.25), (0.95, 0.85, 0.80)),
    FaceId.NX: ((0.25, 0.55, 0.85), (0.85, 0.92, 0.95)),
    FaceId.PY: ((0.80, 0.80, 0.30), (0.95, 0.95, 0.85)),
    FaceId.NY: ((0.35, 0.30, 0.25), (0.75, 0.70, 0.60)),
    FaceId.PZ: ((0.30, 0.75, 0.40), (0.88, 0.95, 0.85)),
    FaceId.NZ: ((0.60, 0.35, 0.75), (0.92, 0.88, 0.95)),
}

# which two axes parameterize the checker pattern on each wall
_WALL_UV_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


@dataclass
class CubeRoom:
    half_extent: float = 2.0
    checker_size: float = 1.0
    palette: dict = field(default_factory=lambda: dict(_DEFAULT_PALETTE))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.half_extent <= 0:
            raise ArgumentError("half_extent must be positive")
        self.center = np.asarray(self.center, dtype=np.float64)

    def require_inside(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.float64)
        if np.max(np.abs(pos - self.center)) >= self.half_extent:
            raise ArgumentError("position lies outside the room")
        return pos


def analytic_depth(room: CubeRoom, pos, dirs) -> np.ndarray:
    """Exact distance to the room wall along unit direction(s); shape of dirs[..., 0]."""
    pos = room.require_inside(pos)
    d = np.asarray(dirs, dtype=np.float64)
    p = pos - room.center
    with np.errstate(divide="ignore", invalid="ignore"):
        # distance to the slab boundary each axis exits through
        t_axis = (room.half_extent * np.sign(d) - p) / d
    t_axis = np.where(d == 0.0, np.inf, t_axis)
    return np.min(t_axis, axis=-1)


def _hit_info(room: CubeRoom, pos, dirs):
    """Depth plus wall id and in-wall uv coordinates of each hit."""
    pos = room.require_inside(pos)
    d = np.asarray(dirs, dtype=np.float64)
    p = pos - room.center
    with np.errstate(divide="ignore", invalid="ignore"):
        t_axis = (room.half_extent * np.sign(d) - p) / d
    t_axis = np.where(d == 0.0, np.inf, t_axis)
    axis = np.argmin(t_axis, axis=-1)
    depth = np.take_along_axis(t_axis, axis[..., None], axis=-1)[..., 0]
    hit = p + depth[..., None] * d
    sign_pos = np.take_along_axis(d, axis[..., None], axis=-1)[..., 0] > 0
    return depth, axis, sign_pos, hit


def wall_face_id(axis: int, sign_positive: bool) -> FaceId:
    return FaceId(axis * 2 + (0 if sign_positive else 1))


def wall_color(room: CubeRoom, axis, sign_positive, hit) -> np.ndarray:
    """Checkerboard color at hit points given the wall each ray struck."""
    axis = np.asarray(axis)
    sign_positive = np.asarray(sign_positive)
    hit = np.asarray(hit)
    out = np.zeros(hit.shape[:-1] + (3,), dtype=np.float64)
    cs = room.checker_size
    h = room.half_extent
    for ax in range(3):
        ua, va = _WALL_UV_AXES[ax]
        for sp in (True, False):
            sel = (axis == ax) & (sign_positive == sp)
            if not sel.any():
                continue
            u = hit[sel][:, ua] + h
            v = hit[sel][:, va] + h
            checker = (np.floor(u / cs) + np.floor(v / cs)).astype(np.int64) % 2
            c0, c1 = room.palette[wall_face_id(ax, sp)]
            colors = np.where(checker[:, None] == 0, np.array(c0), np.array(c1))
            out[sel] = colors
    return out


def render_ground_truth(room: CubeRoom, pos, width: int, height: int):
    """Panorama RGB plus exact inverse depth (values, mask) from `pos`."""
    if width != 2 * height:
        raise ArgumentError("panorama must be 2:1")
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    dirs = pixel_to_direction(uu, vv, width, height)
    depth, axis, sp, hit = _hit_info(room, pos, dirs)
    rgb = wall_color(room, axis, sp, hit)
    inv = 1.0 / depth
    return rgb, inv, np.ones_like(inv, dtype=bool)


def face_ground_truth(room: CubeRoom, pos, face_id: FaceId, face_size: int):
    """Face RGB plus exact inverse radial depth for one cube face view."""
    pos = room.require_inside(pos)
    dirs = face_directions(face_id, face_size)
    depth, axis, sp, hit = _hit_info(room, pos, dirs)
    rgb = wall_color(room, axis, sp, hit)
    return rgb, 1.0 / depth


def face_inverse_depth(
    room: CubeRoom,
    pos,
    face_id: FaceId,
    face_size: int,
    scale: float = 1.0,
    texture_amp: float = 0.0,
    texture_cycles: float = 24.0,
) -> np.ndarray:
    """Per-face inverse depth with the two corruption knobs.

    `scale` multiplies inverse depth (a per-face scale error); `texture_amp`
    adds a sinusoidal high-frequency component (in 1/m) with `texture_cycles`
    periods across the face.
    """
    pos = room.require_inside(pos)
    dirs = face_directions(face_id, face_size)
    inv = scale / analytic_depth(room, pos, dirs)
    if texture_amp != 0.0:
        x = (np.arange(face_size) + 0.5) / face_size
        gx = np.sin(2.0 * np.pi * texture_cycles * x)[None, :]
        gy = np.sin(2.0 * np.pi * texture_cycles * x)[:, None]
        inv = inv + texture_amp * gx * gy
    return inv


def smooth_panorama(width: int, height: int) -> np.ndarray:
    """Low-frequency RGB panorama, continuous on the sphere (round-trip tests)."""
    if width != 2 * height:
        raise ArgumentError("panorama must be 2:1")
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    d = pixel_to_direction(uu, vv, width, height)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    r = 0.5 + 0.25 * x + 0.15 * y * z
    g = 0.5 + 0.25 * y + 0.10 * x * x - 0.05
    b = 0.5 - 0.20 * z + 0.15 * x * y
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)

"""Depth-constrained Gaussian generation from per-face RGB + inverse depth.

Each valid pixel becomes one 3D Gaussian placed exactly at its metric depth
along the pixel ray.  Footprints are isotropic tangentially and flattened
along the ray; the tangential size is the pixel's angular extent times the
depth, so neighboring splats tile the surface they sample at any distance.
The parameterization (scale gain, opacity, thin-axis ratio, stride) is
deliberately explicit: it is a stand-in for learned initialization and is
tuned against the re-rendering fidelity test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError
from .fusion import InverseDepthMap
from .geometry import FaceCamera, FaceId

SH_DC_BASIS = 0.28209479177
_LOG_SCALE_MIN = math.log(1e-6) + 1e-9
_LOG_SCALE_MAX = math.log(1e3) - 1e-9


@dataclass(frozen=True)
class LiftParams:
    scale_gain: float = 1.0
    initial_opacity: float = 0.8
    thin_axis_ratio: float = 0.2
    stride: int = 1

    def __post_init__(self):
        if self.scale_gain <= 0:
            raise ArgumentError("scale_gain must be positive")
        if not 0.0 < self.initial_opacity < 1.0:
            raise ArgumentError("initial_opacity must be in (0, 1)")
        if not 0.0 < self.thin_axis_ratio <= 1.0:
            raise ArgumentError("thin_axis_ratio must be in (0, 1]")
        if self.stride < 1:
            raise ArgumentError("stride must be >= 1")


@dataclass
class GaussianSet:
    """Struct-of-arrays Gaussian collection; float32 to match on-disk layout."""

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh_dc: np.ndarray
    source_face: FaceId = None
    stats: dict = None

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float32).reshape(-1, 3)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32).reshape(-1, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32).reshape(-1, 4)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float32).reshape(-1)
        self.sh_dc = np.ascontiguousarray(self.sh_dc, dtype=np.float32).reshape(-1, 3)
        n = len(self.means)
        for name in ("log_scales", "rotations", "opacity_logits", "sh_dc"):
            if len(getattr(self, name)) != n:
                raise ArgumentError(f"{name} length {len(getattr(self, name))} != {n}")

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def empty(cls, source_face=None) -> "GaussianSet":
        z = np.zeros((0, 3), dtype=np.float32)
        return cls(z, z.copy(), np.zeros((0, 4), dtype=np.float32),
                   np.zeros(0, dtype=np.float32), z.copy(), source_face)

    def take(self, index) -> "GaussianSet":
        return GaussianSet(
            self.means[index], self.log_scales[index], self.rotations[index],
            self.opacity_logits[index], self.sh_dc[index], self.source_face,
        )

    def validate(self):
        for name in ("means", "log_scales", "rotations", "opacity_logits", "sh_dc"):
            if not np.isfinite(getattr(self, name)).all():
                raise DataError(f"non-finite values in {name}")
        if len(self) and np.abs(np.linalg.norm(self.rotations.astype(np.float64), axis=1) - 1.0).max() > 1e-5:
            raise DataError("rotations are not unit quaternions")


def rotation_to_ray(dirs: np.ndarray) -> np.ndarray:
    """Unit quaternions (w,x,y,z) rotating +Z onto each unit direction.

    Half-angle form: axis = normalize(z × d), cos(θ/2) = sqrt((1+dz)/2),
    sin(θ/2) = sqrt((1-dz)/2).  Stays exact through the antipodal case,
    where the axis degenerates and defaults to +X (a 180-degree turn).
    """
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    nxy = np.hypot(dx, dy)
    safe = nxy > 1e-30
    ux = np.where(safe, -dy / np.where(safe, nxy, 1.0), 1.0)
    uy = np.where(safe, dx / np.where(safe, nxy, 1.0), 0.0)
    c = np.sqrt(np.clip(1.0 + dz, 0.0, 2.0) / 2.0)
    s = np.sqrt(np.clip(1.0 - dz, 0.0, 2.0) / 2.0)
    q = np.stack([c, s * ux, s * uy, np.zeros(len(d))], axis=1)
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """(N,4) unit quaternions (w,x,y,z) to (N,3,3) rotation matrices."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((len(q), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def pixel_angular_extent(face_size: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Angular size of a face pixel along each tangential axis at obliquity (a, b).

    2*atan(1/S) on the face axis, shrinking with the standard cubemap
    solid-angle factor (1 + a^2 + b^2)^(-3/4) toward corners so the per-pixel
    solid angle is matched exactly.
    """
    return 2.0 * math.atan(1.0 / face_size) * (1.0 + a * a + b * b) ** (-0.75)


def lift_face(rgb: np.ndarray, inv_depth: InverseDepthMap, cam: FaceCamera,
              p: LiftParams = LiftParams()) -> GaussianSet:
    """One Gaussian per valid (stride-subsampled) pixel, placed at its depth."""
    rgb = np.asarray(rgb, dtype=np.float64)
    s = cam.face_size
    if rgb.shape[:2] != (s, s) or inv_depth.values.shape != (s, s):
        raise ArgumentError("rgb and inverse depth must match the camera's face size")
    if np.isnan(rgb).any() or np.isnan(inv_depth.values).any():
        raise DataError("NaN in lift inputs")
    st = p.stride
    ys, xs = np.mgrid[0:s:st, 0:s:st]
    valid = inv_depth.mask[ys, xs] & (inv_depth.values[ys, xs] > 0)
    skipped = int(valid.size - valid.sum())
    xs, ys = xs[valid], ys[valid]
    inv = inv_depth.values[ys, xs]
    colors = rgb[ys, xs]

    a = (xs + 0.5) * (2.0 / s) - 1.0
    b = (ys + 0.5) * (2.0 / s) - 1.0
    A, Bv, C = (np.asarray(v, dtype=np.float64) for v in
                (cam.rotation[:, 0], -cam.rotation[:, 1], cam.rotation[:, 2]))
    rays = a[:, None] * A + b[:, None] * Bv + C
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)

    d = 1.0 / inv
    means = np.asarray(cam.center, dtype=np.float64) + d[:, None] * rays
    s_t = p.scale_gain * d * pixel_angular_extent(s, a, b)
    s_r = p.thin_axis_ratio * s_t
    log_scales = np.clip(
        np.log(np.stack([s_t, s_t, s_r], axis=1)), _LOG_SCALE_MIN, _LOG_SCALE_MAX
    )
    rotations = rotation_to_ray(rays)
    logit = math.log(p.initial_opacity / (1.0 - p.initial_opacity))
    sh_dc = (colors - 0.5) / SH_DC_BASIS

    out = GaussianSet(
        means, log_scales, rotations,
        np.full(len(means), logit), sh_dc, source_face=cam.face_id,
    )
    dvals = d if len(d) else np.array([np.nan])
    out.stats = {
        "count": len(out),
        "skipped": skipped,
        "depth_min": float(np.nanmin(dvals)) if len(d) else None,
        "depth_max": float(np.nanmax(dvals)) if len(d) else None,
    }
    return out


def count_budget(face_size: int, stride: int) -> int:
    """Upper bound on lifted Gaussians (exact when every pixel is valid)."""
    if stride < 1:
        raise ArgumentError("stride must be >= 1")
    return math.ceil(face_size / stride) ** 2

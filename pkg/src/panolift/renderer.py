"""Software tile-based 3D Gaussian splat rasterizer.

Splats are projected to screen-space ellipses (EWA-style), binned into
tiles, and alpha-composited front to back in one global depth order with
index tie-breaks.  Outputs are bit-identical across tile sizes and thread
counts; three rules make that hold:

- contributions are zeroed semantically (Mahalanobis cutoff, alpha
  threshold, transmittance floor), so tile binning only decides what gets
  *computed*, never what gets *composited*;
- per-pixel accumulation runs in chunks bounded at fixed global-rank
  positions, so every pixel's floating-point expression tree is the same
  no matter which tile list it was reached through (extra zero-weight
  entries multiply by 1.0 / add 0.0, which are exact no-ops);
- accumulation uses sequential cumsum/cumprod, never pairwise reductions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .geometry import FACE_ORDER, CubemapFaceSet, FaceCamera, FaceId, cubemap_to_equirect
from .lifting import SH_DC_BASIS, GaussianSet, quat_to_matrix

_CHUNK = 2048  # fixed compositing block length in global-rank units
_COV_DILATION = 0.3
_ALPHA_CEIL = 0.999


@dataclass(frozen=True)
class RenderSettings:
    tile_size: int = 16
    alpha_threshold: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    background: tuple = (0.0, 0.0, 0.0)
    gaussian_cutoff: float = 3.0

    def __post_init__(self):
        if self.tile_size not in (8, 16, 32):
            raise ArgumentError("tile_size must be 8, 16, or 32")
        if not 0.0 < self.alpha_threshold < 1.0:
            raise ArgumentError("alpha_threshold must be in (0, 1)")
        if not 0.0 < self.transmittance_floor < 1.0:
            raise ArgumentError("transmittance_floor must be in (0, 1)")
        if self.gaussian_cutoff <= 0:
            raise ArgumentError("gaussian_cutoff must be positive")


@dataclass(frozen=True)
class PinholeCamera:
    """Perspective camera; `rotation` maps world to camera coordinates.

    The camera frame is x-right, y-up, z-forward and a world point projects
    to u = fx*x/z + cx, v = cy - fy*y/z (pixel i samples at i + 0.5).
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.01

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ArgumentError("focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6:
            raise ArgumentError("camera rotation must be orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def from_face(cls, cam: FaceCamera, near: float = 0.01) -> "PinholeCamera":
        R = cam.rotation.T
        return cls(cam.face_size, cam.face_size, cam.fx, cam.fy, cam.cx, cam.cy,
                   R, -R @ np.asarray(cam.center, dtype=np.float64), near)

    @classmethod
    def look_at(cls, position, target, up, fov_deg: float,
                width: int, height: int, near: float = 0.01) -> "PinholeCamera":
        position = np.asarray(position, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - position
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ArgumentError("look_at target coincides with position")
        fwd = fwd / n
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ArgumentError("up is parallel to the view direction")
        right /= rn
        camup = np.cross(right, fwd)
        # rows (right, up, forward): orthonormal; an image-orientation frame,
        # not necessarily a proper rotation of the world frame
        R = np.stack([right, camup, fwd])
        fx = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(width, height, fx, fx, width / 2.0, height / 2.0,
                   R, -R @ position, near)

    def camera_coords(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass
class Projected:
    """Per-splat screen-space data, already in global compositing order."""

    mean2d: np.ndarray
    icov: np.ndarray       # (N, 3): inverse covariance (a, b, c) with [[a,b],[b,c]]
    radius: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    alpha: np.ndarray
    skipped_near: int = 0
    skipped_frustum: int = 0
    skipped_singular: int = 0

    def __len__(self) -> int:
        return len(self.depth)


def decode_color(sh_dc: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(sh_dc, dtype=np.float64) * SH_DC_BASIS + 0.5, 0.0, 1.0)


_FRUSTUM_MARGIN = 1.3


def project_gaussian(gset: GaussianSet, cam: PinholeCamera, cutoff: float = 3.0) -> Projected:
    """EWA projection of every splat; culls behind-near, off-frustum and singular ones.

    The lateral cull keeps a margin beyond the image so splats straddling the
    border still composite, but drops far-off-axis splats whose linearized
    footprint would otherwise blow up near the camera plane.
    """
    means = gset.means.astype(np.float64)
    t = cam.camera_coords(means)
    infront = t[:, 2] > cam.near
    # written as |x| <= lim*z to stay divide-free; z <= near is already out
    lim_x = _FRUSTUM_MARGIN * cam.width / (2.0 * cam.fx)
    lim_y = _FRUSTUM_MARGIN * cam.height / (2.0 * cam.fy)
    lateral = ((np.abs(t[:, 0]) <= lim_x * t[:, 2]) &
               (np.abs(t[:, 1]) <= lim_y * t[:, 2]))
    keep = infront & lateral
    skipped_near = int((~infront).sum())
    skipped_frustum = int((infront & ~lateral).sum())
    t = t[keep]
    x, y, z = t[:, 0], t[:, 1], t[:, 2]

    R = quat_to_matrix(gset.rotations[keep] /
                       np.linalg.norm(gset.rotations[keep].astype(np.float64),
                                      axis=1, keepdims=True))
    var = np.exp(2.0 * gset.log_scales[keep].astype(np.float64))
    cov_w = np.einsum("nij,nj,nkj->nik", R, var, R)

    n = len(t)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / z
    J[:, 0, 2] = -cam.fx * x / (z * z)
    J[:, 1, 1] = -cam.fy / z
    J[:, 1, 2] = cam.fy * y / (z * z)
    M = np.einsum("nij,jk->nik", J, cam.rotation)
    cov2 = np.einsum("nij,njk,nlk->nil", M, cov_w, M)
    ca = cov2[:, 0, 0] + _COV_DILATION
    cb = cov2[:, 0, 1]
    cc = cov2[:, 1, 1] + _COV_DILATION

    det = ca * cc - cb * cb
    ok = det > 1e-12
    skipped_singular = int(len(det) - ok.sum())
    ca, cb, cc, det = ca[ok], cb[ok], cc[ok], det[ok]
    x, y, z = x[ok], y[ok], z[ok]

    mean2d = np.stack([cam.fx * x / z + cam.cx, cam.cy - cam.fy * y / z], axis=1)
    icov = np.stack([cc / det, -cb / det, ca / det], axis=1)
    half = 0.5 * (ca + cc)
    lam_max = half + np.sqrt(np.maximum((0.5 * (ca - cc)) ** 2 + cb * cb, 0.0))
    radius = cutoff * np.sqrt(lam_max) + 1.0

    idx = np.where(keep)[0][ok]
    color = decode_color(gset.sh_dc[idx])
    alpha = 1.0 / (1.0 + np.exp(-gset.opacity_logits[idx].astype(np.float64)))

    order = np.lexsort((idx, z))
    return Projected(mean2d[order], icov[order], radius[order], z[order],
                     color[order], alpha[order],
                     skipped_near, skipped_frustum, skipped_singular)


def _bin_tiles(proj: Projected, width: int, height: int, tile: int):
    """(tile key, rank) pairs for every tile each splat's bounding box touches."""
    ntx = (width + tile - 1) // tile
    nty = (height + tile - 1) // tile
    x, y = proj.mean2d[:, 0], proj.mean2d[:, 1]
    r = proj.radius
    tx0 = np.clip(np.floor((x - r) / tile).astype(np.int64), 0, ntx - 1)
    tx1 = np.clip(np.floor((x + r) / tile).astype(np.int64), 0, ntx - 1)
    ty0 = np.clip(np.floor((y - r) / tile).astype(np.int64), 0, nty - 1)
    ty1 = np.clip(np.floor((y + r) / tile).astype(np.int64), 0, nty - 1)
    onscreen = (x + r >= 0) & (x - r < width) & (y + r >= 0) & (y - r < height)
    nx = np.where(onscreen, tx1 - tx0 + 1, 0)
    ny = np.where(onscreen, ty1 - ty0 + 1, 0)
    counts = nx * ny
    total = int(counts.sum())
    if total == 0:
        return ntx, nty, np.zeros(0, np.int64), np.zeros(0, np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.repeat(np.arange(len(counts)), counts)
    local = np.arange(total) - offsets[rank]
    dx = local % nx[rank]
    dy = local // nx[rank]
    key = (ty0[rank] + dy) * ntx + (tx0[rank] + dx)
    order = np.argsort(key, kind="stable")  # stable keeps ranks ascending per tile
    return ntx, nty, key[order], rank[order]


def _composite_tile(proj, ranks, px, py, settings, out_rgb, out_alpha,
                    out_wdepth, out_wsum):
    """Front-to-back compositing of one tile; writes into the output slices."""
    p = px.size
    cut2 = settings.gaussian_cutoff ** 2
    color_acc = np.zeros((p, 3))
    wdepth_acc = np.zeros(p)
    wsum_acc = np.zeros(p)
    t_carry = np.ones(p)
    pcx = (px.ravel() + 0.5)[None, :]
    pcy = (py.ravel() + 0.5)[None, :]
    n = len(ranks)
    lo = 0
    while lo < n:
        # chunk boundaries sit at fixed global ranks, not list positions
        chunk_end = (int(ranks[lo]) // _CHUNK + 1) * _CHUNK
        hi = int(np.searchsorted(ranks, chunk_end))
        sel = ranks[lo:hi]
        lo = hi
        dx = pcx - proj.mean2d[sel, 0][:, None]
        dy = pcy - proj.mean2d[sel, 1][:, None]
        q = (proj.icov[sel, 0][:, None] * dx * dx
             + 2.0 * proj.icov[sel, 1][:, None] * dx * dy
             + proj.icov[sel, 2][:, None] * dy * dy)
        ahat = np.minimum(_ALPHA_CEIL, proj.alpha[sel][:, None] * np.exp(-0.5 * q))
        ahat[(q > cut2) | (ahat < settings.alpha_threshold)] = 0.0
        tl = np.cumprod(1.0 - ahat, axis=0)
        t_prev = np.empty_like(tl)
        t_prev[0] = t_carry
        t_prev[1:] = t_carry * tl[:-1]
        w = ahat * t_prev
        w[t_prev < settings.transmittance_floor] = 0.0
        color_acc += np.cumsum(w[:, :, None] * proj.color[sel][:, None, :], axis=0)[-1]
        wdepth_acc += np.cumsum(w * proj.depth[sel][:, None], axis=0)[-1]
        wsum_acc += np.cumsum(w, axis=0)[-1]
        t_carry = t_carry * tl[-1]
    shape = px.shape
    out_alpha[...] = (1.0 - t_carry).reshape(shape)
    out_rgb[...] = (color_acc + t_carry[:, None] * np.asarray(settings.background)).reshape(shape + (3,))
    out_wdepth[...] = wdepth_acc.reshape(shape)
    out_wsum[...] = wsum_acc.reshape(shape)


def _render(scene, cam: PinholeCamera, settings: RenderSettings, threads: int):
    gset = scene.gaussians if hasattr(scene, "gaussians") else scene
    h, w = cam.height, cam.width
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    wdepth = np.zeros((h, w))
    wsum = np.zeros((h, w))
    proj = project_gaussian(gset, cam, settings.gaussian_cutoff)
    if len(proj) == 0:
        rgb[:] = np.asarray(settings.background)
        return rgb, alpha, wdepth, wsum, proj
    tile = settings.tile_size
    ntx, nty, keys, ranks = _bin_tiles(proj, w, h, tile)
    starts = np.searchsorted(keys, np.arange(ntx * nty))
    ends = np.searchsorted(keys, np.arange(ntx * nty) + 1)

    def do_tile(tk):
        ty, tx = divmod(tk, ntx)
        x0, y0 = tx * tile, ty * tile
        x1, y1 = min(x0 + tile, w), min(y0 + tile, h)
        py, px = np.mgrid[y0:y1, x0:x1]
        _composite_tile(proj, ranks[starts[tk]:ends[tk]], px, py, settings,
                        rgb[y0:y1, x0:x1], alpha[y0:y1, x0:x1],
                        wdepth[y0:y1, x0:x1], wsum[y0:y1, x0:x1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(do_tile, range(ntx * nty)))
    else:
        for tk in range(ntx * nty):
            do_tile(tk)
    return rgb, alpha, wdepth, wsum, proj


def render_perspective(scene, cam: PinholeCamera,
                       settings: RenderSettings = RenderSettings(),
                       threads: int = 1):
    """RGB image plus accumulated-alpha map."""
    rgb, alpha, _, _, _ = _render(scene, cam, settings, threads)
    return rgb, alpha


def depth_render(scene, cam: PinholeCamera,
                 settings: RenderSettings = RenderSettings(),
                 threads: int = 1):
    """Expected camera depth under the compositing weights; (depth, valid).

    Pixels whose accumulated alpha is below 0.5 are marked invalid.
    """
    _, alpha, wdepth, wsum, _ = _render(scene, cam, settings, threads)
    valid = alpha >= 0.5
    depth = np.zeros_like(wdepth)
    np.divide(wdepth, wsum, out=depth, where=wsum > 0)
    return depth, valid


def render_equirect(scene, center, width: int, height: int,
                    settings: RenderSettings = RenderSettings(),
                    threads: int = 1):
    """Panorama render from `center` via six face renders; (image, alpha)."""
    if width != 2 * height:
        raise ArgumentError("panorama must be 2:1")
    if height % 2:
        raise ArgumentError("height must be even")
    face_size = height // 2
    color_faces = {}
    alpha_faces = {}
    for fid in FACE_ORDER:
        cam = PinholeCamera.from_face(FaceCamera(fid, face_size, np.asarray(center, dtype=np.float64)))
        img, a = render_perspective(scene, cam, settings, threads)
        color_faces[fid] = img
        alpha_faces[fid] = a
    center = np.asarray(center, dtype=np.float64)
    pano = cubemap_to_equirect(CubemapFaceSet(face_size, color_faces, center), width, height)
    pano_a = cubemap_to_equirect(CubemapFaceSet(face_size, alpha_faces, center), width, height)
    return pano, pano_a

"""Inverse-depth alignment, Laplacian pyramids, and global/detail fusion.

All fusion math happens in inverse-depth space (1/meters): the monocular
scale/shift ambiguity is affine there and interpolation across depth
discontinuities behaves better than in metric space.  The pyramid uses the
5-tap binomial kernel (1,4,6,4,1)/16 with edge-clamp boundaries; fusion
takes the fine band-pass levels from the detail source and the coarse
levels from the global source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, DataError, FormatError, InsufficientDataError

_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
DEFAULT_LEVELS = 4
MIN_INVERSE_DEPTH = 1e-6


@dataclass
class InverseDepthMap:
    """Per-pixel inverse radial distance (1/m) with a validity mask."""

    values: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ArgumentError(f"inverse depth must be 2-D, got shape {self.values.shape}")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ArgumentError("mask shape must match values")
        bad = self.mask & ~(np.isfinite(self.values) & (self.values > 0))
        if bad.any():
            raise DataError(f"{int(bad.sum())} valid pixels are non-positive or non-finite")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def to_inverse(depth, mask=None) -> InverseDepthMap:
    """Pointwise reciprocal of a metric depth map (or back again)."""
    if isinstance(depth, InverseDepthMap):
        mask = depth.mask if mask is None else mask
        depth = depth.values
    depth = np.asarray(depth, dtype=np.float64)
    if mask is None:
        mask = np.ones(depth.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    bad = mask & ~(np.isfinite(depth) & (depth > 0))
    if bad.any():
        raise DataError(f"{int(bad.sum())} valid pixels have non-positive depth")
    out = np.zeros_like(depth, dtype=np.float64)
    out[mask] = 1.0 / depth[mask]
    return InverseDepthMap(np.where(mask, out, 1.0), mask) if not mask.all() else InverseDepthMap(out, mask)


@dataclass
class AffineAlignment:
    a: float
    b: float
    inlier_ratio: float
    degenerate: bool = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a * x + self.b


def align_scale_shift(detail, reference, trim: float = 0.2) -> AffineAlignment:
    """Least-squares (a, b) with a·detail + b ≈ reference over jointly valid pixels.

    With trim > 0 the fit is repeated once after dropping the trim fraction
    of largest absolute residuals.  Constant detail is degenerate: a = 1,
    b = mean difference.
    """
    if not 0.0 <= trim < 0.5:
        raise ArgumentError("trim must be in [0, 0.5)")
    d_map = detail if isinstance(detail, InverseDepthMap) else InverseDepthMap(detail)
    r_map = reference if isinstance(reference, InverseDepthMap) else InverseDepthMap(reference)
    if d_map.values.shape != r_map.values.shape:
        raise ArgumentError("detail and reference must have the same resolution")
    joint = d_map.mask & r_map.mask
    if int(joint.sum()) < 16:
        raise InsufficientDataError(f"only {int(joint.sum())} jointly valid pixels, need 16")
    d = d_map.values[joint]
    r = r_map.values[joint]

    def fit(dv, rv):
        dm, rm = dv.mean(), rv.mean()
        var = np.mean((dv - dm) ** 2)
        if var < 1e-18 * max(1.0, dm * dm):
            return None
        a = np.mean((dv - dm) * (rv - rm)) / var
        return a, rm - a * dm

    first = fit(d, r)
    if first is None:
        return AffineAlignment(1.0, float(r.mean() - d.mean()), 1.0, degenerate=True)
    a, b = first
    ratio = 1.0
    if trim > 0.0:
        res = np.abs(a * d + b - r)
        # the floor keeps ties at ~zero residual: exact data trims nothing
        thr = max(np.quantile(res, 1.0 - trim), 1e-9 * max(1.0, float(np.abs(r).max())))
        keep = res <= thr
        ratio = float(keep.mean())
        refit = fit(d[keep], r[keep])
        if refit is not None:
            a, b = refit
    a = max(float(a), 1e-6)
    return AffineAlignment(a, float(b), ratio)


def _reduce(x: np.ndarray) -> np.ndarray:
    y = ndimage.convolve1d(x, _KERNEL, axis=0, mode="nearest")
    y = ndimage.convolve1d(y, _KERNEL, axis=1, mode="nearest")
    return y[::2, ::2]


def _expand_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    prev = x[np.maximum(np.arange(n) - 1, 0)]
    nxt = x[np.minimum(np.arange(n) + 1, n - 1)]
    even = (prev + 6.0 * x + nxt) / 8.0
    odd = (x + nxt) / 2.0
    out = np.empty((2 * n,) + x.shape[1:], dtype=x.dtype)
    out[0::2] = even
    out[1::2] = odd
    return np.moveaxis(out[:n_out], 0, axis)


def _expand(x: np.ndarray, shape) -> np.ndarray:
    y = _expand_axis(x, shape[0], axis=0)
    return _expand_axis(y, shape[1], axis=1)


@dataclass
class LaplacianPyramid:
    """Band-pass levels [0..L-2] plus the low-pass residual at [L-1]."""

    levels: list
    filled: np.ndarray = None

    @property
    def num_levels(self) -> int:
        return len(self.levels)


def fill_invalid(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace masked-out pixels with their nearest valid neighbor's value."""
    if mask.all():
        return np.array(values, dtype=np.float64)
    if not mask.any():
        raise InsufficientDataError("no valid pixels to fill from")
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    return values[tuple(idx)]


def build_pyramid(x, levels: int = DEFAULT_LEVELS) -> LaplacianPyramid:
    """Decompose into `levels - 1` band-pass images plus a low-pass residual."""
    if isinstance(x, InverseDepthMap):
        filled = None if x.mask.all() else ~x.mask
        g = fill_invalid(x.values, x.mask)
    else:
        filled = None
        g = np.asarray(x, dtype=np.float64)
    if levels < 2:
        raise ArgumentError("need at least 2 pyramid levels")
    if min(g.shape[:2]) < 2 ** (levels - 1):
        raise ArgumentError(
            f"image {g.shape[1]}x{g.shape[0]} too small for {levels} levels"
        )
    out = []
    for _ in range(levels - 1):
        down = _reduce(g)
        out.append(g - _expand(down, g.shape))
        g = down
    out.append(g)
    return LaplacianPyramid(out, filled)


def collapse_pyramid(p: LaplacianPyramid) -> np.ndarray:
    """Invert build_pyramid exactly (up to float rounding)."""
    levels = p.levels
    for k in range(len(levels) - 1):
        a, b = levels[k].shape[0], levels[k + 1].shape[0]
        if b != (a + 1) // 2 or levels[k + 1].shape[1] != (levels[k].shape[1] + 1) // 2:
            raise FormatError(
                f"pyramid level {k + 1} has shape {levels[k + 1].shape}, "
                f"inconsistent with level {k} {levels[k].shape}"
            )
    g = levels[-1]
    for band in reversed(levels[:-1]):
        g = band + _expand(g, band.shape)
    return g


@dataclass
class FusionResult:
    """Fused map plus the intermediate products needed for provenance checks."""

    fused: InverseDepthMap
    alignment: AffineAlignment
    fused_pyramid: LaplacianPyramid
    detail_pyramid: LaplacianPyramid
    global_pyramid: LaplacianPyramid
    pre_clamp: np.ndarray


def fuse(
    global_inv: InverseDepthMap,
    detail_inv: InverseDepthMap,
    crossover: int = 3,
    trim: float = 0.2,
    levels: int = DEFAULT_LEVELS,
    alignment: AffineAlignment = None,
) -> FusionResult:
    """Blend detail high-frequency bands onto the global map's coarse structure.

    The detail map is affine-aligned to the global first (pass `alignment`
    to reuse a fit shared across faces); the output pyramid copies levels
    [0, crossover) from the aligned detail and the rest (including the
    residual) from the global map.
    """
    if not 1 <= crossover <= levels - 1:
        raise ArgumentError(f"crossover must be in [1, {levels - 1}]")
    if global_inv.values.shape != detail_inv.values.shape:
        raise ArgumentError("global and detail maps must share a resolution")
    align = alignment if alignment is not None else align_scale_shift(
        detail_inv, global_inv, trim=trim
    )
    aligned = InverseDepthMap(
        np.maximum(align.apply(detail_inv.values), MIN_INVERSE_DEPTH), detail_inv.mask
    )
    gp = build_pyramid(global_inv, levels)
    dp = build_pyramid(aligned, levels)
    fused_levels = [
        dp.levels[k] if k < crossover else gp.levels[k] for k in range(levels)
    ]
    fp = LaplacianPyramid(fused_levels)
    pre_clamp = collapse_pyramid(fp)
    mask = global_inv.mask & detail_inv.mask
    fused = InverseDepthMap(np.maximum(pre_clamp, MIN_INVERSE_DEPTH), mask)
    return FusionResult(fused, align, fp, dp, gp, pre_clamp)


def resample_inverse_depth(x: InverseDepthMap, new_width: int, new_height: int) -> InverseDepthMap:
    """Bilinear resample in inverse-depth space with conservative mask handling."""
    if new_width < 1 or new_height < 1:
        raise ArgumentError("target dimensions must be positive")
    h, w = x.values.shape
    if (new_width, new_height) == (w, h):
        return InverseDepthMap(x.values.copy(), x.mask.copy())
    sx = (np.arange(new_width) + 0.5) * (w / new_width) - 0.5
    sy = (np.arange(new_height) + 0.5) * (h / new_height) - 0.5
    sx = np.clip(sx, 0.0, w - 1.0)[None, :]
    sy = np.clip(sy, 0.0, h - 1.0)[:, None]
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    v = x.values
    top = v[y0, x0] * (1.0 - fx) + v[y0, x1] * fx
    bot = v[y1, x0] * (1.0 - fx) + v[y1, x1] * fx
    vals = top * (1.0 - fy) + bot * fy
    m = x.mask
    # a target pixel is valid only if every source pixel with nonzero weight is
    wx0, wx1 = (1.0 - fx) > 1e-12, fx > 1e-12
    wy0, wy1 = (1.0 - fy) > 1e-12, fy > 1e-12
    ok = np.ones((new_height, new_width), dtype=bool)
    ok &= m[y0, x0] | ~(wy0 & wx0)
    ok &= m[y0, x1] | ~(wy0 & wx1)
    ok &= m[y1, x0] | ~(wy1 & wx0)
    ok &= m[y1, x1] | ~(wy1 & wx1)
    vals = np.where(ok, vals, 1.0)
    return InverseDepthMap(vals, ok)


def area_downsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor×factor blocks (dims must divide evenly)."""
    h, w = values.shape[:2]
    if h % factor or w % factor:
        raise ArgumentError("dimensions must be divisible by the downsample factor")
    return values.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))

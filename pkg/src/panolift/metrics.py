"""Evaluation: seam depth consistency, PSNR, and stage timing records.

The seam metric samples directions along the 12 cube edges and compares the
two adjacent faces' inverse depth by bilinear lookup; the relative
difference r = |d1 - d2| / mean(d1, d2) is scale-free, so a per-face scale
error of s shows up as exactly 2(s-1)/(s+1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .fusion import InverseDepthMap
from .geometry import FACE_ORDER, FaceCamera, FaceId

# the 12 cube edges as (axis_i, sign_i, axis_j, sign_j, free_axis)
_EDGES = []
for _i in range(3):
    for _j in range(_i + 1, 3):
        _k = 3 - _i - _j
        for _si in (1.0, -1.0):
            for _sj in (1.0, -1.0):
                _EDGES.append((_i, _si, _j, _sj, _k))
assert len(_EDGES) == 12


@dataclass
class EdgeStats:
    face_a: FaceId
    face_b: FaceId
    mean_r: float
    max_r: float
    valid_samples: int
    flagged: bool


@dataclass
class SeamReport:
    edges: list
    mean_r: float
    max_r: float

    def as_table(self) -> str:
        lines = ["edge            mean_r      max_r   samples"]
        for e in self.edges:
            flag = "  (flagged)" if e.flagged else ""
            lines.append(
                f"{e.face_a.label}/{e.face_b.label:<10} {e.mean_r:10.6f} {e.max_r:10.6f} {e.valid_samples:9d}{flag}"
            )
        lines.append(f"{'pooled':<15} {self.mean_r:10.6f} {self.max_r:10.6f}")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "edges": [
                {
                    "faces": [e.face_a.tag, e.face_b.tag],
                    "mean_r": e.mean_r,
                    "max_r": e.max_r,
                    "valid_samples": e.valid_samples,
                    "flagged": e.flagged,
                }
                for e in self.edges
            ],
            "mean_r": self.mean_r,
            "max_r": self.max_r,
        }


def _axis_face(axis: int, sign: float) -> FaceId:
    return FaceId(axis * 2 + (0 if sign > 0 else 1))


def _lookup(depth_map: InverseDepthMap, cam: FaceCamera, dirs: np.ndarray):
    """Bilinear inverse-depth samples; valid only where all taps are valid."""
    u, v, z = cam.project_directions(dirs)
    x = np.clip(u - 0.5, 0.0, cam.face_size - 1.0)
    y = np.clip(v - 0.5, 0.0, cam.face_size - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    fx, fy = x - x0, y - y0
    x1 = np.minimum(x0 + 1, cam.face_size - 1)
    y1 = np.minimum(y0 + 1, cam.face_size - 1)
    vals = depth_map.values
    m = depth_map.mask
    out = (vals[y0, x0] * (1 - fx) * (1 - fy) + vals[y0, x1] * fx * (1 - fy)
           + vals[y1, x0] * (1 - fx) * fy + vals[y1, x1] * fx * fy)
    ok = (z > 0)
    ok &= m[y0, x0] | ~(((1 - fx) * (1 - fy)) > 1e-12)
    ok &= m[y0, x1] | ~((fx * (1 - fy)) > 1e-12)
    ok &= m[y1, x0] | ~(((1 - fx) * fy) > 1e-12)
    ok &= m[y1, x1] | ~((fx * fy) > 1e-12)
    return out, ok


def seam_consistency(face_depths: dict, samples_per_edge: int = 64) -> SeamReport:
    """Relative inverse-depth discontinuity across each of the 12 cube edges."""
    maps = {}
    for fid in FACE_ORDER:
        if fid not in face_depths and fid.tag not in face_depths:
            raise ArgumentError(f"missing face {fid.label}")
        m = face_depths.get(fid, face_depths.get(fid.tag))
        maps[fid] = m if isinstance(m, InverseDepthMap) else InverseDepthMap(m)
    size = maps[FaceId.PX].values.shape[0]
    for fid, m in maps.items():
        if m.values.shape != (size, size):
            raise ArgumentError("all six maps must be square and equally sized")

    edges = []
    all_r = []
    t = -1.0 + 2.0 * (np.arange(samples_per_edge) + 0.5) / samples_per_edge
    for ai, si, aj, sj, ak in _EDGES:
        corner = np.zeros((samples_per_edge, 3))
        corner[:, ai] = si
        corner[:, aj] = sj
        corner[:, ak] = t
        dirs = corner / np.linalg.norm(corner, axis=1, keepdims=True)
        fa, fb = _axis_face(ai, si), _axis_face(aj, sj)
        da, oka = _lookup(maps[fa], FaceCamera(fa, size), dirs)
        db, okb = _lookup(maps[fb], FaceCamera(fb, size), dirs)
        ok = oka & okb
        da, db = da[ok], db[ok]
        r = np.abs(da - db) / ((da + db) / 2.0)
        flagged = len(r) < 8
        edges.append(EdgeStats(
            fa, fb,
            float(r.mean()) if len(r) else float("nan"),
            float(r.max()) if len(r) else float("nan"),
            int(len(r)), flagged,
        ))
        all_r.append(r)
    pooled = np.concatenate(all_r) if all_r else np.zeros(0)
    return SeamReport(
        edges,
        float(pooled.mean()) if len(pooled) else float("nan"),
        float(pooled.max()) if len(pooled) else float("nan"),
    )


def psnr(a: np.ndarray, b: np.ndarray, exclude_polar_fraction: float = 0.0) -> float:
    """10*log10(1/MSE) on [0,1] images; +inf when identical (99 dB in reports)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if not 0.0 <= exclude_polar_fraction < 0.5:
        raise ArgumentError("exclude_polar_fraction must be in [0, 0.5)")
    k = int(round(exclude_polar_fraction * a.shape[0]))
    if k:
        a = a[k:-k]
        b = b[k:-k]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def psnr_db_capped(value: float, cap: float = 99.0) -> float:
    """JSON-safe PSNR (the +inf identical-image sentinel becomes `cap`)."""
    return float(min(value, cap))


@dataclass
class StageTiming:
    stage: str
    wall_ms: float
    peak_rss_bytes: int
    input_dims: str = ""

    def as_dict(self) -> dict:
        return {
            "stage": self.stage,
            "wall_ms": self.wall_ms,
            "peak_rss_bytes": self.peak_rss_bytes,
            "input_dims": self.input_dims,
        }


def timing_report(manifest) -> str:
    """JSON-lines text, one record per pipeline stage plus the total row."""
    stages = manifest["stages"] if isinstance(manifest, dict) else manifest.stages
    records = []
    for st in stages:
        records.append(st.as_dict() if isinstance(st, StageTiming) else dict(st))
    return "\n".join(json.dumps(r, sort_keys=True) for r in records)

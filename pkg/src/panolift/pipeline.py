"""End-to-end orchestration: panorama in, Gaussian scene PLY out.

Stages run in a fixed order (load_panorama, fetch_global_depth,
project_cubemap, fetch_detail_depth, fuse_depth, lift, cull_merge,
save_ply, optional render_eval) with wall-clock and peak-RSS accounting
per stage.  The manifest records a hash over the semantically meaningful
configuration so reruns are verifiable; partial outputs are removed when a
stage fails unless keep_partial is set.
"""

from __future__ import annotations

import hashlib
import json
import resource
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ArgumentError, PanoliftError
from .fileio import read_png, write_png
from .fusion import InverseDepthMap, align_scale_shift, fuse, resample_inverse_depth
from .geometry import (
    FACE_ORDER,
    FaceCamera,
    FaceId,
    equirect_to_cubemap,
    face_directions,
    direction_to_pixel,
    sample_equirect_bilinear,
)
from .lifting import LiftParams, lift_face
from .metrics import StageTiming, psnr, psnr_db_capped, seam_consistency
from .providers import ROLE_DETAIL, ROLE_GLOBAL, DepthRequest, ProviderConfig, fetch_depth
from .renderer import RenderSettings, render_equirect
from .scene import Frustum, Scene, merge, save_ply, sidecar_path

STAGE_ORDER = (
    "load_panorama",
    "fetch_global_depth",
    "project_cubemap",
    "fetch_detail_depth",
    "fuse_depth",
    "lift",
    "cull_merge",
    "save_ply",
    "render_eval",
)

FUSION_MODES = ("fused", "detail_only", "global_only")


@dataclass
class PipelineConfig:
    panorama: object = None
    provider_global: ProviderConfig = field(default_factory=ProviderConfig)
    provider_detail: ProviderConfig = field(default_factory=ProviderConfig)
    face_size: int = None
    ss: int = 2
    levels: int = 4
    crossover: int = 3
    trim: float = 0.2
    fusion_mode: str = "fused"
    per_face_alignment: bool = False
    lift: LiftParams = field(default_factory=LiftParams)
    margin_eps: float = 0.0
    render: RenderSettings = field(default_factory=RenderSettings)
    render_eval: bool = False
    eval_width: int = None
    output_dir: str = "out"
    run_id: str = None
    timing: bool = True
    threads: int = 1
    keep_partial: bool = False

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ArgumentError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.face_size is not None and self.face_size < 8:
            raise ArgumentError("face_size must be >= 8")
        if self.run_id is None:
            self.run_id = uuid.uuid4().hex[:12]

    def semantic_dict(self) -> dict:
        """The configuration fields that affect outputs (hash input)."""

        def provider_part(p: ProviderConfig) -> dict:
            d = {"kind": p.kind, "base_path": p.base_path, "base_url": p.base_url}
            if p.kind == "synthetic":
                s = p.synthetic
                d["synthetic"] = {
                    "half_extent": s.room.half_extent,
                    "checker_size": s.room.checker_size,
                    "center": list(np.asarray(s.room.center, dtype=float)),
                    "position": list(np.asarray(s.position, dtype=float)),
                    "detail_scales": {FaceId(k).tag: float(v) for k, v in s.detail_scales.items()},
                    "texture_amp": s.texture_amp,
                    "texture_cycles": s.texture_cycles,
                    "face_scale": s.face_scale,
                }
            return d

        return {
            "panorama": self.panorama if isinstance(self.panorama, str) else "<in-memory>",
            "provider_global": provider_part(self.provider_global),
            "provider_detail": provider_part(self.provider_detail),
            "face_size": self.face_size,
            "ss": self.ss,
            "levels": self.levels,
            "crossover": self.crossover,
            "trim": self.trim,
            "fusion_mode": self.fusion_mode,
            "per_face_alignment": self.per_face_alignment,
            "lift": asdict(self.lift),
            "margin_eps": self.margin_eps,
            "render": {
                "tile_size": self.render.tile_size,
                "alpha_threshold": self.render.alpha_threshold,
                "transmittance_floor": self.render.transmittance_floor,
                "background": list(self.render.background),
                "gaussian_cutoff": self.render.gaussian_cutoff,
            },
            "render_eval": self.render_eval,
            "eval_width": self.eval_width,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class SceneManifest:
    run_id: str
    config_hash: str
    config: dict
    stages: list = field(default_factory=list)
    face_stats: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "config": self.config,
            "stages": [s.as_dict() for s in self.stages],
            "face_stats": self.face_stats,
            "metrics": self.metrics,
            "outputs": self.outputs,
        }


def _peak_rss_bytes() -> int:
    # ru_maxrss is kilobytes on Linux; this process-wide peak stands in for
    # device memory since everything runs on the CPU
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


class _StageClock:
    def __init__(self, manifest: SceneManifest, enabled: bool):
        self.manifest = manifest
        self.enabled = enabled
        self.total_ms = 0.0

    def run(self, stage: str, fn, input_dims: str = ""):
        t0 = time.perf_counter()
        try:
            result = fn()
        except PanoliftError as exc:
            raise type(exc)(f"stage {stage}: {exc}") from exc
        wall_ms = (time.perf_counter() - t0) * 1000.0
        self.total_ms += wall_ms
        if self.enabled:
            self.manifest.stages.append(
                StageTiming(stage, wall_ms, _peak_rss_bytes(), input_dims)
            )
        return result

    def finish(self):
        if self.enabled:
            self.manifest.stages.append(
                StageTiming("total", self.total_ms, _peak_rss_bytes(), "")
            )


def derive_face_size(height: int) -> int:
    """height/2 rounded to the nearest multiple of 16 (minimum 16)."""
    return max(16, int(round(height / 2 / 16)) * 16)


def project_inverse_to_faces(inv: InverseDepthMap, face_size: int) -> dict:
    """Bilinear per-face sampling of an equirect inverse-depth map."""
    gh, gw = inv.values.shape
    out = {}
    for fid in FACE_ORDER:
        dirs = face_directions(fid, face_size)
        u, v = direction_to_pixel(dirs, gw, gh)
        vals = sample_equirect_bilinear(inv.values, u, v)
        out[fid] = InverseDepthMap(np.maximum(vals, 1e-9))
    return out


def run_pipeline(cfg: PipelineConfig) -> SceneManifest:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = SceneManifest(cfg.run_id, cfg.config_hash(), cfg.semantic_dict())
    clock = _StageClock(manifest, cfg.timing)
    written = []

    def track(path: Path) -> Path:
        written.append(path)
        return path

    try:
        # load_panorama
        def load():
            if cfg.panorama is None:
                raise ArgumentError("no panorama configured")
            if isinstance(cfg.panorama, (str, Path)):
                img = read_png(cfg.panorama)
            else:
                img = np.asarray(cfg.panorama, dtype=np.float64)
            if img.ndim != 3 or img.shape[2] != 3:
                raise ArgumentError("panorama must be an RGB image")
            if img.shape[1] != 2 * img.shape[0]:
                raise ArgumentError(
                    f"panorama must be 2:1, got {img.shape[1]}x{img.shape[0]}"
                )
            return img

        pano = clock.run("load_panorama", load)
        h, w = pano.shape[:2]
        face_size = cfg.face_size or derive_face_size(h)

        # fetch_global_depth
        def fetch_global():
            req = DepthRequest(ROLE_GLOBAL, pano, request_id=f"{cfg.run_id}_global")
            return fetch_depth(req, cfg.provider_global)

        global_inv = clock.run("fetch_global_depth", fetch_global, f"{w}x{h}")

        # project_cubemap
        def project():
            rgb_faces = equirect_to_cubemap(pano, face_size, ss=cfg.ss)
            depth_faces = project_inverse_to_faces(global_inv, face_size)
            return rgb_faces, depth_faces

        rgb_faces, global_faces = clock.run(
            "project_cubemap", project, f"{w}x{h}->6x{face_size}"
        )

        # fetch_detail_depth
        def fetch_detail():
            def one(fid):
                req = DepthRequest(
                    ROLE_DETAIL, rgb_faces[fid], face_id=fid,
                    request_id=f"{cfg.run_id}_{fid.tag}",
                )
                m = fetch_depth(req, cfg.provider_detail)
                if m.values.shape != (face_size, face_size):
                    m = resample_inverse_depth(m, face_size, face_size)
                return fid, m

            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    got = dict(pool.map(one, FACE_ORDER))
            else:
                got = dict(one(fid) for fid in FACE_ORDER)
            return {fid: got[fid] for fid in FACE_ORDER}

        detail_faces = clock.run("fetch_detail_depth", fetch_detail, f"6x{face_size}")

        # fuse_depth
        def fuse_all():
            fused = {}
            stats = {}
            if cfg.fusion_mode == "global_only":
                for fid in FACE_ORDER:
                    fused[fid] = global_faces[fid]
                    stats[fid.tag] = {"mode": "global_only"}
                return fused, stats
            if cfg.fusion_mode == "detail_only":
                for fid in FACE_ORDER:
                    fused[fid] = detail_faces[fid]
                    stats[fid.tag] = {"mode": "detail_only"}
                return fused, stats
            shared = None
            if not cfg.per_face_alignment:
                # one panorama-wide alignment: a per-face fit would reintroduce
                # the inconsistent scales fusion is meant to remove
                det = np.concatenate([detail_faces[f].values for f in FACE_ORDER])
                ref = np.concatenate([global_faces[f].values for f in FACE_ORDER])
                dm = np.concatenate([detail_faces[f].mask for f in FACE_ORDER])
                rm = np.concatenate([global_faces[f].mask for f in FACE_ORDER])
                shared = align_scale_shift(
                    InverseDepthMap(np.where(dm, det, 1.0), dm),
                    InverseDepthMap(np.where(rm, ref, 1.0), rm),
                    trim=cfg.trim,
                )
            for fid in FACE_ORDER:
                res = fuse(
                    global_faces[fid], detail_faces[fid],
                    crossover=cfg.crossover, trim=cfg.trim, levels=cfg.levels,
                    alignment=shared,
                )
                fused[fid] = res.fused
                stats[fid.tag] = {
                    "a": res.alignment.a,
                    "b": res.alignment.b,
                    "inlier_ratio": res.alignment.inlier_ratio,
                    "degenerate": res.alignment.degenerate,
                }
            return fused, stats

        fused_faces, fuse_stats = clock.run("fuse_depth", fuse_all, f"6x{face_size}")

        # lift
        def lift_all():
            def one(fid):
                cam = FaceCamera(fid, face_size)
                return fid, lift_face(rgb_faces[fid], fused_faces[fid], cam, cfg.lift)

            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    got = dict(pool.map(one, FACE_ORDER))
            else:
                got = dict(one(fid) for fid in FACE_ORDER)
            return {fid: got[fid] for fid in FACE_ORDER}

        lifted = clock.run("lift", lift_all, f"6x{face_size} stride {cfg.lift.stride}")

        # cull_merge
        def do_merge():
            frusta = [Frustum(fid, margin_eps=cfg.margin_eps) for fid in FACE_ORDER]
            return merge([lifted[f] for f in FACE_ORDER], frusta,
                         manifest_ref=cfg.run_id)

        scene = clock.run("cull_merge", do_merge,
                          f"{sum(len(lifted[f]) for f in FACE_ORDER)} gaussians")

        for fid in FACE_ORDER:
            st = dict(lifted[fid].stats or {})
            st.update(fuse_stats.get(fid.tag, {}))
            st["merged"] = scene.face_counts()[fid.tag]
            manifest.face_stats[fid.tag] = st

        # save_ply
        def save():
            path = track(out_dir / "scene.ply")
            save_ply(scene, path, sidecar={
                "lift_params": asdict(cfg.lift),
                "config_hash": manifest.config_hash,
            })
            track(sidecar_path(path))
            return path

        ply_path = clock.run("save_ply", save, f"{len(scene)} gaussians")
        manifest.outputs["scene_ply"] = str(ply_path)

        # render_eval
        if cfg.render_eval:
            def evaluate():
                ew = cfg.eval_width or w
                eh = ew // 2
                img, alpha = render_equirect(
                    scene, np.zeros(3), ew, eh, cfg.render, threads=cfg.threads
                )
                render_path = track(out_dir / "rerender.png")
                write_png(render_path, img)
                ref = pano if (ew, eh) == (w, h) else None
                m = {"render": str(render_path)}
                if ref is not None:
                    m["psnr_db"] = psnr_db_capped(psnr(img, ref, exclude_polar_fraction=0.05))
                    m["alpha_mean"] = float(alpha.mean())
                seam = seam_consistency(fused_faces)
                m["seam_mean_r"] = seam.mean_r
                m["seam_max_r"] = seam.max_r
                return m

            manifest.metrics = clock.run("render_eval", evaluate)

        clock.finish()
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True))
        manifest.outputs["manifest"] = str(manifest_path)
        return manifest
    except Exception:
        if not cfg.keep_partial:
            for p in written:
                try:
                    p.unlink(missing_ok=True)
                except OSError:
                    pass
        raise

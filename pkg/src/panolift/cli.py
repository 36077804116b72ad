"""Command-line interface.

Subcommands mirror the pipeline stages (project, fuse-depth, lift, merge,
render, eval) plus `synth` for the analytic test scene and `pipeline` for
the end-to-end run.  A TOML config supplies defaults; explicit flags win.
Exit codes: 0 ok, 2 usage, 3 data/format, 4 provider, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError, PanoliftError, ProviderError
from .fileio import read_pfm, read_png, write_pfm, write_png
from .fusion import InverseDepthMap, fuse, align_scale_shift
from .geometry import FACE_ORDER, FaceCamera, FaceId, equirect_to_cubemap
from .lifting import LiftParams, lift_face
from .metrics import psnr, psnr_db_capped, seam_consistency, timing_report
from .pipeline import (
    PipelineConfig,
    derive_face_size,
    project_inverse_to_faces,
    run_pipeline,
)
from .providers import ProviderConfig, SyntheticDepthSource
from .renderer import PinholeCamera, RenderSettings, render_perspective
from .scene import Frustum, Scene, load_ply, merge, save_ply
from .synthroom import CubeRoom, render_ground_truth


def _load_config(path):
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ArgumentError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"bad TOML in {path}: {exc}") from exc


def _pick(args, config, key, default=None):
    """Flag value if given, else config value, else default."""
    v = getattr(args, key.replace("-", "_"), None)
    if v is not None:
        return v
    return config.get(key, default)


def _provider_from_dict(d: dict) -> ProviderConfig:
    d = dict(d or {})
    syn = d.pop("synthetic", {})
    room = CubeRoom(
        half_extent=syn.get("half_extent", 2.0),
        checker_size=syn.get("checker_size", 1.0),
    )
    scales = {FaceId.from_tag(k): float(v) for k, v in syn.get("detail_scales", {}).items()}
    source = SyntheticDepthSource(
        room=room,
        position=np.asarray(syn.get("position", (0.0, 0.0, 0.0)), dtype=float),
        detail_scales=scales,
        texture_amp=syn.get("texture_amp", 0.0),
        texture_cycles=syn.get("texture_cycles", 24.0),
        face_scale=int(syn.get("face_scale", 1)),
    )
    return ProviderConfig(
        kind=d.get("kind", "synthetic"),
        base_path=d.get("base_path"),
        base_url=d.get("base_url"),
        timeout_ms=int(d.get("timeout_ms", 10000)),
        expected_resolution=d.get("expected_resolution", {}),
        synthetic=source,
    )


def _read_face_depths(dir_path, suffix: str) -> dict:
    out = {}
    missing = []
    for fid in FACE_ORDER:
        p = Path(dir_path) / f"face_{fid.tag}{suffix}"
        if not p.exists():
            missing.append(fid.tag)
            continue
        vals = read_pfm(p)
        out[fid] = InverseDepthMap(np.where(vals > 0, vals, 1.0), vals > 0)
    if missing:
        raise ArgumentError(f"missing face depth files: {', '.join(missing)}")
    return out


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    room = CubeRoom(half_extent=args.half_extent, checker_size=args.checker_size)
    pos = np.asarray(args.position, dtype=float)
    width = args.width
    height = args.height or width // 2
    rgb, inv, _ = render_ground_truth(room, pos, width, height)
    write_png(out / "panorama.png", rgb)
    write_pfm(out / "depth.pfm", inv.astype(np.float32))
    (out / "scene.json").write_text(json.dumps({
        "half_extent": room.half_extent,
        "checker_size": room.checker_size,
        "position": list(map(float, pos)),
        "width": width,
        "height": height,
    }, indent=2))
    print(f"wrote {out / 'panorama.png'}, depth.pfm, scene.json")
    return 0


def cmd_project(args) -> int:
    img = read_png(args.input)
    face_size = args.face_size or derive_face_size(img.shape[0])
    faces = equirect_to_cubemap(img, face_size, ss=args.ss)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid, face in faces.items():
        write_png(out / f"face_{fid.tag}.png", face)
    print(f"wrote 6 faces at {face_size}px to {out}")
    return 0


def cmd_fuse_depth(args) -> int:
    gvals = read_pfm(args.global_depth)
    global_map = InverseDepthMap(np.where(gvals > 0, gvals, 1.0), gvals > 0)
    details = _read_face_depths(args.detail_dir, ".pfm")
    face_size = args.face_size or details[FaceId.PX].values.shape[0]
    global_faces = project_inverse_to_faces(global_map, face_size)
    shared = None
    if not args.per_face_alignment:
        det = np.concatenate([details[f].values for f in FACE_ORDER])
        ref = np.concatenate([global_faces[f].values for f in FACE_ORDER])
        dm = np.concatenate([details[f].mask for f in FACE_ORDER])
        rm = np.concatenate([global_faces[f].mask for f in FACE_ORDER])
        shared = align_scale_shift(
            InverseDepthMap(np.where(dm, det, 1.0), dm),
            InverseDepthMap(np.where(rm, ref, 1.0), rm),
            trim=args.trim,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fid in FACE_ORDER:
        res = fuse(global_faces[fid], details[fid], crossover=args.crossover,
                   trim=args.trim, levels=args.levels, alignment=shared)
        write_pfm(out / f"face_{fid.tag}.pfm", res.fused.values.astype(np.float32))
    print(f"wrote 6 fused maps to {out}")
    return 0


def cmd_lift(args) -> int:
    rgb = read_png(args.rgb)
    vals = read_pfm(args.depth)
    fid = FaceId.from_tag(args.face)
    cam = FaceCamera(fid, rgb.shape[0], np.asarray(args.center, dtype=float))
    params = LiftParams(scale_gain=args.scale_gain, initial_opacity=args.opacity,
                        thin_axis_ratio=args.thin_axis_ratio, stride=args.stride)
    gset = lift_face(rgb, InverseDepthMap(np.where(vals > 0, vals, 1.0), vals > 0),
                     cam, params)
    prov = np.full(len(gset), int(fid), dtype=np.uint8)
    save_ply(Scene(gset, prov), args.out,
             sidecar={"lift_params": asdict(params), "stats": gset.stats})
    print(f"lifted {len(gset)} gaussians ({gset.stats['skipped']} skipped) -> {args.out}")
    return 0


def cmd_merge(args) -> int:
    sets = []
    missing = []
    for fid in FACE_ORDER:
        p = Path(args.dir) / f"face_{fid.tag}.ply"
        if not p.exists():
            missing.append(fid.tag)
            continue
        sets.append(load_ply(p).gaussians)
    if missing:
        raise ArgumentError(f"missing face scene files: {', '.join(missing)}")
    center = np.asarray(args.center, dtype=float)
    frusta = [Frustum(fid, center, args.margin_eps) for fid in FACE_ORDER]
    scene = merge(sets, frusta)
    save_ply(scene, args.out)
    print(f"merged {len(scene)} gaussians -> {args.out}")
    return 0


def cmd_render(args) -> int:
    scene = load_ply(args.scene)
    try:
        cams = json.loads(Path(args.camera).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read camera path: {exc}") from exc
    if isinstance(cams, dict):
        cams = [cams]
    settings = RenderSettings(tile_size=args.tile_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, rec in enumerate(cams):
        cam = PinholeCamera.look_at(
            rec["position"], rec["look_at"], rec.get("up", (0.0, 1.0, 0.0)),
            rec.get("fov_deg", 90.0), args.width, args.height,
        )
        img, _ = render_perspective(scene, cam, settings, threads=args.threads)
        write_png(out / f"frame_{i:03d}.png", img)
    print(f"rendered {len(cams)} frames to {out}")
    return 0


def cmd_eval(args) -> int:
    records = []
    if args.depth_dir:
        report = seam_consistency(_read_face_depths(args.depth_dir, ".pfm"),
                                  samples_per_edge=args.samples_per_edge)
        print(report.as_table())
        records.append({"seam": report.as_dict()})
    if args.image and args.ref:
        a = read_png(args.image)
        b = read_png(args.ref)
        db = psnr_db_capped(psnr(a, b, exclude_polar_fraction=args.exclude_polar))
        print(f"psnr_db {db:.3f}")
        records.append({"psnr_db": db})
    if not records:
        raise ArgumentError("eval needs --depth-dir and/or --image with --ref")
    _emit_report(args.report, records)
    return 0


def cmd_pipeline(args) -> int:
    config = _load_config(args.config)
    lift_cfg = dict(config.get("lift", {}))
    if args.stride is not None:
        lift_cfg["stride"] = args.stride
    render_cfg = dict(config.get("render", {}))
    cfg = PipelineConfig(
        panorama=_pick(args, config, "panorama"),
        provider_global=_provider_from_dict(config.get("provider_global", {})),
        provider_detail=_provider_from_dict(config.get("provider_detail", {})),
        face_size=_pick(args, config, "face_size"),
        ss=int(_pick(args, config, "ss", 2)),
        levels=int(_pick(args, config, "levels", 4)),
        crossover=int(_pick(args, config, "crossover", 3)),
        trim=float(_pick(args, config, "trim", 0.2)),
        fusion_mode=_pick(args, config, "fusion_mode", "fused"),
        per_face_alignment=bool(config.get("per_face_alignment", False)),
        lift=LiftParams(**lift_cfg),
        margin_eps=float(_pick(args, config, "margin_eps", 0.0)),
        render=RenderSettings(**render_cfg),
        render_eval=bool(args.render_eval or config.get("render_eval", False)),
        eval_width=_pick(args, config, "eval_width"),
        output_dir=_pick(args, config, "output_dir", "out"),
        run_id=_pick(args, config, "run_id"),
        timing=True,
        threads=int(_pick(args, config, "threads", 1)),
        keep_partial=bool(args.keep_partial or config.get("keep_partial", False)),
    )
    manifest = run_pipeline(cfg)
    print(f"scene: {manifest.outputs['scene_ply']}")
    print(f"config_hash: {manifest.config_hash}")
    if manifest.metrics:
        for k, v in manifest.metrics.items():
            print(f"{k}: {v}")
    _emit_report(args.report, None, text=timing_report(manifest))
    return 0


def _emit_report(path, records, text=None):
    if text is None and records is not None:
        text = "\n".join(json.dumps(r, sort_keys=True) for r in records)
    if text is None:
        return
    if path:
        Path(path).write_text(text + "\n")
    elif records is not None:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panolift",
                                description="panorama to 3D Gaussian scene toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--report", help="write JSON-lines report here")

    sp = sub.add_parser("synth", help="generate the analytic room scene")
    sp.add_argument("--out", required=True)
    sp.add_argument("--width", type=int, default=1024)
    sp.add_argument("--height", type=int)
    sp.add_argument("--half-extent", type=float, default=2.0)
    sp.add_argument("--checker-size", type=float, default=1.0)
    sp.add_argument("--position", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("project", help="panorama to cubemap faces")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--face-size", type=int)
    sp.add_argument("--ss", type=int, default=2)
    common(sp)
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("fuse-depth", help="fuse global + detail inverse depth")
    sp.add_argument("--global-depth", required=True, help="equirect inverse-depth PFM")
    sp.add_argument("--detail-dir", required=True, help="directory of face_<id>.pfm")
    sp.add_argument("--out", required=True)
    sp.add_argument("--face-size", type=int)
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--crossover", type=int, default=3)
    sp.add_argument("--trim", type=float, default=0.2)
    sp.add_argument("--per-face-alignment", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_fuse_depth)

    sp = sub.add_parser("lift", help="face RGB + depth to gaussians")
    sp.add_argument("--rgb", required=True)
    sp.add_argument("--depth", required=True)
    sp.add_argument("--face", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--center", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    sp.add_argument("--scale-gain", type=float, default=1.0)
    sp.add_argument("--opacity", type=float, default=0.8)
    sp.add_argument("--thin-axis-ratio", type=float, default=0.2)
    sp.add_argument("--stride", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("merge", help="merge 6 per-face scenes")
    sp.add_argument("--dir", required=True, help="directory of face_<id>.ply")
    sp.add_argument("--out", required=True)
    sp.add_argument("--center", type=float, nargs=3, default=(0.0, 0.0, 0.0))
    sp.add_argument("--margin-eps", type=float, default=0.0)
    common(sp)
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("render", help="render a scene along a camera path")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--camera", required=True, help="JSON camera path")
    sp.add_argument("--out", required=True)
    sp.add_argument("--width", type=int, default=512)
    sp.add_argument("--height", type=int, default=512)
    sp.add_argument("--tile-size", type=int, default=16)
    sp.add_argument("--threads", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("eval", help="seam consistency and PSNR metrics")
    sp.add_argument("--depth-dir", help="directory of face_<id>.pfm")
    sp.add_argument("--samples-per-edge", type=int, default=64)
    sp.add_argument("--image")
    sp.add_argument("--ref")
    sp.add_argument("--exclude-polar", type=float, default=0.0)
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("pipeline", help="run the full reconstruction")
    sp.add_argument("--panorama")
    sp.add_argument("--output-dir")
    sp.add_argument("--face-size", type=int)
    sp.add_argument("--ss", type=int)
    sp.add_argument("--levels", type=int)
    sp.add_argument("--crossover", type=int)
    sp.add_argument("--trim", type=float)
    sp.add_argument("--fusion-mode", choices=("fused", "detail_only", "global_only"))
    sp.add_argument("--margin-eps", type=float)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--eval-width", type=int)
    sp.add_argument("--render-eval", action="store_true")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--run-id")
    sp.add_argument("--keep-partial", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args) or 0
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PanoliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())

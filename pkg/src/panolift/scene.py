"""Frustum culling, merging per-face Gaussian sets, and PLY persistence.

Each cube face owns the direction sector that face_assignment gives it, so
culling every face's Gaussians against its own frustum and concatenating
yields exactly one copy of every splat.  Scenes serialize to the
binary-little-endian PLY layout common to splat viewers, with provenance
and lift parameters in a JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DataError, FormatError
from .geometry import FACE_ORDER, FaceId, face_assignment, face_basis
from .lifting import GaussianSet

PLY_PROPERTIES = (
    "x", "y", "z", "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)


@dataclass(frozen=True)
class Frustum:
    """The direction sector a cube face owns, optionally dilated by margin_eps."""

    face_id: FaceId
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    margin_eps: float = 0.0

    def __post_init__(self):
        if self.margin_eps < 0:
            raise ArgumentError("margin_eps must be >= 0")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    def contains(self, dirs: np.ndarray) -> np.ndarray:
        d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        if self.margin_eps == 0.0:
            return face_assignment(d) == int(self.face_id)
        _, _, axis = face_basis(self.face_id)
        own = d @ axis
        best = np.abs(d).max(axis=1)
        return own >= (1.0 - self.margin_eps) * best


def cull(gset: GaussianSet, frustum: Frustum) -> GaussianSet:
    """Keep the Gaussians whose mean direction falls in the frustum's sector."""
    if len(gset) == 0:
        return gset.take(np.zeros(0, dtype=bool))
    dirs = gset.means.astype(np.float64) - frustum.center
    keep = frustum.contains(dirs)
    out = gset.take(keep)
    out.stats = {"kept": int(keep.sum()), "culled": int(len(gset) - keep.sum())}
    return out


@dataclass
class Scene:
    gaussians: GaussianSet
    provenance: np.ndarray = None
    manifest_ref: str = ""

    def __post_init__(self):
        if self.provenance is None:
            self.provenance = np.zeros(len(self.gaussians), dtype=np.uint8)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        if len(self.provenance) != len(self.gaussians):
            raise ArgumentError("provenance length must match gaussian count")

    def __len__(self) -> int:
        return len(self.gaussians)

    def face_counts(self) -> dict:
        return {
            fid.tag: int((self.provenance == int(fid)).sum()) for fid in FACE_ORDER
        }


def merge(sets, frusta, manifest_ref: str = "") -> Scene:
    """Cull each face's set against its own frustum and concatenate in face order."""
    sets = list(sets)
    frusta = list(frusta)
    if len(sets) != 6 or len(frusta) != 6:
        raise ArgumentError("merge needs exactly 6 sets and 6 frusta")
    ids = [FaceId(f.face_id) for f in frusta]
    if len(set(ids)) != 6:
        raise ArgumentError("duplicate face ids in frusta")
    order = np.argsort([int(i) for i in ids])
    kept = []
    prov = []
    for k in order:
        culled = cull(sets[k], frusta[k])
        kept.append(culled)
        prov.append(np.full(len(culled), int(ids[k]), dtype=np.uint8))
    merged = GaussianSet(
        np.concatenate([g.means for g in kept]),
        np.concatenate([g.log_scales for g in kept]),
        np.concatenate([g.rotations for g in kept]),
        np.concatenate([g.opacity_logits for g in kept]),
        np.concatenate([g.sh_dc for g in kept]),
    )
    return Scene(merged, np.concatenate(prov), manifest_ref)


def _vertex_records(gset: GaussianSet) -> np.ndarray:
    n = len(gset)
    rec = np.zeros((n, 17), dtype="<f4")
    rec[:, 0:3] = gset.means
    rec[:, 6:9] = gset.sh_dc
    rec[:, 9] = gset.opacity_logits
    rec[:, 10:13] = gset.log_scales
    rec[:, 13:17] = gset.rotations
    return rec


def save_ply(scene: Scene, path=None, sidecar: dict = None) -> bytes:
    """Serialize to binary PLY; when `path` is given, also writes the sidecar JSON."""
    gset = scene.gaussians if isinstance(scene, Scene) else scene
    gset.validate()
    header = "ply\nformat binary_little_endian 1.0\nelement vertex %d\n%send_header\n" % (
        len(gset),
        "".join(f"property float {p}\n" for p in PLY_PROPERTIES),
    )
    payload = header.encode("ascii") + _vertex_records(gset).tobytes()
    if path is not None:
        path = Path(path)
        path.write_bytes(payload)
        meta = dict(sidecar or {})
        if isinstance(scene, Scene):
            meta.setdefault("face_counts", scene.face_counts())
            meta.setdefault("manifest_ref", scene.manifest_ref)
        meta.setdefault("count", len(gset))
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return payload


def sidecar_path(ply_path) -> Path:
    p = Path(ply_path)
    return p.with_name(p.stem + ".meta.json")


def load_ply(source) -> Scene:
    """Parse a splat PLY written by save_ply (format errors carry byte offsets)."""
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
        meta = None
    else:
        p = Path(source)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read PLY: {exc}") from exc
        sp = sidecar_path(p)
        meta = json.loads(sp.read_text()) if sp.exists() else None

    end_tag = b"end_header\n"
    end = raw.find(end_tag)
    if not raw.startswith(b"ply\n") or end < 0:
        raise FormatError("not a PLY file (offset 0)")
    header_len = end + len(end_tag)
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    if len(lines) < 3 or lines[1] != "format binary_little_endian 1.0":
        raise FormatError("unsupported PLY format line (offset 4)")
    if not lines[2].startswith("element vertex "):
        raise FormatError("missing vertex element (offset 31)")
    try:
        count = int(lines[2].split()[-1])
    except ValueError as exc:
        raise FormatError("bad vertex count") from exc
    props = []
    for ln in lines[3:]:
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "property" or parts[1] != "float":
            raise FormatError(f"unexpected header line {ln!r}")
        props.append(parts[2])
    if tuple(props) != PLY_PROPERTIES:
        raise FormatError(
            f"property list mismatch: got {props}, expected {list(PLY_PROPERTIES)}"
        )
    need = count * 17 * 4
    if len(raw) - header_len < need:
        raise FormatError(
            f"vertex data truncated at offset {len(raw)} (need {header_len + need} bytes)"
        )
    rec = np.frombuffer(raw, dtype="<f4", count=count * 17, offset=header_len)
    rec = rec.reshape(count, 17)
    finite = np.isfinite(rec).all(axis=1)
    if not finite.all():
        i = int(np.argmin(finite))
        raise FormatError(f"non-finite vertex values (offset {header_len + i * 17 * 4})")
    gset = GaussianSet(
        rec[:, 0:3], rec[:, 10:13], rec[:, 13:17], rec[:, 9], rec[:, 6:9]
    )
    provenance = None
    manifest_ref = ""
    if meta is not None:
        manifest_ref = meta.get("manifest_ref", "")
        counts = meta.get("face_counts")
        if counts is not None and sum(counts.values()) == count:
            provenance = np.concatenate([
                np.full(counts.get(fid.tag, 0), int(fid), dtype=np.uint8)
                for fid in FACE_ORDER
            ])
    return Scene(gset, provenance, manifest_ref)

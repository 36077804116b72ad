"""Pluggable sources of inverse depth: files on disk, an HTTP service, or
the analytic room oracle.

The pipeline is agnostic to where depth comes from; every provider returns
an InverseDepthMap whose values are strictly positive, or raises
ProviderError naming the failing request.  The wire format is PFM so float
values survive bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, ProviderError
from .fileio import png_bytes, read_pfm
from .fusion import InverseDepthMap
from .geometry import FaceId
from .synthroom import CubeRoom, face_inverse_depth, render_ground_truth

ROLE_GLOBAL = "global_pano"
ROLE_DETAIL = "detail_face"


@dataclass
class DepthRequest:
    role: str
    image: np.ndarray
    face_id: FaceId = None
    request_id: str = "req"

    def __post_init__(self):
        if self.role not in (ROLE_GLOBAL, ROLE_DETAIL):
            raise ArgumentError(f"unknown role {self.role!r}")
        self.image = np.asarray(self.image)
        h, w = self.image.shape[:2]
        if self.role == ROLE_DETAIL:
            if self.face_id is None:
                raise ArgumentError("detail_face requests need a face_id")
            self.face_id = FaceId(self.face_id)
        elif w != 2 * h:
            raise ArgumentError("global_pano requests need a 2:1 image")


@dataclass
class SyntheticDepthSource:
    """Closed-loop oracle: analytic room depth plus optional detail corruption."""

    room: CubeRoom = field(default_factory=CubeRoom)
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    detail_scales: dict = field(default_factory=dict)
    texture_amp: float = 0.0
    texture_cycles: float = 24.0
    face_scale: int = 1

    def global_map(self, width: int, height: int) -> InverseDepthMap:
        _, inv, mask = render_ground_truth(self.room, self.position, width, height)
        return InverseDepthMap(inv, mask)

    def detail_map(self, face_id: FaceId, face_size: int) -> InverseDepthMap:
        scale = float(self.detail_scales.get(FaceId(face_id), self.detail_scales.get(FaceId(face_id).tag, 1.0)))
        inv = face_inverse_depth(
            self.room, self.position, face_id, face_size * self.face_scale,
            scale=scale, texture_amp=self.texture_amp, texture_cycles=self.texture_cycles,
        )
        return InverseDepthMap(inv)


@dataclass
class ProviderConfig:
    kind: str = "synthetic"
    base_path: str = None
    base_url: str = None
    timeout_ms: int = 10000
    expected_resolution: dict = field(default_factory=dict)
    synthetic: SyntheticDepthSource = field(default_factory=SyntheticDepthSource)

    def __post_init__(self):
        if self.kind not in ("file", "http", "synthetic"):
            raise ArgumentError(f"unknown provider kind {self.kind!r}")
        if self.kind == "file" and not self.base_path:
            raise ArgumentError("file provider needs base_path")
        if self.kind == "http" and not self.base_url:
            raise ArgumentError("http provider needs base_url")


def request_filename(req: DepthRequest) -> str:
    if req.role == ROLE_DETAIL:
        return f"{req.request_id}_{req.role}_{req.face_id.tag}.pfm"
    return f"{req.request_id}_{req.role}.pfm"


def _checked_map(values: np.ndarray, req: DepthRequest, cfg: ProviderConfig) -> InverseDepthMap:
    if values.ndim != 2:
        raise ProviderError(f"request {req.request_id}: depth map must be single-channel")
    if not np.isfinite(values).all() or (values <= 0).any():
        bad = int((~np.isfinite(values) | (values <= 0)).sum())
        raise ProviderError(
            f"request {req.request_id}: {bad} non-positive or non-finite depth values"
        )
    want = cfg.expected_resolution.get(req.role)
    if want is not None:
        ww, wh = want
        if values.shape != (wh, ww):
            raise ProviderError(
                f"request {req.request_id}: expected {ww}x{wh} map, got "
                f"{values.shape[1]}x{values.shape[0]}"
            )
    return InverseDepthMap(np.asarray(values, dtype=np.float64))


def fetch_depth(req: DepthRequest, cfg: ProviderConfig) -> InverseDepthMap:
    """Obtain inverse depth for one request from the configured provider."""
    if cfg.kind == "synthetic":
        h, w = req.image.shape[:2]
        if req.role == ROLE_GLOBAL:
            return cfg.synthetic.global_map(w, h)
        return cfg.synthetic.detail_map(req.face_id, h)

    if cfg.kind == "file":
        path = Path(cfg.base_path) / request_filename(req)
        if not path.exists():
            raise ProviderError(f"request {req.request_id}: missing file {path}")
        try:
            values = read_pfm(path)
        except FormatError as exc:
            raise ProviderError(f"request {req.request_id}: {exc}") from exc
        return _checked_map(values, req, cfg)

    # http
    import requests

    url = f"{cfg.base_url.rstrip('/')}/depth/{req.role}"
    params = {}
    if req.role == ROLE_DETAIL:
        params["face"] = req.face_id.tag
    try:
        resp = requests.post(
            url,
            params=params,
            data=png_bytes(req.image),
            headers={"Content-Type": "image/png", "X-Request-Id": req.request_id},
            timeout=cfg.timeout_ms / 1000.0,
        )
    except requests.RequestException as exc:
        raise ProviderError(f"request {req.request_id}: {exc}") from exc
    if resp.status_code != 200:
        raise ProviderError(
            f"request {req.request_id}: HTTP {resp.status_code} from {url}"
        )
    echoed = resp.headers.get("X-Request-Id")
    if echoed != req.request_id:
        raise ProviderError(
            f"request {req.request_id}: response id mismatch ({echoed!r})"
        )
    try:
        values = read_pfm(resp.content)
    except FormatError as exc:
        raise ProviderError(f"request {req.request_id}: {exc}") from exc
    return _checked_map(values, req, cfg)

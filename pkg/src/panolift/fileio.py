"""Image and float-map file I/O.

PNG carries 8-bit RGB (and 16-bit grayscale) images; PFM carries lossless
float32 maps and is the interchange format for inverse depth.  PFM files are
written little-endian (scale -1.0) with the standard bottom-to-top row order;
reading them back is bit-exact.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ArgumentError, FormatError

_PFM_HEADER_RE = re.compile(rb"^(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s")


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> bytes:
    """Write a (H, W) or (H, W, 3) float map as PFM; returns the bytes."""
    arr = np.asarray(data)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ArgumentError(f"PFM data must be (H, W) or (H, W, 3), got {arr.shape}")
    if scale == 0:
        raise ArgumentError("PFM scale must be nonzero")
    h, w = arr.shape[:2]
    dtype = "<f4" if scale < 0 else ">f4"
    header = b"%s\n%d %d\n%s\n" % (magic, w, h, _format_scale(scale).encode())
    payload = header + np.ascontiguousarray(arr[::-1], dtype=dtype).tobytes()
    if path is not None:
        Path(path).write_bytes(payload)
    return payload


def _format_scale(scale: float) -> str:
    text = repr(float(scale))
    return text


def read_pfm(source) -> np.ndarray:
    """Read a PFM file (path or bytes) into a float32 array, top row first."""
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        try:
            raw = Path(source).read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read PFM: {exc}") from exc
    m = _PFM_HEADER_RE.match(raw)
    if m is None:
        raise FormatError("malformed PFM header (offset 0)")
    magic, w, h = m.group(1), int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError as exc:
        raise FormatError("malformed PFM scale line") from exc
    if scale == 0:
        raise FormatError("PFM scale must be nonzero")
    channels = 3 if magic == b"PF" else 1
    offset = m.end()
    count = w * h * channels
    dtype = np.dtype("<f4" if scale < 0 else ">f4")
    if len(raw) - offset < count * 4:
        raise FormatError(
            f"PFM data truncated: need {count * 4} bytes at offset {offset}, "
            f"have {len(raw) - offset}"
        )
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if channels == 1:
        arr = flat.reshape(h, w)
    else:
        arr = flat.reshape(h, w, 3)
    return np.ascontiguousarray(arr[::-1]).astype(np.float32)


def write_png(path, image01: np.ndarray) -> None:
    """Write linear [0, 1] floats as an 8-bit PNG (round half up)."""
    arr = np.asarray(image01, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ArgumentError(f"expected (H, W) or (H, W, C) image, got {arr.shape}")
    q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q).save(Path(path), format="PNG")


def png_bytes(image01: np.ndarray) -> bytes:
    """Encode a linear [0, 1] float image as PNG bytes (8-bit, round half up)."""
    import io

    arr = np.floor(np.clip(np.asarray(image01), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def read_png(source) -> np.ndarray:
    """Read a PNG (path or bytes) into linear [0, 1] float64.

    8-bit images divide by 255, 16-bit grayscale by 65535.
    """
    import io

    try:
        if isinstance(source, (bytes, bytearray)):
            img = Image.open(io.BytesIO(source))
        else:
            img = Image.open(Path(source))
        img.load()
    except Exception as exc:
        raise FormatError(f"cannot decode PNG: {exc}") from exc
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / 65535.0
    if img.mode not in ("RGB", "L", "RGBA"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr / 255.0


def write_depth_png16(path, depth_m: np.ndarray, scale_m_per_unit: float | None = None) -> float:
    """Write metric depth as 16-bit PNG plus a JSON sidecar with the unit scale.

    Returns the scale actually used (chosen to cover the max depth when not
    given).  Invalid (non-finite or <= 0) pixels are stored as 0.
    """
    depth = np.asarray(depth_m, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    if scale_m_per_unit is None:
        top = float(depth[valid].max()) if valid.any() else 1.0
        scale_m_per_unit = top / 65535.0
    units = np.zeros(depth.shape, dtype=np.uint16)
    q = np.floor(depth[valid] / scale_m_per_unit + 0.5)
    units[valid] = np.clip(q, 1, 65535).astype(np.uint16)
    path = Path(path)
    Image.fromarray(units).save(path, format="PNG")
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"scale_m_per_unit": scale_m_per_unit}))
    return scale_m_per_unit


def read_depth_png16(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a 16-bit depth PNG + sidecar; returns (depth_m, valid_mask)."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(sidecar.read_text())
        scale = float(meta["scale_m_per_unit"])
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"missing or malformed depth sidecar {sidecar}: {exc}") from exc
    img = Image.open(path)
    img.load()
    units = np.asarray(img, dtype=np.float64)
    mask = units > 0
    return units * scale, mask

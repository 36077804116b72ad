"""Coordinate conventions and equirectangular/cubemap projection.

World frame is right-handed, +Y up, -Z forward at longitude zero.  An
equirectangular pixel (u, v) maps to angles via theta = 2*pi*(u+0.5)/W - pi
and phi = pi/2 - pi*(v+0.5)/H, so integer continuous coordinates land on
pixel centers.  Cubemap faces are 90-degree pinhole views sharing one
optical center; the per-face orientation table below is fixed and every
downstream module relies on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ArgumentError, FormatError

_LABELS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
_TAGS = ("px", "nx", "py", "ny", "pz", "nz")


class FaceId(IntEnum):
    """Cube face identifiers; enum order is the fixed tie-break priority."""

    PX = 0
    NX = 1
    PY = 2
    NY = 3
    PZ = 4
    NZ = 5

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def tag(self) -> str:
        """Short lowercase tag used in file names (face_px.png etc.)."""
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: str) -> "FaceId":
        t = tag.strip().lower()
        if t in _TAGS:
            return cls(_TAGS.index(t))
        if tag.strip().upper() in _LABELS:
            return cls(_LABELS.index(tag.strip().upper()))
        raise ArgumentError(f"unknown face id {tag!r}; expected one of {_TAGS}")


FACE_ORDER = tuple(FaceId)

# direction(a, b) = a*A + b*B + C, normalized, with a = 2(x+0.5)/S - 1 and
# b = 2(y+0.5)/S - 1.  Encodes +X:(1,-b,-a) -X:(-1,-b,a) +Y:(a,1,b)
# -Y:(a,-1,-b) +Z:(a,-b,1) -Z:(-a,-b,-1).
_FACE_BASIS = {
    FaceId.PX: ((0.0, 0.0, -1.0), (0.0, -1.0, 0.0), (1.0, 0.0, 0.0)),
    FaceId.NX: ((0.0, 0.0, 1.0), (0.0, -1.0, 0.0), (-1.0, 0.0, 0.0)),
    FaceId.PY: ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    FaceId.NY: ((1.0, 0.0, 0.0), (0.0, 0.0, -1.0), (0.0, -1.0, 0.0)),
    FaceId.PZ: ((1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    FaceId.NZ: ((-1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, -1.0)),
}


def face_basis(face_id: FaceId) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (A, B, C) with face ray(a, b) = a*A + b*B + C before normalization."""
    a, b, c = _FACE_BASIS[FaceId(face_id)]
    return np.array(a), np.array(b), np.array(c)


def pixel_to_direction(u, v, width: int, height: int) -> np.ndarray:
    """Unit world direction(s) for equirect pixel coordinates (vectorized).

    Accepts scalars or arrays; continuous coordinates allowed, integer
    values mean pixel centers.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0) or np.any(u >= width) or np.any(v < 0) or np.any(v >= height):
        raise ArgumentError("pixel coordinates out of range")
    theta = 2.0 * np.pi * (u + 0.5) / width - np.pi
    phi = np.pi / 2.0 - np.pi * (v + 0.5) / height
    cp = np.cos(phi)
    return np.stack(
        [cp * np.sin(theta), np.sin(phi), -cp * np.cos(theta)], axis=-1
    )


def direction_to_pixel(d, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous equirect (u, v) for unit direction(s); u wraps to [0, width).

    At the poles (|y| -> 1) longitude is undefined; u = width/2 by convention.
    """
    arr = np.asarray(d, dtype=np.float64)
    norm = np.linalg.norm(arr, axis=-1)
    if np.any(norm < 1e-12):
        raise ArgumentError("zero-length direction")
    x, y, z = arr[..., 0] / norm, arr[..., 1] / norm, arr[..., 2] / norm
    rxz = np.hypot(x, z)
    theta = np.arctan2(x, -z)
    phi = np.arctan2(y, rxz)
    u = np.mod((theta + np.pi) * width / (2.0 * np.pi) - 0.5, width)
    v = (np.pi / 2.0 - phi) * height / np.pi - 0.5
    u = np.where(rxz < 1e-12, width / 2.0, u)
    return u, v


def face_assignment(d):
    """FaceId of the axis with max |component|; ties break in FACE_ORDER.

    Scalar input returns a FaceId; batched input returns an int array.
    """
    arr = np.asarray(d, dtype=np.float64)
    comps = np.stack(
        [arr[..., 0], -arr[..., 0], arr[..., 1], -arr[..., 1], arr[..., 2], -arr[..., 2]],
        axis=-1,
    )
    idx = np.argmax(comps, axis=-1)
    if idx.ndim == 0:
        return FaceId(int(idx))
    return idx


def face_directions(face_id: FaceId, face_size: int, offset=(0.0, 0.0)) -> np.ndarray:
    """(S, S, 3) unit world rays through face pixel centers (+ optional sub-pixel shift)."""
    A, B, C = face_basis(face_id)
    xs = (np.arange(face_size) + 0.5 + offset[0]) * (2.0 / face_size) - 1.0
    ys = (np.arange(face_size) + 0.5 + offset[1]) * (2.0 / face_size) - 1.0
    a = xs[None, :, None]
    b = ys[:, None, None]
    dirs = a * A + b * B + C
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs


@dataclass(frozen=True)
class FaceCamera:
    """Pinhole camera of one cube face.

    Camera frame is x-right, y-up, z-forward; pixel (x, y) has the camera-space
    ray (a, -b, 1) with a, b as in the face table, so `rotation` (camera to
    world) is a proper rotation for every face.  fx = fy = cx = cy = S/2 and
    the center of pixel i projects to continuous coordinate i + 0.5.
    """

    face_id: FaceId
    face_size: int
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def fx(self) -> float:
        return self.face_size / 2.0

    fy = fx

    @property
    def cx(self) -> float:
        return self.face_size / 2.0

    cy = cx

    @property
    def rotation(self) -> np.ndarray:
        A, B, C = face_basis(self.face_id)
        return np.stack([A, -B, C], axis=1)

    def ray_directions(self, stride: int = 1) -> np.ndarray:
        """Unit world rays through pixel centers, subsampled by stride."""
        dirs = face_directions(self.face_id, self.face_size)
        return dirs[::stride, ::stride]

    def camera_coords(self, points_world: np.ndarray) -> np.ndarray:
        p = np.asarray(points_world, dtype=np.float64) - self.center
        return p @ self.rotation

    def project(self, points_world: np.ndarray):
        """Continuous (u, v) face coordinates and camera depth z for world points."""
        q = self.camera_coords(points_world)
        z = q[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * q[..., 0] / z + self.cx
            v = self.cy - self.fy * q[..., 1] / z
        return u, v, z

    def project_directions(self, dirs: np.ndarray):
        """Like project but for world directions (no center subtraction)."""
        q = np.asarray(dirs, dtype=np.float64) @ self.rotation
        z = q[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * q[..., 0] / z + self.cx
            v = self.cy - self.fy * q[..., 1] / z
        return u, v, z


@dataclass
class CubemapFaceSet:
    """Six equally sized square images (RGB or scalar) sharing an optical center."""

    face_size: int
    faces: dict
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        keys = [FaceId(k) for k in self.faces]
        if sorted(keys) != list(FACE_ORDER):
            missing = set(FACE_ORDER) - set(keys)
            raise FormatError(f"face set must contain exactly the 6 faces; missing {sorted(missing)}")
        self.faces = {FaceId(k): np.asarray(self.faces[k]) for k in FACE_ORDER}
        for fid, img in self.faces.items():
            if img.shape[0] != self.face_size or img.shape[1] != self.face_size:
                raise FormatError(
                    f"face {fid.label} is {img.shape[1]}x{img.shape[0]}, expected {self.face_size}"
                )

    def __getitem__(self, face_id) -> np.ndarray:
        return self.faces[FaceId(face_id)]

    def items(self):
        return self.faces.items()

    def camera(self, face_id) -> FaceCamera:
        return FaceCamera(FaceId(face_id), self.face_size, self.center)


def sample_equirect_bilinear(img: np.ndarray, u, v) -> np.ndarray:
    """Bilinear lookup at continuous equirect coords; wraps in u, clamps in v."""
    h, w = img.shape[:2]
    u = np.mod(np.asarray(u, dtype=np.float64), w)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    fu = u - u0
    fv = v - v0
    u0 = np.mod(u0, w)
    u1 = np.mod(u0 + 1, w)
    v1 = np.minimum(v0 + 1, h - 1)
    if img.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    top = img[v0, u0] * (1.0 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1.0 - fu) + img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


def sample_face_bilinear(face: np.ndarray, x, y) -> np.ndarray:
    """Bilinear lookup in face index space (integer = pixel center), edge clamp."""
    h, w = face.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if face.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = face[y0, x0] * (1.0 - fx) + face[y0, x1] * fx
    bot = face[y1, x0] * (1.0 - fx) + face[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def equirect_to_cubemap(
    img: np.ndarray,
    face_size: int,
    ss: int = 2,
    center=None,
    offset=(0.0, 0.0),
) -> CubemapFaceSet:
    """Project an equirect image onto six cube faces with box-average supersampling.

    ss**2 bilinear taps per face pixel on a regular sub-pixel grid; ss=1 is a
    single center tap.  `offset` shifts the whole sampling grid in face pixels
    (used to verify the supersampling decomposition).
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if w != 2 * h:
        raise FormatError(f"panorama must be 2:1, got {w}x{h}")
    if face_size < 8:
        raise ArgumentError("face_size must be >= 8")
    if ss not in (1, 2, 3, 4):
        raise ArgumentError("ss must be in {1, 2, 3, 4}")
    faces = {}
    for fid in FACE_ORDER:
        acc = None
        for sj in range(ss):
            for si in range(ss):
                dx = (si + 0.5) / ss - 0.5 + offset[0]
                dy = (sj + 0.5) / ss - 0.5 + offset[1]
                dirs = face_directions(fid, face_size, offset=(dx, dy))
                uu, vv = direction_to_pixel(dirs, w, h)
                tap = sample_equirect_bilinear(img, uu, vv)
                acc = tap if acc is None else acc + tap
        faces[fid] = acc / (ss * ss)
    if center is None:
        center = np.zeros(3)
    return CubemapFaceSet(face_size, faces, np.asarray(center, dtype=np.float64))


def cubemap_to_equirect(faces: CubemapFaceSet, width: int, height: int) -> np.ndarray:
    """Reassemble an equirect image by sampling each pixel's assigned face."""
    if width != 2 * height:
        raise ArgumentError(f"panorama must be 2:1, got {width}x{height}")
    uu, vv = np.meshgrid(np.arange(width), np.arange(height))
    dirs = pixel_to_direction(uu, vv, width, height)
    assign = face_assignment(dirs)
    first = faces[FACE_ORDER[0]]
    out_shape = (height, width) if first.ndim == 2 else (height, width, first.shape[2])
    out = np.zeros(out_shape, dtype=np.float64)
    for fid in FACE_ORDER:
        mask = assign == int(fid)
        if not mask.any():
            continue
        cam = faces.camera(fid)
        x, y, _ = cam.project_directions(dirs[mask])
        out[mask] = sample_face_bilinear(faces[fid], x - 0.5, y - 0.5)
    return out

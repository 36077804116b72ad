"""Single-panorama 3D Gaussian scene reconstruction.

A 2:1 equirectangular image goes in; a cube-aligned set of 3D Gaussians
comes out, via per-face monocular depth, Laplacian-pyramid depth fusion,
and an analytic unprojection of every pixel.  The renderer exists for
evaluation, not speed: its output is deterministic down to the bit.
"""

from .errors import (
    ArgumentError,
    DataError,
    FormatError,
    InsufficientDataError,
    PanoliftError,
    ProviderError,
)
from .fileio import read_pfm, read_png, write_pfm, write_png
from .fusion import (
    AffineAlignment,
    FusionResult,
    InverseDepthMap,
    LaplacianPyramid,
    align_scale_shift,
    build_pyramid,
    collapse_pyramid,
    fuse,
    to_inverse,
)
from .geometry import (
    FACE_ORDER,
    CubemapFaceSet,
    FaceCamera,
    FaceId,
    cubemap_to_equirect,
    direction_to_pixel,
    equirect_to_cubemap,
    face_assignment,
    face_basis,
    face_directions,
    pixel_to_direction,
)
from .lifting import GaussianSet, LiftParams, lift_face, rotation_to_ray
from .metrics import SeamReport, psnr, psnr_db_capped, seam_consistency, timing_report
from .pipeline import PipelineConfig, SceneManifest, derive_face_size, run_pipeline
from .providers import DepthRequest, ProviderConfig, SyntheticDepthSource, fetch_depth
from .renderer import (
    PinholeCamera,
    RenderSettings,
    depth_render,
    render_equirect,
    render_perspective,
)
from .scene import Frustum, Scene, cull, load_ply, merge, save_ply
from .synthroom import CubeRoom, render_ground_truth

__version__ = "0.1.0"

__all__ = [
    "AffineAlignment",
    "ArgumentError",
    "CubeRoom",
    "CubemapFaceSet",
    "DataError",
    "DepthRequest",
    "FACE_ORDER",
    "FaceCamera",
    "FaceId",
    "FormatError",
    "Frustum",
    "FusionResult",
    "GaussianSet",
    "InsufficientDataError",
    "InverseDepthMap",
    "LaplacianPyramid",
    "LiftParams",
    "PanoliftError",
    "PinholeCamera",
    "PipelineConfig",
    "ProviderConfig",
    "ProviderError",
    "RenderSettings",
    "Scene",
    "SceneManifest",
    "SeamReport",
    "SyntheticDepthSource",
    "align_scale_shift",
    "build_pyramid",
    "collapse_pyramid",
    "cubemap_to_equirect",
    "cull",
    "depth_render",
    "derive_face_size",
    "direction_to_pixel",
    "equirect_to_cubemap",
    "face_assignment",
    "face_basis",
    "face_directions",
    "fetch_depth",
    "fuse",
    "lift_face",
    "load_ply",
    "merge",
    "pixel_to_direction",
    "psnr",
    "psnr_db_capped",
    "read_pfm",
    "read_png",
    "render_equirect",
    "render_perspective",
    "rotation_to_ray",
    "run_pipeline",
    "save_ply",
    "seam_consistency",
    "to_inverse",
    "timing_report",
    "write_pfm",
    "write_png",
]

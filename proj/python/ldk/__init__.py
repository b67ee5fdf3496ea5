"""Photometric depth refinement, evaluation and registration.

Depth and normal arrays use NaN for invalid pixels. Images are (h, w, 3)
RGB in [0, 1] and albedo is (h, w, 2) hue and saturation.
"""

from ._core import (
    DomainError,
    Error,
    FormatError,
    IoError,
    OptimizationError,
    ProjectionError,
    RegistrationError,
    Rig,
    __version__,
    auce,
    ause,
    depth_metrics,
    fuse_ensemble,
    icp,
    normal_mae,
    normals_from_depth,
    pose_errors,
    raycast_sphere,
    raycast_tube,
    refine,
    render_image,
    run_cli,
)

__all__ = [
    "DomainError",
    "Error",
    "FormatError",
    "IoError",
    "OptimizationError",
    "ProjectionError",
    "RegistrationError",
    "Rig",
    "__version__",
    "auce",
    "ause",
    "depth_metrics",
    "fuse_ensemble",
    "icp",
    "normal_mae",
    "normals_from_depth",
    "pose_errors",
    "raycast_sphere",
    "raycast_tube",
    "refine",
    "render_image",
    "run_cli",
]

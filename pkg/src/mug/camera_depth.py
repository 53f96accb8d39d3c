"""Pinhole camera intrinsics, the dimensionless depth measure, root
back-projection, and absolute mesh assembly.

Depths are millimeters; image coordinates are raw-image pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "default_intrinsics",
    "depth_to_measure",
    "measure_to_depth",
    "backproject_root",
    "project_points",
    "absolute_mesh",
    "DEFAULT_FOCAL",
    "DEPTH_ALPHA",
]

DEFAULT_FOCAL = 1500.0
DEPTH_ALPHA = 200.0


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("focal length must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]]
        )


def default_intrinsics(image_w: float, image_h: float, f: float = DEFAULT_FOCAL) -> CameraIntrinsics:
    """Fallback camera: fixed focal length, principal point at the image center."""
    return CameraIntrinsics(f=f, cx=image_w / 2.0, cy=image_h / 2.0)


def depth_to_measure(depth_mm, long_edge_px: float, f: float, alpha: float = DEPTH_ALPHA):
    """Dimensionless depth measure D * S / (1000 * alpha * f)."""
    if long_edge_px <= 0 or f <= 0:
        raise ValueError("long edge and focal length must be positive")
    return np.asarray(depth_mm, dtype=np.float64) * long_edge_px / (1000.0 * alpha * f)


def measure_to_depth(measure, long_edge_px: float, f: float, alpha: float = DEPTH_ALPHA):
    """Exact inverse of depth_to_measure."""
    if long_edge_px <= 0 or f <= 0:
        raise ValueError("long edge and focal length must be positive")
    return np.asarray(measure, dtype=np.float64) * (1000.0 * alpha * f) / long_edge_px


def backproject_root(X: float, Y: float, depth_mm: float, cam: CameraIntrinsics):
    """Camera-frame root position (x, y, D) from its pixel location and depth."""
    if depth_mm <= 0:
        raise ValueError("cannot back-project a non-positive depth")
    x = (X - cam.cx) * depth_mm / cam.f
    y = (Y - cam.cy) * depth_mm / cam.f
    return np.array([x, y, depth_mm], dtype=np.float64)


def project_points(points_mm: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Perspective projection of camera-frame points (mm) to pixels."""
    p = np.asarray(points_mm, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("points behind the camera cannot be projected")
    return np.stack(
        [cam.f * p[..., 0] / z + cam.cx, cam.f * p[..., 1] / z + cam.cy], axis=-1
    )


def absolute_mesh(mesh_rel_mm: np.ndarray, root_mm: np.ndarray) -> np.ndarray:
    """Root-relative mesh plus the recovered root position."""
    return np.asarray(mesh_rel_mm, dtype=np.float64) + np.asarray(root_mm, dtype=np.float64)

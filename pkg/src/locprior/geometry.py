"""Pinhole camera helpers, rotation distances and square boxes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, ValidationError

ROTATION_TOL = 1e-5


class SquareBox(NamedTuple):
    """Axis-aligned square given by its center ``(u, v)`` and side length, in pixels."""

    u: float
    v: float
    size: float

    @property
    def x0(self) -> float:
        return self.u - self.size / 2.0

    @property
    def y0(self) -> float:
        return self.v - self.size / 2.0

    @property
    def x1(self) -> float:
        return self.u + self.size / 2.0

    @property
    def y1(self) -> float:
        return self.v + self.size / 2.0


def check_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValidationError(f"rotation must be a finite 3x3 matrix, got shape {R.shape}")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValidationError("matrix is not a proper rotation (R^T R != I or det != 1)")
    return R


def rot_z(theta_rad: float) -> np.ndarray:
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_axis_angle(axis, theta_rad: float) -> np.ndarray:
    """Rodrigues' formula."""
    k = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(k)
    if n == 0:
        raise ParameterError("rotation axis must be non-zero")
    k = k / n
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(theta_rad) * K + (1 - math.cos(theta_rad)) * (K @ K)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation via a unit quaternion."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def geodesic_distance(Ri, Rj) -> float:
    """Angle of ``Ri^T Rj`` divided by pi, so the result lies in ``[0, 1]``."""
    return float(pairwise_geodesic([Ri, Rj])[0, 1])


def pairwise_geodesic(rotations) -> np.ndarray:
    """All-pairs :func:`geodesic_distance`; symmetric bit for bit."""
    Rs = np.stack([check_rotation(R) for R in rotations]).reshape(-1, 9)
    # tr(Ri^T Rj) is the sum of elementwise products
    tr = (Rs[:, None, :] * Rs[None, :, :]).sum(axis=-1)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)) / math.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    f_virtual: float
    s_3d: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths fx, fy must be positive")
        if not self.f_virtual > 0:
            raise ValidationError("virtual focal length must be positive")
        if not self.s_3d > 0:
            raise ValidationError("3D model size must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K, f_virtual: float, s_3d: float) -> "CameraIntrinsics":
        K = np.asarray(K, dtype=np.float64)
        if K.shape != (3, 3):
            raise ValidationError(f"K must be 3x3, got {K.shape}")
        if abs(K[0, 1]) > 0 or np.any(K[2] != (0, 0, 1)) or K[1, 0] != 0:
            raise ValidationError("K must be upper triangular with zero skew and last row [0, 0, 1]")
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), f_virtual, s_3d)

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "f_virtual": self.f_virtual, "s_3d": self.s_3d}

    @classmethod
    def from_json(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(**{k: float(d[k]) for k in ("fx", "fy", "cx", "cy", "f_virtual", "s_3d")})
        except KeyError as e:
            raise ValidationError(f"intrinsics JSON missing field {e}") from None


def ground_truth_size(intr: CameraIntrinsics, depth: float) -> float:
    """Pixel size of the object at ``depth``: ``f_virtual * s_3d / depth``."""
    if not depth > 0:
        raise ParameterError(f"depth must be positive, got {depth}")
    return intr.f_virtual * intr.s_3d / depth


def project(T, intr: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = (float(c) for c in T)
    if not z > 0:
        raise ParameterError("point must lie in front of the camera")
    return intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy


def recover_translation(center, size: float, intr: CameraIntrinsics, K=None) -> np.ndarray:
    """Back-project the box center to the depth implied by its size.

    ``K`` overrides ``intr.K`` (useful for checking arbitrary matrices); a
    singular matrix raises :class:`ValidationError`.
    """
    if not size > 0:
        raise ParameterError(f"size must be positive, got {size}")
    K = intr.K if K is None else np.asarray(K, dtype=np.float64)
    if abs(np.linalg.det(K)) < 1e-12 or not np.all(np.isfinite(K)):
        raise ValidationError("intrinsic matrix is singular")
    depth = intr.f_virtual * intr.s_3d / size
    ray = np.linalg.solve(K, np.array([center[0], center[1], 1.0]))
    return depth * ray


def model_diameter(vertices) -> float:
    """Largest pairwise distance between model vertices (the ``s_3d`` convention)."""
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 2:
        return 0.0
    d = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(-1))
    return float(d.max())

"""Core geometry: pinhole camera, triangle meshes, anchored similarity transforms.

Camera convention: +Z forward, x right, y down, pixel origin at the top-left
corner of the image. All lengths are in meters, all image coordinates in
pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PointBehindCameraError

ROTATION_TOL = 1e-9
NORMAL_UNIT_TOL = 1e-6


def _as_float_array(value, shape, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_rotation(matrix: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1) and return it."""
    r = _as_float_array(matrix, (3, 3), "rotation")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0.0):
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > max(tol, 1e-9):
        raise ValueError("rotation must have determinant +1")
    return r


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics. fx/fy in pixels; (cx, cy) is the principal point."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")

    def to_dict(self):
        return {
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                   cy=float(d["cy"]), width=int(d["width"]), height=int(d["height"]))


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup in camera-space meters, optionally with unit vertex normals."""

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise ValueError("vertices must be an (n>=3, 3) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        if t.ndim != 2 or t.shape[1] != 3 or t.shape[0] < 1:
            raise ValueError("triangles must be an (m>=1, 3) array")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise ValueError("triangle indices out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.vertex_normals is not None:
            n = np.ascontiguousarray(np.asarray(self.vertex_normals, dtype=np.float64))
            if n.shape != v.shape:
                raise ValueError("vertex_normals must match vertices in shape")
            lengths = np.linalg.norm(n, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_UNIT_TOL):
                raise ValueError("vertex normals must have unit norm")
            object.__setattr__(self, "vertex_normals", n)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class AnchoredSimilarityTransform:
    """Uniform scale + translation about a fixed anchor, with a rotation.

    Maps a point p to  center + translation + scale * R @ (p - center),
    i.e. the object is rotated and scaled about its anchor (normally the mesh
    coordinate means) and then shifted.
    """

    center: np.ndarray
    translation: np.ndarray
    scale: float
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_float_array(self.center, (3,), "center"))
        object.__setattr__(self, "translation",
                           _as_float_array(self.translation, (3,), "translation"))
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", check_rotation(self.rotation))

    @classmethod
    def identity(cls, center=(0.0, 0.0, 0.0)):
        return cls(center=center, translation=np.zeros(3), scale=1.0, rotation=np.eye(3))

    def as_matrix_offset(self):
        """Return (M, v) with p -> M @ p + v equivalent to this transform."""
        m = self.scale * self.rotation
        v = self.center + self.translation - m @ self.center
        return m, v

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        m, v = self.as_matrix_offset()
        return np.asarray(points, dtype=np.float64) @ m.T + v

    def to_dict(self):
        return {
            "center": [float(x) for x in self.center],
            "translation": [float(x) for x in self.translation],
            "scale": float(self.scale),
            "rotation": [[float(x) for x in row] for row in self.rotation],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(center=d["center"], translation=d["translation"],
                   scale=d["scale"], rotation=d["rotation"])


@dataclass(frozen=True)
class BBox2D:
    """Axis-aligned 2D box in pixel coordinates; image y grows downward."""

    x_left: float
    x_right: float
    y_upper: float
    y_lower: float

    def __post_init__(self):
        if not self.x_left < self.x_right:
            raise ValueError("x_left must be < x_right")
        if not self.y_upper < self.y_lower:
            raise ValueError("y_upper must be < y_lower (y grows downward)")

    @property
    def width(self) -> float:
        return self.x_right - self.x_left

    @property
    def height(self) -> float:
        return self.y_lower - self.y_upper

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_left + self.x_right), 0.5 * (self.y_upper + self.y_lower))


def project(camera: PinholeCamera, point) -> np.ndarray:
    """Project a camera-space point to pixel coordinates.

    Raises PointBehindCameraError for Z <= 0.
    """
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError("point must be a 3-vector")
    if not p[2] > 0:
        raise PointBehindCameraError(f"point has non-positive depth Z={p[2]}")
    return np.array([camera.cx + camera.fx * p[0] / p[2],
                     camera.cy + camera.fy * p[1] / p[2]])


def mesh_means(mesh: TriangleMesh) -> np.ndarray:
    """Arithmetic mean of all vertex coordinates (the transform anchor)."""
    return mesh.vertices.mean(axis=0)


def apply_transform(mesh: TriangleMesh, transform: AnchoredSimilarityTransform) -> TriangleMesh:
    """Transform vertices by the anchored similarity; normals rotate only."""
    vertices = transform.apply_points(mesh.vertices)
    normals = None
    if mesh.vertex_normals is not None:
        normals = mesh.vertex_normals @ transform.rotation.T
    return TriangleMesh(vertices=vertices, triangles=mesh.triangles, vertex_normals=normals)

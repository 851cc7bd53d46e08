"""Software z-buffer renderer: depth maps, normal maps, extremal visible points.

The triangle-fill inner loop runs in a compiled extension when available and
falls back to a numpy implementation otherwise. Selection happens at import
time; set SCENELAYOUT_RASTER=python|cython to force a backend. Both kernels
produce bit-identical buffers.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyVisibilityError
from ..geometry import PinholeCamera, TriangleMesh

NEAR_PLANE = 1e-4

_choice = os.environ.get("SCENELAYOUT_RASTER", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ValueError(f"SCENELAYOUT_RASTER must be auto, cython or python, got {_choice!r}")
if _choice == "python":
    from . import _kernels_py as _kernel
else:
    try:
        from . import _kernels as _kernel  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "SCENELAYOUT_RASTER=cython but the compiled kernel is not built; "
                "reinstall the package with a C toolchain available")
        from . import _kernels_py as _kernel


def raster_backend() -> str:
    """Name of the active triangle-fill backend ('cython' or 'python')."""
    return _kernel.BACKEND_NAME


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel nearest-surface depth in meters; 0 marks background."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth values must be a 2-d array")
        if not np.all(v >= 0.0):
            raise ValueError("depth values must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def covered(self) -> np.ndarray:
        return self.values > 0.0

    @property
    def nothing_visible(self) -> bool:
        return not bool(self.covered.any())


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel camera-space unit normals; (0,0,0) marks background."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError("normal values must be an (h, w, 3) array")
        lengths = np.linalg.norm(v, axis=2)
        cov = lengths > 0.0
        if cov.any() and np.any(np.abs(lengths[cov] - 1.0) > 1e-4):
            raise ValueError("covered pixels must carry unit normals")
        object.__setattr__(self, "values", v)

    @property
    def covered(self) -> np.ndarray:
        return np.any(self.values != 0.0, axis=2)


@dataclass(frozen=True)
class SurfacePoint:
    """A visible surface point with its 3D position and pixel coordinates."""

    point3: np.ndarray
    point2: np.ndarray


@dataclass(frozen=True)
class ExtremalVisiblePoints:
    """Visible surface points attaining min/max image x and y."""

    left: SurfacePoint
    right: SurfacePoint
    upper: SurfacePoint
    lower: SurfacePoint

    def __post_init__(self):
        if self.left.point2[0] > self.right.point2[0]:
            raise ValueError("left extremal lies right of the right extremal")
        if self.upper.point2[1] > self.lower.point2[1]:
            raise ValueError("upper extremal lies below the lower extremal")


def _clip_triangle(corners, attrs, znear):
    """Sutherland-Hodgman clip of one triangle against Z >= znear."""
    out_pts, out_att = [], []
    n = len(corners)
    for i in range(n):
        a = corners[i]
        b = corners[(i + 1) % n]
        za, zb = a[2], b[2]
        if za >= znear:
            out_pts.append(a)
            out_att.append(attrs[i] if attrs is not None else None)
        if (za >= znear) != (zb >= znear):
            t = (znear - za) / (zb - za)
            out_pts.append(a + t * (b - a))
            if attrs is not None:
                ai = attrs[i]
                bi = attrs[(i + 1) % n]
                out_att.append(ai + t * (bi - ai))
            else:
                out_att.append(None)
    return out_pts, out_att


def _prepare(vertices, triangles, attrs, camera):
    """Clip against the near plane and project to screen space.

    Returns kernel inputs (u, v, invz, attrs-over-z, int32 triangles). attrs
    may be None; the returned attribute array then has zero channels.
    """
    z = vertices[:, 2]
    tri_z = z[triangles]
    if np.all(tri_z >= NEAR_PLANE):
        verts = vertices
        tris = triangles
        att = attrs
    else:
        front = tri_z >= NEAR_PLANE
        keep = front.all(axis=1)
        gone = (~front).all(axis=1)
        pts, att_rows, tri_rows = [], [], []
        for t in range(triangles.shape[0]):
            if gone[t]:
                continue
            idx = triangles[t]
            if keep[t]:
                poly = [vertices[i] for i in idx]
                poly_att = [attrs[i] for i in idx] if attrs is not None else None
            else:
                poly, poly_att = _clip_triangle(
                    [vertices[i] for i in idx],
                    [attrs[i] for i in idx] if attrs is not None else None,
                    NEAR_PLANE)
                if len(poly) < 3:
                    continue
            base = len(pts)
            pts.extend(poly)
            if attrs is not None:
                att_rows.extend(poly_att)
            for k in range(2, len(poly)):
                tri_rows.append((base, base + k - 1, base + k))
        if not tri_rows:
            verts = np.zeros((3, 3))
            verts[:, 2] = 1.0
            tris = np.zeros((0, 3), dtype=np.int64)
            att = np.zeros((3, attrs.shape[1])) if attrs is not None else None
        else:
            verts = np.asarray(pts, dtype=np.float64)
            tris = np.asarray(tri_rows, dtype=np.int64)
            att = np.asarray(att_rows, dtype=np.float64) if attrs is not None else None

    vz = verts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        invz = 1.0 / vz
        u = camera.cx + camera.fx * verts[:, 0] / vz
        v = camera.cy + camera.fy * verts[:, 1] / vz
    if att is None:
        aoz = np.zeros((verts.shape[0], 0), dtype=np.float64)
    else:
        aoz = att * invz[:, None]
    return (np.ascontiguousarray(u), np.ascontiguousarray(v),
            np.ascontiguousarray(invz), np.ascontiguousarray(aoz),
            np.ascontiguousarray(tris.astype(np.int32, copy=False)))


def _render_arrays(vertices, triangles, attrs, camera):
    """Rasterize raw arrays. Returns (zbuf with +inf background, attr buffer)."""
    u, v, invz, aoz, tris = _prepare(vertices, triangles, attrs, camera)
    zbuf = np.full((camera.height, camera.width), np.inf, dtype=np.float64)
    abuf = np.zeros((camera.height, camera.width, aoz.shape[1]), dtype=np.float64)
    if tris.shape[0]:
        _kernel.fill(u, v, invz, aoz, tris, zbuf, abuf)
    return zbuf, abuf


def _depth_from_zbuf(zbuf):
    return np.where(np.isfinite(zbuf), zbuf, 0.0)


def _face_normal_soup(mesh):
    """Expand to a triangle soup carrying the flat per-face normal at each corner."""
    v = mesh.vertices
    t = mesh.triangles
    a = v[t[:, 1]] - v[t[:, 0]]
    b = v[t[:, 2]] - v[t[:, 0]]
    n = np.cross(a, b)
    lengths = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, lengths, out=np.zeros_like(n), where=lengths > 0)
    verts = v[t].reshape(-1, 3)
    normals = np.repeat(n, 3, axis=0)
    tris = np.arange(verts.shape[0], dtype=np.int64).reshape(-1, 3)
    return verts, tris, normals


def rasterize_depth(mesh: TriangleMesh, camera: PinholeCamera) -> DepthMap:
    """Render the per-pixel nearest-surface depth (both faces, no culling).

    A mesh entirely behind the camera yields an all-background map; check
    DepthMap.nothing_visible.
    """
    zbuf, _ = _render_arrays(mesh.vertices, mesh.triangles, None, camera)
    return DepthMap(values=_depth_from_zbuf(zbuf))


def rasterize_normals(mesh: TriangleMesh, camera: PinholeCamera) -> NormalMap:
    """Render interpolated, renormalized camera-space normals.

    Uses vertex normals when the mesh has them, flat face normals otherwise.
    Visibility is identical to rasterize_depth for the same inputs.
    """
    if mesh.vertex_normals is not None:
        _, abuf = _render_arrays(mesh.vertices, mesh.triangles,
                                 mesh.vertex_normals, camera)
    else:
        verts, tris, normals = _face_normal_soup(mesh)
        _, abuf = _render_arrays(verts, tris, normals, camera)
    return NormalMap(values=_normalize_map(abuf))


def _normalize_map(abuf):
    lengths = np.linalg.norm(abuf, axis=2, keepdims=True)
    return np.divide(abuf, lengths, out=np.zeros_like(abuf), where=lengths > 1e-12)


def render_posed(mesh: TriangleMesh, transform, camera: PinholeCamera,
                 with_normals: bool = False):
    """Rasterize a transformed mesh without materializing a new TriangleMesh.

    Returns (zbuf, normals) where zbuf keeps +inf for background and normals
    is a renormalized (h, w, 3) array (None when with_normals is False).
    """
    m, off = transform.as_matrix_offset()
    if not with_normals:
        zbuf, _ = _render_arrays(mesh.vertices @ m.T + off, mesh.triangles,
                                 None, camera)
        return zbuf, None
    if mesh.vertex_normals is not None:
        verts = mesh.vertices @ m.T + off
        tris = mesh.triangles
        normals = mesh.vertex_normals @ transform.rotation.T
    else:
        base_verts, tris, base_normals = _face_normal_soup(mesh)
        verts = base_verts @ m.T + off
        normals = base_normals @ transform.rotation.T
    zbuf, abuf = _render_arrays(verts, tris, normals, camera)
    return zbuf, _normalize_map(abuf)


def mean_visible_depth(depth: DepthMap) -> float:
    """Mean depth over covered pixels; raises if nothing is covered."""
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    covered = values > 0.0
    if not covered.any():
        raise EmptyVisibilityError("no covered pixels")
    return float(values[covered].mean())


def _extremal_data(depth_values, camera, covered=None):
    """Extremal covered pixels and their backprojected 3D surface points.

    Ties resolve to the smallest depth, then the smallest y (left/right) or
    smallest x (upper/lower). The 3D point is the surface point along the
    pixel-center ray, so its projection is exactly the pixel center.
    depth_values may use either background convention (0 or +inf) as long as
    `covered` marks surface pixels; it defaults to `depth_values > 0`.
    """
    if covered is None:
        covered = depth_values > 0.0
    if not covered.any():
        raise EmptyVisibilityError("no covered pixels")
    cols = np.flatnonzero(covered.any(axis=0))
    rows = np.flatnonzero(covered.any(axis=1))

    def along_column(col):
        rr = np.flatnonzero(covered[:, col])
        r = rr[np.argmin(depth_values[rr, col])]
        return r, col

    def along_row(row):
        cc = np.flatnonzero(covered[row, :])
        c = cc[np.argmin(depth_values[row, cc])]
        return row, c

    picks = {
        "left": along_column(cols[0]),
        "right": along_column(cols[-1]),
        "upper": along_row(rows[0]),
        "lower": along_row(rows[-1]),
    }
    out = {}
    for name, (r, c) in picks.items():
        z = depth_values[r, c]
        px = c + 0.5
        py = r + 0.5
        p3 = np.array([(px - camera.cx) * z / camera.fx,
                       (py - camera.cy) * z / camera.fy,
                       z])
        out[name] = (p3, np.array([px, py]))
    return out


def extremal_visible_points(mesh: TriangleMesh, camera: PinholeCamera,
                            depth: DepthMap | None = None) -> ExtremalVisiblePoints:
    """Locate the leftmost/rightmost/uppermost/lowermost visible surface points.

    Pass a pre-rendered depth map to avoid re-rasterizing.
    """
    if depth is None:
        depth = rasterize_depth(mesh, camera)
    data = _extremal_data(depth.values, camera)
    return ExtremalVisiblePoints(
        left=SurfacePoint(*data["left"]),
        right=SurfacePoint(*data["right"]),
        upper=SurfacePoint(*data["upper"]),
        lower=SurfacePoint(*data["lower"]),
    )

"""Procedural test shapes and icosphere direction sampling."""
from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    tris = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return verts, tris


def _subdivide(verts, tris):
    verts = list(verts)
    midpoint = {}

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            p = (verts[i] + verts[j]) / 2.0
            p = p / np.linalg.norm(p)
            midpoint[key] = len(verts)
            verts.append(p)
        return midpoint[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.asarray(verts), np.asarray(out, dtype=np.int64)


def icosphere_vertices(subdivisions: int) -> np.ndarray:
    """Unit sphere directions from a subdivided icosahedron (12, 42, 162, ...)."""
    verts, tris = _icosahedron()
    for _ in range(subdivisions):
        verts, tris = _subdivide(verts, tris)
    return verts


def make_icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    """Icosphere with smooth (exact radial) vertex normals."""
    verts, tris = _icosahedron()
    for _ in range(subdivisions):
        verts, tris = _subdivide(verts, tris)
    return TriangleMesh(vertices=radius * verts, triangles=tris,
                        vertex_normals=verts.copy())


def _box(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
                        [hi[0], hi[1], lo[2]], [lo[0], hi[1], lo[2]],
                        [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
                        [hi[0], hi[1], hi[2]], [lo[0], hi[1], hi[2]]])
    faces = np.array([
        [0, 2, 1], [0, 3, 2],      # z = lo
        [4, 5, 6], [4, 6, 7],      # z = hi
        [0, 1, 5], [0, 5, 4],      # y = lo
        [3, 6, 2], [3, 7, 6],      # y = hi
        [0, 4, 7], [0, 7, 3],      # x = lo
        [1, 2, 6], [1, 6, 5],      # x = hi
    ], dtype=np.int64)
    return corners, faces


def make_cube(size: float = 1.0) -> TriangleMesh:
    """Axis-aligned cube centered at the origin (flat-shaded)."""
    h = size / 2.0
    verts, tris = _box([-h, -h, -h], [h, h, h])
    return TriangleMesh(vertices=verts, triangles=tris)


def make_cylinder(radius: float = 0.45, height: float = 1.3,
                  segments: int = 24) -> TriangleMesh:
    """Closed cylinder along the y axis, centered at the origin (flat-shaded)."""
    if segments < 3:
        raise ValueError("need at least 3 segments")
    angles = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), np.zeros(segments),
                     radius * np.sin(angles)], axis=1)
    top = ring + [0.0, height / 2.0, 0.0]
    bottom = ring + [0.0, -height / 2.0, 0.0]
    verts = np.vstack([top, bottom,
                       [[0.0, height / 2.0, 0.0], [0.0, -height / 2.0, 0.0]]])
    ctop = 2 * segments
    cbot = 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + i])
        tris.append([j, segments + j, segments + i])
        tris.append([ctop, j, i])
        tris.append([cbot, segments + i, segments + j])
    return TriangleMesh(vertices=verts, triangles=np.asarray(tris, dtype=np.int64))


def make_l_bracket(long_leg: float = 1.0, short_leg: float = 0.7) -> TriangleMesh:
    """Two joined boxes forming an L with unequal leg lengths, widths and
    thicknesses, so no rotation (in particular no 180-degree flip) maps the
    shape near itself and rotation recovery from renders is identifiable."""
    v1, t1 = _box([0.0, 0.0, 0.0], [long_leg, 0.4, 0.35])
    v2, t2 = _box([0.0, 0.4, 0.0], [0.3, 0.4 + short_leg, 0.6])
    verts = np.vstack([v1, v2])
    tris = np.vstack([t1, t2 + len(v1)])
    return TriangleMesh(vertices=verts - verts.mean(axis=0), triangles=tris)


SHAPE_LIBRARY = {
    "cube": make_cube,
    "icosphere": make_icosphere,
    "cylinder": make_cylinder,
    "l_bracket": make_l_bracket,
}


def make_shape(name: str) -> TriangleMesh:
    if name not in SHAPE_LIBRARY:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPE_LIBRARY)}")
    return SHAPE_LIBRARY[name]()

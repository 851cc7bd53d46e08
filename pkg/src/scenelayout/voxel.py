"""Surface voxelization: active-voxel indices via conservative triangle-box tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeshError
from .geometry import TriangleMesh


@dataclass(frozen=True)
class VoxelGrid:
    """Cubic-cell grid spanning a mesh's axis-aligned bounding box."""

    resolution: int
    active: frozenset
    origin: np.ndarray
    voxel_size: float

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        for idx in self.active:
            if len(idx) != 3 or any(i < 0 or i >= self.resolution for i in idx):
                raise ValueError(f"active index {idx} outside [0, resolution)^3")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "voxel_size", float(self.voxel_size))


def _triangle_box_overlaps(v0, v1, v2, centers, half):
    """Separating-axis test of one triangle against many cubes (vectorized).

    centers: (k, 3) cube centers, half: scalar half-extent. Touching counts
    as overlap (separation requires a strict gap), which keeps the result
    conservative.
    """
    verts = np.stack([v0, v1, v2])          # (3, 3)
    edges = np.stack([v1 - v0, v2 - v1, v0 - v2])

    alive = np.ones(len(centers), dtype=bool)

    # Box face normals: triangle AABB vs cube extent.
    tmin = verts.min(axis=0)
    tmax = verts.max(axis=0)
    for k in range(3):
        c = centers[:, k]
        alive &= ~((tmin[k] - c > half) | (tmax[k] - c < -half))
    if not alive.any():
        return alive

    # Triangle plane and the nine edge cross-product axes.
    axes = [np.cross(edges[0], edges[1])]
    basis = np.eye(3)
    for e in edges:
        for b in basis:
            axes.append(np.cross(b, e))
    for a in axes:
        r = half * np.abs(a).sum()
        p = verts @ a                        # projections of the 3 vertices
        t = centers[alive] @ a
        lo = p.min() - t
        hi = p.max() - t
        keep = ~((lo > r) | (hi < -r))
        idx = np.flatnonzero(alive)
        alive[idx[~keep]] = False
        if not alive.any():
            break
    return alive


def voxelize(mesh: TriangleMesh, resolution: int) -> VoxelGrid:
    """Mark every grid cell that intersects the mesh surface.

    The grid uses cubic cells of size max_extent / resolution with its origin
    at the mesh bounding-box minimum, so it always covers the full box.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    v = mesh.vertices
    vmin = v.min(axis=0)
    vmax = v.max(axis=0)
    extent = float((vmax - vmin).max())
    if extent <= 0.0:
        raise DegenerateMeshError("mesh bounding box has zero extent")
    size = extent / resolution
    half = 0.5 * size

    active = set()
    for tri in mesh.triangles:
        p0, p1, p2 = v[tri[0]], v[tri[1]], v[tri[2]]
        lo = np.minimum(np.minimum(p0, p1), p2)
        hi = np.maximum(np.maximum(p0, p1), p2)
        i0 = np.clip(np.floor((lo - vmin) / size).astype(int), 0, resolution - 1)
        i1 = np.clip(np.floor((hi - vmin) / size).astype(int), 0, resolution - 1)
        ii, jj, kk = np.meshgrid(*(np.arange(a, b + 1) for a, b in zip(i0, i1)),
                                 indexing="ij")
        cand = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        already = np.fromiter((tuple(c) in active for c in cand), dtype=bool,
                              count=len(cand))
        cand = cand[~already]
        if len(cand) == 0:
            continue
        centers = vmin + (cand + 0.5) * size
        hit = _triangle_box_overlaps(p0, p1, p2, centers, half)
        for c in cand[hit]:
            active.add((int(c[0]), int(c[1]), int(c[2])))

    return VoxelGrid(resolution=resolution, active=frozenset(active),
                     origin=vmin, voxel_size=size)

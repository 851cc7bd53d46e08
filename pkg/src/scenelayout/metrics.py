"""Evaluation metrics: Chamfer distance, F-score, box volume IoU, rigid alignment.

Chamfer convention: symmetric mean of unsquared nearest-neighbor L2 distances,
halved. A squared-distance variant is available behind a flag but is not the
default. Reports multiply Chamfer by 100 so scores read as percentages of the
(normalized) scene unit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, DegenerateMeshError
from .geometry import TriangleMesh


@dataclass(frozen=True)
class AABB3:
    """Axis-aligned 3D box."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if np.any(lo > hi):
            raise ValueError("min must be <= max componentwise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points):
        p = np.asarray(points, dtype=np.float64)
        return cls(min=p.min(axis=0), max=p.max(axis=0))

    @property
    def volume(self) -> float:
        return float(np.prod(self.max - self.min))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation (no scale)."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def _points(a, name="points"):
    p = np.asarray(a, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty (n, 3) array")
    return p


def sample_points(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """Area-weighted uniform surface samples; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v = mesh.vertices
    t = mesh.triangles
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    total = areas.sum()
    if total <= 0:
        raise DegenerateMeshError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    sq = np.sqrt(r1)
    w0 = 1.0 - sq
    w1 = sq * (1.0 - r2)
    w2 = sq * r2
    return (w0[:, None] * v[t[idx, 0]] + w1[:, None] * v[t[idx, 1]]
            + w2[:, None] * v[t[idx, 2]])


def _nn_distances(src, dst):
    d, _ = cKDTree(dst).query(src, k=1)
    return d


def chamfer(a, b, squared: bool = False) -> float:
    """Symmetric mean nearest-neighbor distance, halved.

    With squared=True the per-point distances are squared before averaging
    (non-default convention).
    """
    pa = _points(a, "a")
    pb = _points(b, "b")
    da = _nn_distances(pa, pb)
    db = _nn_distances(pb, pa)
    if squared:
        da = da ** 2
        db = db ** 2
    return float(0.5 * (da.mean() + db.mean()))


def fscore(a, b, tau: float = 0.1) -> float:
    """F-score (percentage) at distance threshold tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    pa = _points(a, "a")
    pb = _points(b, "b")
    precision = float((_nn_distances(pa, pb) <= tau).mean())
    recall = float((_nn_distances(pb, pa) <= tau).mean())
    if precision + recall == 0:
        return 0.0
    return 200.0 * precision * recall / (precision + recall)


def volume_iou(a: AABB3, b: AABB3) -> float:
    """Intersection-over-union of two boxes; identical boxes score 1 even
    when degenerate, otherwise zero-volume boxes score 0."""
    if np.array_equal(a.min, b.min) and np.array_equal(a.max, b.max):
        return 1.0
    lo = np.maximum(a.min, b.min)
    hi = np.minimum(a.max, b.max)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return inter / union


def _kabsch(src, dst):
    """Closed-form least-squares rigid fit mapping src onto dst (paired rows)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, svals, vt = np.linalg.svd(h)
    if svals[1] <= max(svals[0], 1.0) * 1e-12:
        raise DegenerateGeometryError("correspondences are (near-)collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cd - r @ cs
    return RigidTransform(rotation=r, translation=t)


def align_rigid(pred, gt, correspondences=None, max_iters: int = 30,
                tol: float = 1e-6) -> RigidTransform:
    """Rigid (rotation + translation) alignment of pred onto gt.

    With `correspondences` — an (k, 2) array of (pred index, gt index) pairs,
    k >= 3 — the fit is the closed-form least-squares solution. Without it,
    nearest-neighbor rigid refinement runs from the identity for `max_iters`
    iterations or until the mean match distance changes by less than `tol`
    relative.
    """
    p = _points(pred, "pred")
    g = _points(gt, "gt")
    if correspondences is not None:
        corr = np.asarray(correspondences, dtype=np.int64)
        if corr.ndim != 2 or corr.shape[1] != 2 or corr.shape[0] < 3:
            raise ValueError("correspondences must be a (k>=3, 2) index array")
        return _kabsch(p[corr[:, 0]], g[corr[:, 1]])

    tree = cKDTree(g)
    transform = RigidTransform(rotation=np.eye(3), translation=np.zeros(3))
    prev = None
    for _ in range(max_iters):
        moved = transform.apply(p)
        dist, nn = tree.query(moved, k=1)
        fit = _kabsch(moved, g[nn])
        transform = RigidTransform(rotation=fit.rotation @ transform.rotation,
                                   translation=fit.rotation @ transform.translation
                                   + fit.translation)
        mean_dist = float(dist.mean())
        if prev is not None and abs(prev - mean_dist) <= tol * max(prev, 1e-300):
            break
        prev = mean_dist
    return transform

"""Rotation estimation by render-and-compare over a discretized rotation grid.

Hypotheses are scored on normal maps: the mesh is textured by its surface
normals, rendered under each candidate rotation (after a quick one-step
scale/translation refit), and compared against the observed normal map via
mean angular error minus a coverage bonus. The estimator is deliberately an
interface: an external pose service can be substituted through a simple
file-based adapter.
"""
from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .errors import EmptyObservationError, ExternalEstimatorError, SceneLayoutError
from .geometry import AnchoredSimilarityTransform, PinholeCamera, TriangleMesh, check_rotation
from .objio import save_obj
from .raster import DepthMap, NormalMap, _face_normal_soup, _render_arrays, render_posed
from .solver import _iterate_raw, observation_from_depth

COVERAGE_WEIGHT = 0.5
# One refit step per hypothesis is measurably too coarse: renders of the true
# rotation stay misaligned enough that near-symmetric flips can win. Two steps
# settle the pose (the second usually converges early) at ~1.5x the cost.
HYPOTHESIS_REFINE_ITERS = 2


@dataclass(frozen=True)
class RotationGrid:
    """Rotation hypotheses: viewpoints on the sphere x in-plane spins."""

    viewpoint_count: int
    inplane_steps: int
    rotations: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotations, dtype=np.float64)
        if r.shape != (self.viewpoint_count * self.inplane_steps, 3, 3):
            raise ValueError("rotation count must be viewpoint_count * inplane_steps")
        gram = np.einsum("kij,kil->kjl", r, r)
        if not np.allclose(gram, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("grid rotations must be orthonormal")
        if not np.allclose(np.linalg.det(r), 1.0, atol=1e-9, rtol=0.0):
            raise ValueError("grid rotations must have determinant +1")
        object.__setattr__(self, "rotations", r)


@dataclass(frozen=True)
class RotationScore:
    """Score of one grid hypothesis against the observed normal map."""

    index: int
    normal_error: float
    coverage: float

    def __post_init__(self):
        if not (0.0 <= self.normal_error <= np.pi + 1e-12):
            raise ValueError("normal_error must lie in [0, pi]")
        if not (0.0 <= self.coverage <= 1.0 + 1e-12):
            raise ValueError("coverage must lie in [0, 1]")

    @property
    def score(self) -> float:
        return self.normal_error - COVERAGE_WEIGHT * self.coverage


def _fibonacci_directions(count):
    k = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * k / count)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * k
    return np.stack([np.cos(theta) * np.sin(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(phi)], axis=1)


def _align_z_to(direction):
    """Minimal rotation taking +z to the given unit direction."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, direction))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return np.diag([1.0, -1.0, -1.0])
    axis = np.cross(z, direction)
    axis /= np.linalg.norm(axis)
    angle = np.arccos(np.clip(c, -1.0, 1.0))
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def make_rotation_grid(viewpoint_count: int = 42, inplane_steps: int = 12) -> RotationGrid:
    """Build the hypothesis grid: subdivided-icosahedron viewpoints (12, 42,
    162, 642) with a Fibonacci-lattice fallback for other counts, each combined
    with evenly spaced in-plane spins."""
    if viewpoint_count < 1 or inplane_steps < 1:
        raise ValueError("grid dimensions must be positive")
    from .shapes import icosphere_vertices

    icosa_counts = {12: 0, 42: 1, 162: 2, 642: 3}
    if viewpoint_count in icosa_counts:
        dirs = icosphere_vertices(icosa_counts[viewpoint_count])
    else:
        dirs = _fibonacci_directions(viewpoint_count)
    order = np.lexsort((dirs[:, 0], dirs[:, 1], dirs[:, 2]))
    dirs = dirs[order]

    rotations = np.empty((viewpoint_count * inplane_steps, 3, 3))
    angles = 2.0 * np.pi * np.arange(inplane_steps) / inplane_steps
    spins = np.stack([np.array([[np.cos(a), -np.sin(a), 0.0],
                                [np.sin(a), np.cos(a), 0.0],
                                [0.0, 0.0, 1.0]]) for a in angles])
    for i, d in enumerate(dirs):
        base = _align_z_to(d)
        for k in range(inplane_steps):
            rotations[i * inplane_steps + k] = base @ spins[k]
    return RotationGrid(viewpoint_count=viewpoint_count,
                        inplane_steps=inplane_steps, rotations=rotations)


def geodesic_distance(r1, r2) -> float:
    """Angle of the relative rotation between two rotation matrices."""
    c = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def grid_nn_spacing(grid: RotationGrid) -> float:
    """Largest nearest-neighbor geodesic distance over the grid."""
    r = grid.rotations
    rel = np.einsum("ikl,jkl->ij", r, r)  # trace(Ri^T Rj)
    ang = np.arccos(np.clip((rel - 1.0) / 2.0, -1.0, 1.0))
    np.fill_diagonal(ang, np.inf)
    return float(ang.min(axis=1).max())


def _masked_angular_error(a_values, b_values):
    cov_a = np.any(a_values != 0.0, axis=2)
    cov_b = np.any(b_values != 0.0, axis=2)
    both = cov_a & cov_b
    either = cov_a | cov_b
    n_either = int(either.sum())
    n_both = int(both.sum())
    if n_both == 0:
        return float(np.pi), 0.0
    dots = np.einsum("ij,ij->i", a_values[both], b_values[both])
    err = float(np.arccos(np.clip(dots, -1.0, 1.0)).mean())
    return err, n_both / n_either


def normal_angular_error(a: NormalMap, b: NormalMap):
    """Mean angular error over jointly covered pixels and the coverage IoU.

    Returns (error, coverage); (pi, 0) when the maps share no covered pixels.
    """
    if a.values.shape != b.values.shape:
        raise ValueError("normal maps must share dimensions")
    return _masked_angular_error(a.values, b.values)


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation matrix (quaternion method)."""
    u1, u2, u3 = rng.random(3)
    qw = math.sqrt(1.0 - u1) * math.sin(2.0 * math.pi * u2)
    qx = math.sqrt(1.0 - u1) * math.cos(2.0 * math.pi * u2)
    qy = math.sqrt(u1) * math.sin(2.0 * math.pi * u3)
    qz = math.sqrt(u1) * math.cos(2.0 * math.pi * u3)
    return np.array([
        [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
        [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
        [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
    ])


def _score_raw(zbuf, abuf, crop, tvals_crop, tcov_crop, n_target):
    """Angular error / coverage of a raw render against a unit-normal target.

    Joint coverage is a subset of the target's coverage, so the per-pixel work
    runs on the target's bounding crop only; full-frame render coverage enters
    just the IoU denominator.
    """
    rows, cols = crop
    cov = np.isfinite(zbuf)
    both = cov[rows, cols] & tcov_crop
    n_both = int(both.sum())
    n_either = int(cov.sum()) + n_target - n_both
    if n_both == 0:
        return float(np.pi), 0.0
    a = abuf[rows, cols][both]
    lengths = np.linalg.norm(a, axis=1)
    ok = lengths > 1e-12
    dots = np.zeros(n_both)
    dots[ok] = np.einsum("ij,ij->i", a[ok], tvals_crop[both][ok]) / lengths[ok]
    err = float(np.arccos(np.clip(dots, -1.0, 1.0)).mean())
    return err, n_both / n_either


def estimate_rotation(mesh: TriangleMesh, camera: PinholeCamera,
                      target_normals: NormalMap, target_depth: DepthMap,
                      initial: AnchoredSimilarityTransform, grid: RotationGrid):
    """Exhaustive render-and-compare over the rotation grid.

    Every hypothesis is rotated in, refit for scale/translation with a short
    solver run (seeded by `initial`), rendered as a normal map and scored
    normal_error - 0.5 * coverage against the target. Returns
    (best rotation, RotationScore); exact score ties resolve to the lowest
    grid index. Hypotheses whose refit fails score +inf.
    """
    if not target_normals.covered.any():
        raise EmptyObservationError("target normal map has no covered pixels")
    obs = observation_from_depth(target_depth)
    s0 = float(initial.scale)
    t0 = np.asarray(initial.translation, dtype=np.float64)

    if mesh.vertex_normals is not None:
        base_verts, base_tris, base_normals = (mesh.vertices, mesh.triangles,
                                               mesh.vertex_normals)
    else:
        base_verts, base_tris, base_normals = _face_normal_soup(mesh)

    tcov = target_normals.covered
    trows = np.flatnonzero(tcov.any(axis=1))
    tcols = np.flatnonzero(tcov.any(axis=0))
    crop = (slice(trows[0], trows[-1] + 1), slice(tcols[0], tcols[-1] + 1))
    tvals_crop = target_normals.values[crop]
    tcov_crop = tcov[crop]
    n_target = int(tcov_crop.sum())

    nhyp = grid.rotations.shape[0]
    scores = np.full(nhyp, np.inf)
    errors = np.full(nhyp, np.pi)
    coverages = np.zeros(nhyp)
    for k in range(nhyp):
        r = grid.rotations[k]
        try:
            m, off, _, _, _ = _iterate_raw(mesh.vertices, mesh.triangles, camera,
                                           obs, r, HYPOTHESIS_REFINE_ITERS,
                                           1e-4, s0, t0, False)
        except SceneLayoutError:
            continue
        zbuf, abuf = _render_arrays(base_verts @ m.T + off, base_tris,
                                    base_normals @ r.T, camera)
        err, cov = _score_raw(zbuf, abuf, crop, tvals_crop, tcov_crop, n_target)
        errors[k] = err
        coverages[k] = cov
        scores[k] = err - COVERAGE_WEIGHT * cov
    best = int(np.argmin(scores))
    if not np.isfinite(scores[best]):
        raise EmptyObservationError("no rotation hypothesis produced a visible render")
    score = RotationScore(index=best, normal_error=float(errors[best]),
                          coverage=float(coverages[best]))
    return grid.rotations[best].copy(), score


class ExternalRotationEstimator:
    """File-contract adapter for an out-of-process rotation estimator.

    For each request the adapter writes mesh.obj, normals.nrm1, depth.dpt1 and
    camera.json into <directory>/<request_id>/, optionally invokes `command`
    with that directory as its final argument, and reads back rotation.json
    containing {"rotation": [[3x3]]}.
    """

    def __init__(self, directory, command: str | None = None):
        self.directory = Path(directory)
        self.command = command

    def estimate(self, mesh: TriangleMesh, camera: PinholeCamera,
                 target_normals: NormalMap, target_depth: DepthMap,
                 request_id: str) -> np.ndarray:
        workdir = self.directory / request_id
        workdir.mkdir(parents=True, exist_ok=True)
        save_obj(mesh, workdir / "mesh.obj")
        formats.write_normals(workdir / "normals.nrm1", target_normals.values)
        formats.write_depth(workdir / "depth.dpt1", target_depth.values)
        with open(workdir / "camera.json", "w", encoding="utf-8") as fh:
            json.dump(camera.to_dict(), fh, indent=2, sort_keys=True)
        if self.command:
            proc = subprocess.run(shlex.split(self.command) + [str(workdir)],
                                  capture_output=True, text=True)
            if proc.returncode != 0:
                raise ExternalEstimatorError(
                    f"estimator command failed ({proc.returncode}): {proc.stderr.strip()}")
        answer = workdir / "rotation.json"
        if not answer.exists():
            raise ExternalEstimatorError(f"estimator produced no {answer}")
        with open(answer, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        try:
            return check_rotation(np.asarray(payload["rotation"], dtype=np.float64))
        except (KeyError, ValueError) as exc:
            raise ExternalEstimatorError(f"invalid rotation payload: {exc}") from exc

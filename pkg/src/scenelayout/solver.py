"""Closed-form scale/translation solver for single-image object layout.

Aligning a mesh with its observed 2D evidence is posed as five linear
equations in (dx, dy, dz, s): four from requiring the projections of the
extremal visible surface points to land on the target bounding-box edges,
one from matching the mean depth of the visible region. The key
approximation is that the extremal visible points stay extremal under scale
and translation, so the solve is repeated a few times, re-rasterizing the
mesh between steps; the approximation is exact for constant-depth objects,
and in practice four iterations suffice.

All bounding-box coordinates enter the system relative to the principal
point; absolute pixel coordinates are converted internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateMeshError,
    DegenerateObservationError,
    EmptyVisibilityError,
    NonPhysicalScaleError,
    RankDeficientSystemError,
    SolveDivergedError,
)
from .geometry import (
    AnchoredSimilarityTransform,
    BBox2D,
    PinholeCamera,
    TriangleMesh,
    check_rotation,
)
from .raster import DepthMap, ExtremalVisiblePoints, _extremal_data, _render_arrays

DAMPING = 1e-6
SCALE_STEP_LIMITS = (0.25, 4.0)


@dataclass(frozen=True)
class InstanceObservation:
    """Per-object 2D evidence: bounding box, mean visible depth, optional mask."""

    bbox: BBox2D
    mean_depth: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        if not self.mean_depth > 0:
            raise ValueError("mean_depth must be positive")
        object.__setattr__(self, "mean_depth", float(self.mean_depth))


@dataclass(frozen=True)
class LayoutLinearSystem:
    """The 5x4 system A x = B with x = (dx, dy, dz, s)."""

    A: np.ndarray
    B: np.ndarray
    condition_hint: float

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.B, dtype=np.float64)
        if a.shape != (5, 4) or b.shape != (5,):
            raise ValueError("system must be 5x4 with a 5-vector rhs")
        if a[0, 1] != 0 or a[1, 1] != 0 or a[2, 0] != 0 or a[3, 0] != 0:
            raise ValueError("bbox rows violate the expected sparsity pattern")
        if a[4, 0] != 0 or a[4, 1] != 0 or a[4, 2] != 1:
            raise ValueError("depth row must be (0, 0, 1, mean dz)")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)


@dataclass(frozen=True)
class SolveReport:
    """Result of an iterative solve: composite transform plus diagnostics."""

    transform: AnchoredSimilarityTransform
    residual_history: list
    iterations_run: int
    converged: bool

    def __post_init__(self):
        if self.iterations_run < 1:
            raise ValueError("at least one iteration must run")
        if len(self.residual_history) != self.iterations_run:
            raise ValueError("residual history length must equal iterations_run")


def observation_from_depth(depth: DepthMap, mask: np.ndarray | None = None) -> InstanceObservation:
    """Derive (bbox, mean depth) from a rendered or observed depth map.

    The bounding box spans the extreme covered pixel centers, matching the
    solver's own quantization so that a render of the true pose is an exact
    fixed point.
    """
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    covered = values > 0.0
    if not covered.any():
        raise EmptyVisibilityError("no covered pixels in observation")
    cols = np.flatnonzero(covered.any(axis=0))
    rows = np.flatnonzero(covered.any(axis=1))
    if cols[0] == cols[-1] or rows[0] == rows[-1]:
        raise DegenerateObservationError("observation covers a single row or column")
    bbox = BBox2D(x_left=cols[0] + 0.5, x_right=cols[-1] + 0.5,
                  y_upper=rows[0] + 0.5, y_lower=rows[-1] + 0.5)
    return InstanceObservation(bbox=bbox, mean_depth=float(values[covered].mean()),
                               mask=mask)


def _system_rows(ext3, means, bbox, target_mean_depth, mean_visible, camera):
    """Assemble A, B from extremal 3D points and targets (principal-point frame).

    mean_visible is the mean depth over the current render's covered pixels.
    """
    if bbox.width <= 0 or bbox.height <= 0:
        raise DegenerateObservationError("target bbox has zero width or height")

    xl, yl, zl = ext3["left"]
    xr, yr, zr = ext3["right"]
    xu, yu, zu = ext3["upper"]
    xo, yo, zo = ext3["lower"]
    bl = bbox.x_left - camera.cx
    br = bbox.x_right - camera.cx
    bu = bbox.y_upper - camera.cy
    bo = bbox.y_lower - camera.cy
    fx, fy = camera.fx, camera.fy
    mx, my, mz = means

    mean_dz = mean_visible - mz
    a = np.array([
        [fx, 0.0, -bl, fx * (xl - mx) - bl * (zl - mz)],
        [fx, 0.0, -br, fx * (xr - mx) - br * (zr - mz)],
        [0.0, fy, -bu, fy * (yu - my) - bu * (zu - mz)],
        [0.0, fy, -bo, fy * (yo - my) - bo * (zo - mz)],
        [0.0, 0.0, 1.0, mean_dz],
    ])
    b = np.array([
        bl * mz - fx * mx,
        br * mz - fx * mx,
        bu * mz - fy * my,
        bo * mz - fy * my,
        target_mean_depth - mz,
    ])
    return a, b


def build_system(extremals: ExtremalVisiblePoints, means, bbox: BBox2D,
                 target_mean_depth: float, depth: DepthMap,
                 camera: PinholeCamera) -> LayoutLinearSystem:
    """Build the 5x4 layout system for the current mesh state.

    extremals/means/depth describe the mesh as currently rendered; bbox and
    target_mean_depth are the observation it should match.
    """
    covered = depth.values > 0.0
    if not covered.any():
        raise EmptyVisibilityError("current render has no covered pixels")
    ext3 = {name: getattr(extremals, name).point3
            for name in ("left", "right", "upper", "lower")}
    a, b = _system_rows(ext3, np.asarray(means, dtype=np.float64), bbox,
                        float(target_mean_depth), float(depth.values[covered].mean()),
                        camera)
    svals = np.linalg.svd(a, compute_uv=False)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else float("inf")
    return LayoutLinearSystem(A=a, B=b, condition_hint=cond)


def _lstsq_rank_checked(a, b):
    """Minimum-norm least squares via orthogonal decomposition, with rank guard."""
    u, svals, vt = np.linalg.svd(a, full_matrices=False)
    tol = svals[0] * max(a.shape) * np.finfo(np.float64).eps if svals[0] > 0 else 0.0
    rank = int(np.sum(svals > tol))
    if rank < a.shape[1]:
        null = vt[rank:]
        cols = {int(c) for c in np.flatnonzero(np.any(np.abs(null) > 1e-12, axis=0))}
        raise RankDeficientSystemError(
            f"system rank {rank} < {a.shape[1]}", deficient_columns=cols)
    return vt.T @ ((u.T @ b) / svals)


def _solve_full(a, b):
    x = _lstsq_rank_checked(a, b)
    if x[3] <= 0:
        a_aug = np.vstack([a, np.sqrt(DAMPING) * np.eye(4)])
        b_aug = np.concatenate([b, np.zeros(4)])
        x, _, _, _ = np.linalg.lstsq(a_aug, b_aug, rcond=None)
        if x[3] <= 0:
            raise NonPhysicalScaleError(f"solved scale {x[3]} is not positive")
    residual = float(np.linalg.norm(a @ x - b))
    return x[:3].copy(), float(x[3]), residual


def solve_step(system: LayoutLinearSystem):
    """Solve one layout system. Returns (translation, scale, residual).

    A non-positive solved scale triggers one Tikhonov-damped retry
    (lambda = 1e-6 on the normal-equation diagonal, applied as augmented
    rows); if the scale is still non-positive the solve fails.
    """
    return _solve_full(system.A, system.B)


def _solve_reduced(a, b, fix_scale):
    """Solve one refinement step with the mean-depth row enforced exactly.

    The four bbox rows are in cleared-denominator form, so their joint
    least-squares residual is homogeneous in the configuration scale: when the
    target aspect cannot be matched, the plain 5-row solve prefers collapsing
    the object onto the camera (all bbox residuals shrink with Z) at the price
    of the one depth row. The depth row carries no extremal approximation, so
    it is eliminated instead: dz = (d_target - z_mean) - s * mean_dz, leaving
    a least-squares problem over the bbox rows only. For consistent systems
    the solution is identical to the plain 5-row solve.
    """
    g = a[4, 3]
    q = b[4]
    # Substitute dz into the bbox rows: column 2 holds the dz coefficients.
    a3 = np.column_stack([a[:4, 0], a[:4, 1], a[:4, 3] - a[:4, 2] * g])
    b3 = b[:4] - a[:4, 2] * q
    if fix_scale:
        s = 1.0
        x2 = _lstsq_rank_checked(a3[:, :2], b3 - a3[:, 2] * s)
        delta2 = x2
    else:
        x3 = _lstsq_rank_checked(a3, b3)
        if x3[2] <= 0:
            a_aug = np.vstack([a3, np.sqrt(DAMPING) * np.eye(3)])
            b_aug = np.concatenate([b3, np.zeros(3)])
            x3, _, _, _ = np.linalg.lstsq(a_aug, b_aug, rcond=None)
            if x3[2] <= 0:
                raise NonPhysicalScaleError(f"solved scale {x3[2]} is not positive")
        s = float(x3[2])
        delta2 = x3[:2]
    dz = q - s * g
    x = np.array([delta2[0], delta2[1], dz, s])
    residual = float(np.linalg.norm(a @ x - b))
    return x[:3], s, residual


def _initial_placement(verts, center, camera, obs):
    """Normalize to unit bounding-sphere radius, drop onto the bbox-center ray.

    Generated meshes arrive in arbitrary model units; the solve needs the
    object in front of the camera at a plausible depth before iteration 1.
    """
    radius = float(np.linalg.norm(verts - center, axis=1).max())
    if radius <= 0:
        raise DegenerateMeshError("mesh has zero bounding radius")
    s0 = 1.0 / radius
    ub, vb = obs.bbox.center
    d = obs.mean_depth
    target = np.array([(ub - camera.cx) / camera.fx * d,
                       (vb - camera.cy) / camera.fy * d,
                       d])
    return s0, target - center


def _iterate_raw(verts0, tris, camera, obs, r, max_iters, tol, s0, t0, fix_scale):
    """Core refinement loop over raw arrays.

    Returns (m, off, scale_total, history, converged) where the current state
    maps points as p -> m @ p + off.
    """
    center = verts0.mean(axis=0)
    m = s0 * r
    off = center + t0 - m @ center
    scale_total = s0
    history = []
    converged = False

    for _ in range(max_iters):
        verts = verts0 @ m.T + off
        zbuf, _ = _render_arrays(verts, tris, None, camera)
        covered = np.isfinite(zbuf)
        if not covered.any():
            raise SolveDivergedError("object left the view during refinement")
        ext = _extremal_data(zbuf, camera, covered)
        ext3 = {name: ext[name][0] for name in ("left", "right", "upper", "lower")}
        means = verts.mean(axis=0)
        a, b = _system_rows(ext3, means, obs.bbox, obs.mean_depth,
                            float(zbuf[covered].mean()), camera)
        delta, s, residual = _solve_reduced(a, b, fix_scale)
        if not fix_scale and not (SCALE_STEP_LIMITS[0] <= s <= SCALE_STEP_LIMITS[1]):
            # Trust region: the linearization (extremal points stay extremal)
            # only holds locally; clamp runaway scale steps and re-solve the
            # rest of the step conditioned on the clamped value.
            s = float(np.clip(s, *SCALE_STEP_LIMITS))
            g = a[4, 3]
            q = b[4]
            a2 = a[:4, :2]
            b2 = b[:4] - a[:4, 2] * q - (a[:4, 3] - a[:4, 2] * g) * s
            x2 = _lstsq_rank_checked(a2, b2)
            delta = np.array([x2[0], x2[1], q - s * g])
            full = np.array([delta[0], delta[1], delta[2], s])
            residual = float(np.linalg.norm(a @ full - b))
        history.append(residual)
        # Compose the increment (anchored at the current means) into the state.
        m = s * m
        off = s * off + (1.0 - s) * means + delta
        scale_total *= s
        if np.linalg.norm(delta) < tol * obs.mean_depth and abs(s - 1.0) < tol:
            converged = True
            break
    return m, off, scale_total, history, converged


def _iterate(mesh, camera, obs, rotation, max_iters, tol, initial, fix_scale):
    verts0 = mesh.vertices
    center = verts0.mean(axis=0)
    r = np.eye(3) if rotation is None else rotation

    if initial is not None:
        s0 = float(initial.scale)
        t0 = np.asarray(initial.translation, dtype=np.float64)
    else:
        s0, t0 = _initial_placement(verts0, center, camera, obs)

    m, off, scale_total, history, converged = _iterate_raw(
        verts0, mesh.triangles, camera, obs, r, max_iters, tol, s0, t0, fix_scale)
    translation = m @ center + off - center
    transform = AnchoredSimilarityTransform(center=center, translation=translation,
                                            scale=scale_total, rotation=r)
    return SolveReport(transform=transform, residual_history=history,
                       iterations_run=len(history), converged=converged)


def solve_scale_translation(mesh: TriangleMesh, camera: PinholeCamera,
                            obs: InstanceObservation, max_iters: int = 4,
                            tol: float = 1e-4,
                            initial: AnchoredSimilarityTransform | None = None,
                            fix_scale: bool = False) -> SolveReport:
    """Recover the scale and translation aligning a mesh with its observation.

    Each iteration rasterizes the current state, rebuilds the linear system
    from the fresh extremal points and mean depth, solves for an incremental
    (translation, scale) about the current means, and composes it in. Stops
    early once a step satisfies |delta| < tol * mean_depth and |s - 1| < tol.

    `initial` replaces the default unit-radius placement (useful when a prior
    solve already produced a plausible state). `fix_scale` freezes s = 1 in
    every step, solving translation only.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    return _iterate(mesh, camera, obs, None, max_iters, tol, initial, fix_scale)


def refine_after_rotation(mesh: TriangleMesh, rotation, camera: PinholeCamera,
                          obs: InstanceObservation, max_iters: int = 4,
                          tol: float = 1e-4,
                          initial: AnchoredSimilarityTransform | None = None,
                          fix_scale: bool = False) -> SolveReport:
    """Rotate the mesh about its means, then re-solve scale and translation.

    The returned transform carries the supplied rotation.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    r = check_rotation(rotation)
    return _iterate(mesh, camera, obs, r, max_iters, tol, initial, fix_scale)

import json
import os
import stat

import numpy as np
import pytest

from scenelayout import (
    AnchoredSimilarityTransform,
    ExternalEstimatorError,
    ExternalRotationEstimator,
    PinholeCamera,
    estimate_rotation,
    geodesic_distance,
    make_rotation_grid,
    mesh_means,
    normal_angular_error,
)
from scenelayout import formats, load_obj
from scenelayout.raster import DepthMap, NormalMap, render_posed
from scenelayout.rotation import (
    COVERAGE_WEIGHT,
    HYPOTHESIS_REFINE_ITERS,
    RotationGrid,
    grid_nn_spacing,
    random_rotation,
)
from scenelayout.shapes import make_icosphere, make_l_bracket
from scenelayout.solver import observation_from_depth, refine_after_rotation, solve_scale_translation


def small_camera(size=96, f=135.0):
    return PinholeCamera(fx=f, fy=f, cx=size / 2, cy=size / 2, width=size, height=size)


def render_target(mesh, camera, rotation, scale=1.5, depth=4.0):
    gt = AnchoredSimilarityTransform(center=mesh_means(mesh),
                                     translation=np.array([0.1, -0.05, depth]),
                                     scale=scale, rotation=rotation)
    zbuf, normals = render_posed(mesh, gt, camera, with_normals=True)
    tdepth = DepthMap(values=np.where(np.isfinite(zbuf), zbuf, 0.0))
    return gt, tdepth, NormalMap(values=normals)


class TestGrid:
    def test_default_grid_shape(self):
        grid = make_rotation_grid()
        assert grid.viewpoint_count == 42
        assert grid.inplane_steps == 12
        assert grid.rotations.shape == (504, 3, 3)

    def test_rotations_are_proper(self):
        grid = make_rotation_grid(12, 4)
        gram = np.einsum("kij,kil->kjl", grid.rotations, grid.rotations)
        assert np.allclose(gram, np.eye(3), atol=1e-12)
        assert np.allclose(np.linalg.det(grid.rotations), 1.0, atol=1e-12)

    def test_all_rotations_distinct(self):
        grid = make_rotation_grid(12, 6)
        r = grid.rotations
        tr = np.einsum("ikl,jkl->ij", r, r)
        ang = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
        np.fill_diagonal(ang, np.inf)
        assert ang.min() > 1e-6

    def test_nn_spacing_shrinks_with_viewpoints(self):
        spacings = [grid_nn_spacing(make_rotation_grid(n, 12)) for n in (12, 42, 162)]
        assert spacings[0] >= spacings[1] - 1e-9 >= spacings[2] - 1e-9
        assert spacings[2] < spacings[0] - 1e-3

    def test_fibonacci_fallback_arbitrary_count(self):
        grid = make_rotation_grid(50, 4)
        assert grid.rotations.shape == (200, 3, 3)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            RotationGrid(viewpoint_count=2, inplane_steps=2,
                         rotations=np.stack([np.eye(3)] * 3))
        bad = np.stack([np.eye(3), np.eye(3), np.eye(3), np.diag([1, 1, -1.0])])
        with pytest.raises(ValueError):
            RotationGrid(viewpoint_count=2, inplane_steps=2, rotations=bad)


class TestNormalAngularError:
    def make_map(self, vectors):
        return NormalMap(values=np.asarray(vectors, dtype=np.float64))

    def test_identical_maps(self):
        v = np.zeros((4, 4, 3))
        v[1:3, 1:3] = [0, 0, -1.0]
        err, cov = normal_angular_error(self.make_map(v), self.make_map(v))
        assert err == 0.0
        assert cov == 1.0

    def test_antipodal_maps(self):
        a = np.zeros((4, 4, 3))
        a[1:3, 1:3] = [0, 0, -1.0]
        b = -a
        err, cov = normal_angular_error(self.make_map(a), self.make_map(b))
        assert err == pytest.approx(np.pi)
        assert cov == 1.0

    def test_half_flipped(self):
        # pixel-loop oracle: half aligned (0), half antipodal (pi) -> mean pi/2
        a = np.zeros((2, 4, 3))
        a[:, :, 2] = -1.0
        b = a.copy()
        b[0] = -b[0]
        err, cov = normal_angular_error(self.make_map(a), self.make_map(b))
        total = 0.0
        for i in range(2):
            for j in range(4):
                total += np.arccos(np.clip(a[i, j] @ b[i, j], -1, 1))
        assert err == pytest.approx(total / 8)
        assert err == pytest.approx(np.pi / 2)

    def test_disjoint_coverage(self):
        a = np.zeros((4, 4, 3))
        a[0, 0] = [0, 0, -1.0]
        b = np.zeros((4, 4, 3))
        b[3, 3] = [0, 0, -1.0]
        err, cov = normal_angular_error(self.make_map(a), self.make_map(b))
        assert err == pytest.approx(np.pi)
        assert cov == 0.0

    def test_dimension_mismatch_raises(self):
        a = np.zeros((4, 4, 3))
        b = np.zeros((5, 4, 3))
        with pytest.raises(ValueError):
            normal_angular_error(self.make_map(a), self.make_map(b))

    def test_invariant_under_joint_rotation(self):
        rng = np.random.default_rng(8)
        a = np.zeros((6, 6, 3))
        b = np.zeros((6, 6, 3))
        v = rng.normal(size=(4, 4, 3))
        v /= np.linalg.norm(v, axis=2, keepdims=True)
        w = rng.normal(size=(4, 4, 3))
        w /= np.linalg.norm(w, axis=2, keepdims=True)
        a[1:5, 1:5] = v
        b[1:5, 1:5] = w
        base_err, base_cov = normal_angular_error(self.make_map(a), self.make_map(b))
        rot = random_rotation(rng)
        ar = a @ rot.T
        br = b @ rot.T
        err, cov = normal_angular_error(self.make_map(ar), self.make_map(br))
        assert err == pytest.approx(base_err, abs=1e-6)
        assert cov == base_cov


class TestEstimateRotation:
    def test_recovers_in_grid_targets(self):
        camera = small_camera()
        mesh = make_l_bracket()
        grid = make_rotation_grid(12, 6)
        for k in (0, 17, 40, 65):
            gt, tdepth, tnormals = render_target(mesh, camera, grid.rotations[k])
            base = solve_scale_translation(mesh, camera,
                                           observation_from_depth(tdepth))
            rot, score = estimate_rotation(mesh, camera, tnormals, tdepth,
                                           base.transform, grid)
            assert score.index == k
            assert np.array_equal(rot, grid.rotations[k])

    def test_exhaustive_argmin_consistency(self):
        # Brute-force reference built from public APIs only.
        camera = small_camera()
        mesh = make_l_bracket()
        grid = make_rotation_grid(12, 4)
        gt, tdepth, tnormals = render_target(mesh, camera, grid.rotations[13])
        obs = observation_from_depth(tdepth)
        base = solve_scale_translation(mesh, camera, obs)
        scores = []
        for r in grid.rotations:
            report = refine_after_rotation(mesh, r, camera, obs,
                                           max_iters=HYPOTHESIS_REFINE_ITERS,
                                           initial=base.transform)
            _, rendered = render_posed(mesh, report.transform, camera,
                                       with_normals=True)
            err, cov = normal_angular_error(NormalMap(values=rendered), tnormals)
            scores.append(err - COVERAGE_WEIGHT * cov)
        rot, score = estimate_rotation(mesh, camera, tnormals, tdepth,
                                       base.transform, grid)
        assert score.index == int(np.argmin(scores))
        assert score.score == pytest.approx(min(scores), abs=1e-9)

    def test_tie_break_lowest_index(self):
        # A grid with one rotation repeated scores exactly equal; the lowest
        # index must win.
        camera = small_camera()
        mesh = make_l_bracket()
        r = make_rotation_grid(12, 4).rotations[7]
        dup = RotationGrid(viewpoint_count=1, inplane_steps=3,
                           rotations=np.stack([r, r, r]))
        gt, tdepth, tnormals = render_target(mesh, camera, r)
        base = solve_scale_translation(mesh, camera, observation_from_depth(tdepth))
        rot, score = estimate_rotation(mesh, camera, tnormals, tdepth,
                                       base.transform, dup)
        assert score.index == 0

    def test_sphere_scores_nearly_constant(self):
        # Rotating a sphere barely changes its normal render; all hypothesis
        # scores collapse into a narrow band (tessellation noise only).
        camera = small_camera()
        mesh = make_icosphere(3)
        grid = make_rotation_grid(12, 4)
        gt, tdepth, tnormals = render_target(mesh, camera, np.eye(3), scale=1.2)
        obs = observation_from_depth(tdepth)
        base = solve_scale_translation(mesh, camera, obs)
        scores = []
        for r in grid.rotations:
            report = refine_after_rotation(mesh, r, camera, obs,
                                           max_iters=HYPOTHESIS_REFINE_ITERS,
                                           initial=base.transform)
            _, rendered = render_posed(mesh, report.transform, camera,
                                       with_normals=True)
            err, cov = normal_angular_error(NormalMap(values=rendered), tnormals)
            scores.append(err - COVERAGE_WEIGHT * cov)
        assert max(scores) - min(scores) < 1e-2
        rot, score = estimate_rotation(mesh, camera, tnormals, tdepth,
                                       base.transform, grid)
        assert score.index == int(np.argmin(scores))

    def test_off_grid_target_within_grid_resolution(self):
        camera = small_camera()
        mesh = make_l_bracket()
        grid = make_rotation_grid(42, 12)
        spacing = grid_nn_spacing(grid)
        rng = np.random.default_rng(31)
        for _ in range(2):
            target_rot = random_rotation(rng)
            gt, tdepth, tnormals = render_target(mesh, camera, target_rot)
            base = solve_scale_translation(mesh, camera,
                                           observation_from_depth(tdepth))
            rot, _ = estimate_rotation(mesh, camera, tnormals, tdepth,
                                       base.transform, grid)
            assert geodesic_distance(rot, target_rot) <= spacing + 1e-9

    def test_empty_target_raises(self):
        camera = small_camera()
        mesh = make_l_bracket()
        grid = make_rotation_grid(12, 4)
        empty_n = NormalMap(values=np.zeros((96, 96, 3)))
        empty_d = DepthMap(values=np.zeros((96, 96)))
        initial = AnchoredSimilarityTransform.identity()
        from scenelayout import EmptyObservationError
        with pytest.raises(EmptyObservationError):
            estimate_rotation(mesh, camera, empty_n, empty_d, initial, grid)


class TestExternalEstimator:
    def make_inputs(self, camera):
        mesh = make_l_bracket()
        gt, tdepth, tnormals = render_target(mesh, camera, np.eye(3))
        return mesh, tdepth, tnormals

    def test_file_contract_roundtrip(self, tmp_path):
        camera = small_camera()
        mesh, tdepth, tnormals = self.make_inputs(camera)
        # Stub estimator: validates the request files and answers with a fixed
        # rotation (90 degrees about z).
        stub = tmp_path / "stub.py"
        stub.write_text(
            "import json, sys, os\n"
            "d = sys.argv[1]\n"
            "for name in ('mesh.obj', 'normals.nrm1', 'depth.dpt1', 'camera.json'):\n"
            "    assert os.path.exists(os.path.join(d, name)), name\n"
            "cam = json.load(open(os.path.join(d, 'camera.json')))\n"
            "assert cam['width'] == 96\n"
            "rot = [[0, -1, 0], [1, 0, 0], [0, 0, 1]]\n"
            "json.dump({'rotation': rot}, open(os.path.join(d, 'rotation.json'), 'w'))\n")
        est = ExternalRotationEstimator(tmp_path / "work",
                                        command=f"python3 {stub}")
        rot = est.estimate(mesh, camera, tnormals, tdepth, "obj0")
        assert np.allclose(rot, [[0, -1, 0], [1, 0, 0], [0, 0, 1]])
        # the written request files honor the wire formats
        workdir = tmp_path / "work" / "obj0"
        assert load_obj(workdir / "mesh.obj").num_triangles == mesh.num_triangles
        assert formats.read_depth(workdir / "depth.dpt1").shape == (96, 96)
        assert formats.read_normals(workdir / "normals.nrm1").shape == (96, 96, 3)

    def test_missing_answer_raises(self, tmp_path):
        camera = small_camera()
        mesh, tdepth, tnormals = self.make_inputs(camera)
        est = ExternalRotationEstimator(tmp_path / "work")
        with pytest.raises(ExternalEstimatorError):
            est.estimate(mesh, camera, tnormals, tdepth, "obj0")

    def test_invalid_rotation_payload_raises(self, tmp_path):
        camera = small_camera()
        mesh, tdepth, tnormals = self.make_inputs(camera)
        stub = tmp_path / "stub.py"
        stub.write_text(
            "import json, sys, os\n"
            "json.dump({'rotation': [[2, 0, 0], [0, 1, 0], [0, 0, 1]]},\n"
            "          open(os.path.join(sys.argv[1], 'rotation.json'), 'w'))\n")
        est = ExternalRotationEstimator(tmp_path / "work",
                                        command=f"python3 {stub}")
        with pytest.raises(ExternalEstimatorError):
            est.estimate(mesh, camera, tnormals, tdepth, "obj0")

    def test_failing_command_raises(self, tmp_path):
        camera = small_camera()
        mesh, tdepth, tnormals = self.make_inputs(camera)
        stub = tmp_path / "stub.py"
        stub.write_text("import sys\nsys.exit(3)\n")
        est = ExternalRotationEstimator(tmp_path / "work",
                                        command=f"python3 {stub}")
        with pytest.raises(ExternalEstimatorError):
            est.estimate(mesh, camera, tnormals, tdepth, "obj0")

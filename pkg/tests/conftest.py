import numpy as np
import pytest

from scenelayout import BBox2D, PinholeCamera, TriangleMesh


@pytest.fixture
def centered_camera():
    """f=100 camera with the principal point at the center of a 512x512 image."""
    return PinholeCamera(fx=100.0, fy=100.0, cx=256.0, cy=256.0, width=512, height=512)


@pytest.fixture
def flat_square():
    """Unit half-extent square of two triangles at constant depth 5."""
    verts = np.array([[-1.0, -1.0, 5.0], [1.0, -1.0, 5.0],
                      [1.0, 1.0, 5.0], [-1.0, 1.0, 5.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(vertices=verts, triangles=tris)


def square_at(depth, half=1.0, x=0.0, y=0.0):
    verts = np.array([[x - half, y - half, depth], [x + half, y - half, depth],
                      [x + half, y + half, depth], [x - half, y + half, depth]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(vertices=verts, triangles=tris)


def centered_bbox(camera, half_w, half_h):
    """BBox2D given in principal-point-relative half extents."""
    return BBox2D(x_left=camera.cx - half_w, x_right=camera.cx + half_w,
                  y_upper=camera.cy - half_h, y_lower=camera.cy + half_h)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posecalib.errors import DegenerateBasis, NonPositiveDepth, RayParallelToPlane
from posecalib.geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    RigidTransform2D,
    angle_between,
    backproject_to_depth,
    backproject_to_plane,
    nearest_rotation,
    orthonormality_residual,
    plane_basis_from_normal,
    project,
    rodrigues,
    rotation_angle,
)

from conftest import random_rotation

K = CameraIntrinsics(960.0, 960.0, 540.0)
finite = st.floats(-50, 50, allow_nan=False)


def test_optical_axis_hits_principal_point():
    np.testing.assert_allclose(project([0.0, 0.0, 1.0], K), [960.0, 540.0])


def test_project_known_value():
    np.testing.assert_allclose(project([1.0, 0.0, 2.0], K), [1440.0, 540.0])


def test_project_rejects_points_behind_camera():
    with pytest.raises(NonPositiveDepth):
        project([0.0, 0.0, -1.0], K)


@given(finite, finite, st.floats(0.1, 100))
def test_backproject_then_project_round_trip(x, y, z):
    pix = project([x, y, z], K)
    np.testing.assert_allclose(project(backproject_to_depth(pix, K, z), K), pix, atol=1e-9)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(-1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(100.0, np.nan, 0.0)


def test_downward_camera_centre_maps_to_plane_origin():
    # camera looking straight down from 3 m: the normal (towards camera) is -z in camera coordinates
    plane = plane_basis_from_normal(np.array([0.0, 0.0, -1.0]), K, 3.0)
    np.testing.assert_allclose(backproject_to_plane(K.principal_point, K, plane), 0.0, atol=1e-12)
    assert plane.camera_height == pytest.approx(3.0)


def test_axis_aligned_normal_gives_identity_like_frame():
    plane = plane_basis_from_normal(np.array([0.0, -1.0, 0.0]), K, 2.0)
    np.testing.assert_allclose(plane.rot_cam_to_plane[0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(plane.rot_cam_to_plane[2], [0.0, -1.0, 0.0])


def test_normal_along_camera_x_is_degenerate():
    with pytest.raises(DegenerateBasis):
        plane_basis_from_normal(np.array([1.0, 0.0, 0.0]), K, 2.0)


def test_non_unit_normal_rejected():
    with pytest.raises(ValueError):
        plane_basis_from_normal(np.array([0.0, -2.0, 0.0]), K, 2.0)


def test_horizon_pixel_raises():
    plane = plane_basis_from_normal(np.array([0.0, -1.0, 0.0]), K, 2.0)
    # with the normal along -y the horizon is the principal row
    with pytest.raises(RayParallelToPlane):
        backproject_to_plane(np.array([100.0, 540.0]), K, plane)


def _random_normal(rng):
    # unit normals pointing up in the image (towards the camera) and away from the x axis
    while True:
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        if n[1] < -0.2 and abs(n[0]) < 0.9:
            return n


def test_plane_basis_is_proper_rotation_for_random_normals():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = _random_normal(rng)
        plane = plane_basis_from_normal(n, K, rng.uniform(1, 10))
        r = plane.rot_cam_to_plane
        assert orthonormality_residual(r) < 1e-9
        np.testing.assert_allclose(r @ n, [0.0, 0.0, 1.0], atol=1e-12)


def test_project_backproject_on_plane_round_trip():
    rng = np.random.default_rng(1)
    n = np.array([0.0, -np.cos(0.5), np.sin(0.5)])
    plane = plane_basis_from_normal(n, K, 4.0)
    pts_plane = np.column_stack([rng.uniform(-5, 5, 1000), rng.uniform(2, 20, 1000), np.zeros(1000)])
    pts_cam = plane.to_camera(pts_plane)
    keep = pts_cam[:, 2] > 0.5
    pix = project(pts_cam[keep], K)
    back = backproject_to_plane(pix, K, plane)
    np.testing.assert_allclose(back, pts_plane[keep], atol=1e-9)
    np.testing.assert_allclose(project(plane.to_camera(back), K), pix, atol=1e-6)
    # plane equation holds for the recovered points
    assert np.abs(back[:, 2]).max() < 1e-9


def test_rodrigues_and_rotation_angle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0, np.pi)
        r = rodrigues(ang * axis)
        assert orthonormality_residual(r) < 1e-12
        assert rotation_angle(r) == pytest.approx(ang, abs=1e-7)
        np.testing.assert_allclose(r @ axis, axis, atol=1e-12)


def test_nearest_rotation_recovers_rotation_from_noisy_matrix():
    rng = np.random.default_rng(3)
    r = random_rotation(rng)
    noisy = r + 1e-4 * rng.normal(size=(3, 3))
    out = nearest_rotation(noisy)
    assert orthonormality_residual(out) < 1e-12
    assert rotation_angle(out @ r.T) < 1e-3


@given(st.floats(-10, 10), finite, finite, st.floats(-10, 10), finite, finite)
def test_rigid_transform_compose(a1, x1, y1, a2, x2, y2):
    t1 = RigidTransform2D(a1, [x1, y1])
    t2 = RigidTransform2D(a2, [x2, y2])
    pts = np.array([[0.3, -1.2], [4.0, 2.0]])
    np.testing.assert_allclose(t1.compose(t2).apply(pts), t1.apply(t2.apply(pts)), atol=1e-9)
    assert 0 <= t1.angle < 2 * np.pi


def test_extrinsics_round_trip():
    rng = np.random.default_rng(4)
    ext = CameraExtrinsics(random_rotation(rng), rng.normal(size=3))
    p = rng.normal(size=(10, 3))
    np.testing.assert_allclose(ext.cam_to_world(ext.world_to_cam(p)), p, atol=1e-12)
    np.testing.assert_allclose(ext.world_to_cam(ext.position), 0.0, atol=1e-12)


def test_angle_between_is_accurate_near_zero():
    assert angle_between([1.0, 0.0, 0.0], [1.0, 1e-9, 0.0]) == pytest.approx(1e-9, rel=1e-6)
    assert angle_between([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(np.pi)

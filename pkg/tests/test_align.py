import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posecalib.align import (
    ICPConfig,
    compose_extrinsics,
    decompose_extrinsics,
    fit_rigid_2d,
    icp_refine,
    search_rotation,
    timed_chamfer,
)
from posecalib.errors import EmptyCloud, TooFewCorrespondences
from posecalib.geometry import (
    CameraIntrinsics,
    RigidTransform2D,
    orthonormality_residual,
    plane_basis_from_normal,
    rot2d,
    rotation_angle,
)
from posecalib.solution import relative_pose

from conftest import cached_rig, random_rotation


def timed_cloud(rng, n_frames=40, per_frame=3, spread=4.0):
    rows = []
    for t in range(n_frames):
        for p in rng.uniform(-spread, spread, (per_frame, 2)):
            rows.append((p[0], p[1], t))
    return np.array(rows)


def naive_chamfer(a, b, time_weight=1.0):
    def directed(src, dst):
        total = 0.0
        for p in src:
            best = np.inf
            for q in dst:
                if p[2] != q[2]:
                    continue
                d = np.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (time_weight * (p[2] - q[2])) ** 2)
                best = min(best, d)
            if np.isfinite(best):
                total += best
        return total

    return directed(a, b) + directed(b, a)


def test_chamfer_identical_is_zero():
    a = timed_cloud(np.random.default_rng(0))
    assert timed_chamfer(a, a) == 0.0


def test_chamfer_offset_closed_form():
    # one point per frame, so each point's only candidate is its shifted copy
    rng = np.random.default_rng(1)
    a = timed_cloud(rng, n_frames=50, per_frame=1)
    b = a + np.array([0.3, 0.0, 0.0])
    assert timed_chamfer(a, b) == pytest.approx(2 * 50 * 0.3, abs=1e-9)


def test_chamfer_matches_double_loop():
    rng = np.random.default_rng(2)
    a = timed_cloud(rng, n_frames=100, per_frame=3)
    b = timed_cloud(rng, n_frames=100, per_frame=3)
    assert timed_chamfer(a, b) == pytest.approx(naive_chamfer(a, b), rel=1e-12)


@given(st.integers(0, 10_000))
def test_chamfer_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = timed_cloud(rng, n_frames=10, per_frame=rng.integers(1, 4))
    b = timed_cloud(rng, n_frames=10, per_frame=rng.integers(1, 4))
    assert timed_chamfer(a, b) == timed_chamfer(b, a)


def test_chamfer_empty():
    with pytest.raises(EmptyCloud):
        timed_chamfer(np.empty((0, 3)), np.zeros((1, 3)))


def rotate_about_centroid(cloud, deg):
    out = cloud.copy()
    c = cloud[:, :2].mean(0)
    out[:, :2] = (cloud[:, :2] - c) @ rot2d(np.deg2rad(deg)).T + c
    return out


def angular_gap(a_deg, b_deg):
    d = (a_deg - b_deg) % 360.0
    return min(d, 360.0 - d)


def test_rotation_search_identity():
    a = timed_cloud(np.random.default_rng(3))
    res = search_rotation(a, a)
    assert res.transform.angle == 0.0
    assert res.cost == pytest.approx(0.0, abs=1e-12)


def test_rotation_search_recovers_inverse():
    a = timed_cloud(np.random.default_rng(4))
    sync = rotate_about_centroid(a, 73.0)
    res = search_rotation(a, sync, step=1.0)
    assert angular_gap(np.rad2deg(res.transform.angle), 287.0) <= 1.0
    # best sampled cost is the minimum of the curve
    assert np.all(res.cost <= res.costs)


@pytest.mark.parametrize("phi", [0.0, 31.0, 158.0, 245.0])
def test_rotation_search_equivariant(phi):
    a = timed_cloud(np.random.default_rng(5))
    base = search_rotation(a, rotate_about_centroid(a, 40.0), step=1.0)
    turned = search_rotation(a, rotate_about_centroid(a, 40.0 + phi), step=1.0)
    shift = np.rad2deg(turned.transform.angle - base.transform.angle)
    assert angular_gap(shift, -phi) <= 1.0


def test_rotation_search_step_validation():
    a = timed_cloud(np.random.default_rng(6))
    for step in (0.0, 91.0):
        with pytest.raises(ValueError):
            search_rotation(a, a, step=step)


# --------------------------------------------------------------------------
# ICP


def frames_pair(rng, truth: RigidTransform2D, n_frames=30, per_frame=3):
    """Reference frames and sync frames related by ``ref = truth(sync)``, shuffled."""
    ref, sync = {}, {}
    inv_r = truth.matrix.T
    for t in range(n_frames):
        pts = rng.uniform(-5, 5, (per_frame, 2))
        ref[t] = pts
        s = (pts - truth.translation) @ inv_r.T
        sync[t] = s[rng.permutation(per_frame)]
    return ref, sync


def test_icp_fixed_point():
    rng = np.random.default_rng(7)
    truth = RigidTransform2D(0.7, np.array([1.0, -2.0]))
    ref, sync = frames_pair(rng, truth)
    res = icp_refine(ref, sync, truth)
    assert res.iterations == 1
    assert res.cost == pytest.approx(0.0, abs=1e-12)
    assert abs(res.transform.angle - truth.angle) < 1e-12


def test_icp_recovers_perturbed_start():
    rng = np.random.default_rng(8)
    truth = RigidTransform2D(2.1, np.array([3.0, 0.5]))
    ref, sync = frames_pair(rng, truth)
    init = RigidTransform2D(truth.angle + np.deg2rad(5.0), truth.translation + np.array([0.2, 0.0]))
    res = icp_refine(ref, sync, init)
    assert abs(res.transform.angle - truth.angle) < 1e-6
    assert np.linalg.norm(res.transform.translation - truth.translation) < 1e-6


def test_icp_cost_non_increasing():
    rng = np.random.default_rng(9)
    truth = RigidTransform2D(1.0, np.array([0.5, 0.5]))
    ref, sync = frames_pair(rng, truth, per_frame=4)
    sync = {t: p + rng.normal(0, 0.05, p.shape) for t, p in sync.items()}
    res = icp_refine(ref, sync, RigidTransform2D(1.2, np.array([0.9, 0.1])))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert res.history[-1] <= res.history[0]


def test_icp_too_few_correspondences():
    with pytest.raises(TooFewCorrespondences):
        icp_refine({0: np.zeros((1, 2))}, {0: np.ones((1, 2))}, RigidTransform2D.identity())
    with pytest.raises(TooFewCorrespondences):
        icp_refine({0: np.zeros((3, 2))}, {1: np.ones((3, 2))}, RigidTransform2D.identity())


def test_rigid_fit_matches_grid_search():
    rng = np.random.default_rng(10)
    src = rng.uniform(-1, 1, (20, 2))
    truth = RigidTransform2D(0.9, np.array([0.4, -0.3]))
    dst = truth.apply(src) + rng.normal(0, 0.05, src.shape)

    def grid(angles, tx, ty):
        best = (np.inf, None)
        for a in angles:
            moved = src @ rot2d(a).T
            # residual for every translation on the grid at once
            r = moved[None, None] + np.stack(np.meshgrid(tx, ty, indexing="ij"), -1)[:, :, None] - dst[None, None]
            cost = np.sum(r**2, axis=(2, 3))
            i, j = np.unravel_index(np.argmin(cost), cost.shape)
            if cost[i, j] < best[0]:
                best = (cost[i, j], (a, tx[i], ty[j]))
        return best

    _, (a0, x0, y0) = grid(np.deg2rad(np.arange(0, 360, 1.0)), np.linspace(-2, 2, 81), np.linspace(-2, 2, 81))
    cost, (a1, x1, y1) = grid(
        a0 + np.deg2rad(np.arange(-1, 1.0001, 0.01)), x0 + np.linspace(-0.1, 0.1, 81), y0 + np.linspace(-0.1, 0.1, 81)
    )
    fit = fit_rigid_2d(src, dst)
    assert abs(np.rad2deg(np.angle(np.exp(1j * (fit.angle - a1))))) <= 0.02
    assert np.linalg.norm(fit.translation - [x1, y1]) <= 0.01
    assert np.sum((fit.apply(src) - dst) ** 2) <= cost + 1e-12


# --------------------------------------------------------------------------
# lifting to camera poses


def _planes(rng):
    k = CameraIntrinsics(1000.0, 960.0, 540.0)
    out = []
    for _ in range(2):
        n = np.array([0.0, -1.0, -0.4]) + rng.normal(0, 0.1, 3)
        out.append(plane_basis_from_normal(n / np.linalg.norm(n), k, rng.uniform(2, 6)))
    return out


def test_compose_identity():
    plane, _ = _planes(np.random.default_rng(11))
    ext = compose_extrinsics(plane, plane, RigidTransform2D.identity())
    np.testing.assert_allclose(ext.rot_world_to_cam, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(ext.position, 0.0, atol=1e-12)


@given(st.floats(-10, 10), st.floats(-20, 20), st.floats(-20, 20), st.integers(0, 1000))
def test_compose_decompose_round_trip(angle, tx, ty, seed):
    p_ref, p_sync = _planes(np.random.default_rng(seed))
    t2d = RigidTransform2D(angle, np.array([tx, ty]))
    ext = compose_extrinsics(p_ref, p_sync, t2d)
    back = decompose_extrinsics(p_ref, p_sync, ext)
    assert abs(np.angle(np.exp(1j * (back.angle - t2d.angle)))) < 1e-9
    np.testing.assert_allclose(back.translation, t2d.translation, atol=1e-9)
    assert orthonormality_residual(ext.rot_world_to_cam) < 1e-9


def test_compose_on_synthetic_rig():
    rig = cached_rig()
    for cam in (1, 2):
        # sync plane -> world -> reference plane
        to_world_ref, to_world_sync = rig.plane_to_world(0), rig.plane_to_world(cam)
        inv_ref = RigidTransform2D(-to_world_ref.angle, -(rot2d(-to_world_ref.angle) @ to_world_ref.translation))
        t2d = inv_ref.compose(to_world_sync)
        ext = compose_extrinsics(rig.plane(0), rig.plane(cam), t2d)
        truth = relative_pose(rig.extrinsics[0], rig.extrinsics[cam])
        assert np.rad2deg(rotation_angle(ext.rot_world_to_cam @ truth.rot_world_to_cam.T)) < 1e-9
        assert np.linalg.norm(ext.position - truth.position) < 1e-9


def test_shared_ground_point_agrees():
    rng = np.random.default_rng(12)
    p_ref, p_sync = _planes(rng)
    t2d = RigidTransform2D(0.4, np.array([1.5, -0.5]))
    ext = compose_extrinsics(p_ref, p_sync, t2d)
    q_sync = np.array([0.7, 2.0, 0.0])
    # same point in reference camera coordinates, by the two routes
    via_plane = p_ref.to_camera(np.append(t2d.apply(q_sync[:2]), 0.0))
    via_pose = ext.cam_to_world(p_sync.to_camera(q_sync))
    np.testing.assert_allclose(via_plane, via_pose, atol=1e-9)


def test_compose_orthonormal_random():
    rng = np.random.default_rng(13)
    for _ in range(200):
        p_ref, p_sync = _planes(rng)
        ext = compose_extrinsics(p_ref, p_sync, RigidTransform2D(rng.uniform(0, 7), rng.normal(0, 10, 2)))
        assert orthonormality_residual(ext.rot_world_to_cam) < 1e-9

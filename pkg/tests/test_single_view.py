import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from posecalib.detections import CameraSequence, Frame, PoseDetection
from posecalib.errors import DegenerateConfiguration, InsufficientData, MissingJoints, NegativeFocalSquared
from posecalib.geometry import CameraIntrinsics, angle_between, project
from posecalib.single_view import (
    AnkleShoulderPair,
    SingleViewConfig,
    _null_vector_dense,
    _null_vector_structured,
    calibrate_pairs,
    extract_focal_and_normal,
    extract_pairs,
    filter_standing,
    inlier_test,
    projected_centres,
    ransac_calibrate,
    shoulder_residuals,
    solve_dlt,
    standing_deviation,
)
from posecalib.synthetic import SceneConfig, generate_scene, metric_normal_deg

O = np.array([960.0, 540.0])


def _scene(seed=0, n_people=3, height=1.7):
    return generate_scene(SceneConfig(n_people=n_people, height_mean=height, seed=seed))


# --------------------------------------------------------------------------
# standing filter


def _pose(ankle, knee, hip, shoulder, side="left"):
    joints = {f"{side}_{n}": (float(p[0]), float(p[1]), 1.0) for n, p in zip(("ankle", "knee", "hip", "shoulder"), (ankle, knee, hip, shoulder))}
    return PoseDetection(1, joints)


def test_vertical_chain_passes_any_threshold():
    pose = _pose((100, 500), (100, 400), (100, 300), (100, 150))
    assert standing_deviation(pose) == pytest.approx(0.0, abs=1e-12)
    assert filter_standing(pose, 0.0)


def test_right_angle_knee_fails():
    # thigh horizontal: knee bent by 90 degrees
    pose = _pose((100, 500), (100, 400), (200, 400), (200, 250))
    assert standing_deviation(pose) >= np.pi / 2 - 1e-9
    assert not filter_standing(pose)


def test_missing_side_raises():
    with pytest.raises(MissingJoints):
        standing_deviation(PoseDetection(1, {"left_ankle": (0.0, 0.0, 1.0)}))


def _deviation_oracle(points):
    def interior(p, q, r):
        u, v = p - q, r - q
        return np.arccos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1))

    a, k, h, s = points
    return abs(np.pi - interior(a, k, h)) + abs(np.pi - interior(k, h, s))


def test_standing_deviation_matches_independent_formula():
    rng = np.random.default_rng(0)
    for _ in range(500):
        pts = [rng.uniform(0, 1000, 2) for _ in range(4)]
        pose = _pose(*pts)
        assert standing_deviation(pose) == pytest.approx(_deviation_oracle(pts), abs=1e-9)


# --------------------------------------------------------------------------
# DLT and extraction


def test_dlt_direction_matches_ground_truth():
    for seed in range(20):
        sc = _scene(seed)
        f = sc.config.fx
        n = sc.normal
        truth = np.concatenate([[f * n[0], f * n[1], n[2]], sc.ankles_cam[:, 2] / 1.7])
        u = solve_dlt(sc.ankle_px, sc.shoulder_px, O)
        cos = abs(u @ truth) / (np.linalg.norm(u) * np.linalg.norm(truth))
        assert cos > 1 - 1e-9


def test_extraction_recovers_focal_and_normal():
    for seed in range(20):
        sc = _scene(seed)
        u = solve_dlt(sc.ankle_px, sc.shoulder_px, O)
        f, n, depths = extract_focal_and_normal(u, sc.ankle_px, O, 1.7)
        assert f == pytest.approx(960.0, abs=1e-6)
        assert np.degrees(angle_between(n, sc.normal)) < 1e-6
        np.testing.assert_allclose(depths, sc.ankles_cam[:, 2], rtol=1e-9)
        # forward projection of the recovered ankles gives the input pixels
        k = CameraIntrinsics(f, *O)
        pts = np.column_stack([(sc.ankle_px - O) / f, np.ones(3)]) * depths[:, None]
        np.testing.assert_allclose(project(pts, k), sc.ankle_px, atol=1e-6)


def test_normal_invariant_to_person_order():
    sc = _scene(3)
    _, n0, _, _ = calibrate_pairs(sc.ankle_px, sc.shoulder_px, O, 1.7)
    for perm in ([1, 2, 0], [2, 1, 0], [0, 2, 1]):
        _, n1, _, _ = calibrate_pairs(sc.ankle_px[perm], sc.shoulder_px[perm], O, 1.7)
        assert n0 @ n1 > 1 - 1e-9


@given(st.floats(0.3, 3.0))
def test_scaling_pixels_scales_focal(factor):
    sc = _scene(5)
    f0, _, _, _ = calibrate_pairs(sc.ankle_px, sc.shoulder_px, O, 1.7)
    a = O + factor * (sc.ankle_px - O)
    s = O + factor * (sc.shoulder_px - O)
    f1, _, _, _ = calibrate_pairs(a, s, O, 1.7)
    assert f1.f == pytest.approx(factor * f0.f, rel=1e-8)


def test_all_points_on_one_image_line_is_degenerate():
    a = np.array([[100.0, 540], [500, 540], [900, 540]])
    s = np.array([[200.0, 540], [600, 540], [1000, 540]])
    with pytest.raises(DegenerateConfiguration):
        solve_dlt(a, s, O)


def test_zero_vertical_component_fails_extraction():
    # collinear ankles with parallel shoulders: the null vector has n_z = 0
    a = np.array([[100.0, 540], [500, 540], [900, 540]])
    u = solve_dlt(a, a + [0, -200], O)
    assert abs(u[2]) < 1e-12
    with pytest.raises((NegativeFocalSquared, DegenerateConfiguration)):
        extract_focal_and_normal(u, a, O, 1.7)


def test_too_few_pairs():
    sc = _scene(0)
    with pytest.raises(InsufficientData):
        solve_dlt(sc.ankle_px[:2], sc.shoulder_px[:2], O)


def test_coincident_ankles_are_degenerate():
    sc = _scene(0)
    a = sc.ankle_px.copy()
    a[1] = a[0]
    with pytest.raises(DegenerateConfiguration):
        solve_dlt(a, sc.shoulder_px, O)


def test_structured_null_vector_matches_dense_svd():
    rng = np.random.default_rng(7)
    for seed in range(10):
        sc = generate_scene(SceneConfig(n_people=120, height_mean=1.7, seed=seed))
        a = sc.ankle_px + rng.normal(0, 2.0, sc.ankle_px.shape) - O
        s = sc.shoulder_px + rng.normal(0, 2.0, sc.shoulder_px.shape) - O
        dense = _null_vector_dense(a, s)
        structured = _null_vector_structured(a, s)
        assert abs(dense @ structured) > 1 - 1e-9


def test_overdetermined_noise_free_is_exact():
    sc = generate_scene(SceneConfig(n_people=100, height_mean=1.7, seed=2))
    k, n, depths, _ = calibrate_pairs(sc.ankle_px, sc.shoulder_px, O, 1.7)
    assert k.f == pytest.approx(960.0, rel=1e-9)
    assert np.degrees(angle_between(n, sc.normal)) < 1e-7


# --------------------------------------------------------------------------
# inlier test


def _model(sc):
    k, _, _, plane = calibrate_pairs(sc.ankle_px, sc.shoulder_px, O, 1.7)
    return k, plane


def test_exact_pair_is_inlier():
    sc = _scene(1)
    k, plane = _model(sc)
    for a, s in zip(sc.ankle_px, sc.shoulder_px):
        assert inlier_test(AnkleShoulderPair(a, s), k, plane, 1.7)


def test_displaced_shoulder_is_outlier():
    sc = _scene(1)
    k, plane = _model(sc)
    a, s = sc.ankle_px[0], sc.shoulder_px[0]
    height_px = np.linalg.norm(s - a)
    perp = np.array([-(s - a)[1], (s - a)[0]]) / height_px
    assert not inlier_test(AnkleShoulderPair(a, s + 0.1 * height_px * perp), k, plane, 1.7)


def test_inlier_decision_matches_independent_metrics():
    sc = _scene(2)
    k, plane = _model(sc)
    rng = np.random.default_rng(3)
    n = plane.normal
    for _ in range(1000):
        a = rng.uniform([0, 300], [1920, 1080])
        s = a + rng.uniform([-60, -400], [60, -20])
        # independent recomputation: ankle ray meets the plane, shoulder sits h above
        ray = np.array([(a[0] - O[0]) / k.f, (a[1] - O[1]) / k.f, 1.0])
        depth = (n @ plane.t_plane) / (ray @ n)
        p = ray * depth + 1.7 * n
        if depth <= 0 or p[2] <= 0:
            assert not inlier_test(AnkleShoulderPair(a, s), k, plane, 1.7)
            continue
        pred = k.f * p[:2] / p[2] + O
        pix = np.linalg.norm(pred - s) / np.linalg.norm(s - a)
        ang = angle_between(s - a, pred - a)
        expected = pix < 0.05 and ang < np.deg2rad(2.86)
        assert inlier_test(AnkleShoulderPair(a, s), k, plane, 1.7) == expected


def test_residuals_infinite_behind_camera():
    sc = _scene(2)
    k, plane = _model(sc)
    # a pixel far above the horizon sees the sky
    pix, ang = shoulder_residuals(np.array([[960.0, -5000.0]]), np.array([[960.0, -5100.0]]), k, plane, 1.7)
    assert np.isinf(pix[0]) and np.isinf(ang[0])


# --------------------------------------------------------------------------
# RANSAC


def _pairs(sc):
    return [AnkleShoulderPair(a, s, 0, i) for i, (a, s) in enumerate(zip(sc.ankle_px, sc.shoulder_px))]


def test_ransac_noise_free_all_inliers():
    sc = generate_scene(SceneConfig(n_people=10, height_mean=1.7, seed=4))
    sol = ransac_calibrate(_pairs(sc), SingleViewConfig(iterations=200), principal_point=O)
    assert sol.inlier_mask.all()
    assert abs(sol.intrinsics.f / 960.0 - 1) < 1e-3


def test_ransac_rejects_gross_outliers():
    rng = np.random.default_rng(5)
    for seed in range(5):
        sc = generate_scene(SceneConfig(n_people=20, height_mean=1.7, seed=seed))
        pairs = _pairs(sc)
        n_bad = 9  # 30% of the final set
        bad = []
        for i in range(n_bad):
            # a real ankle with its shoulder swung 20-40 degrees sideways
            src = pairs[i]
            ang = rng.choice([-1, 1]) * np.deg2rad(rng.uniform(20, 40))
            c, s_ = np.cos(ang), np.sin(ang)
            up = src.shoulder - src.ankle
            bad.append(AnkleShoulderPair(src.ankle + [3.0, 0.0], src.ankle + np.array([[c, -s_], [s_, c]]) @ up, 1, 1000 + i))
        sol = ransac_calibrate(pairs + bad, SingleViewConfig(iterations=500, seed=seed), principal_point=O)
        assert sol.inlier_mask[:20].all()
        assert not sol.inlier_mask[20:].any()
        assert abs(sol.intrinsics.f / 960.0 - 1) < 0.01


def test_ransac_is_deterministic_and_refit_never_loses_inliers():
    sc = generate_scene(SceneConfig(n_people=30, height_mean=1.7, seed=6))
    rng = np.random.default_rng(0)
    pairs = [AnkleShoulderPair(p.ankle + rng.normal(0, 1, 2), p.shoulder + rng.normal(0, 1, 2)) for p in _pairs(sc)]
    cfg = SingleViewConfig(iterations=300, seed=11)
    a = ransac_calibrate(pairs, cfg, principal_point=O)
    b = ransac_calibrate(pairs, cfg, principal_point=O)
    assert np.array_equal(a.inlier_mask, b.inlier_mask)
    assert a.intrinsics == b.intrinsics
    d = a.diagnostics
    assert d["inliers"] >= d["hypothesis_inliers"]


def test_ransac_on_sequence_uses_image_centre():
    sc = generate_scene(SceneConfig(n_people=8, height_mean=1.7, seed=9))
    frames = []
    for i, (a, s) in enumerate(zip(sc.ankle_px, sc.shoulder_px)):
        up = s - a
        joints = {}
        for side, dx in (("left", 5.0), ("right", -5.0)):
            for name, frac in (("ankle", 0.0), ("knee", 0.3), ("hip", 0.6), ("shoulder", 1.0)):
                p = a + frac * up + [dx, 0.0]
                joints[f"{side}_{name}"] = (float(p[0]), float(p[1]), 1.0)
        frames.append(Frame(i, (PoseDetection(i, joints),)))
    seq = CameraSequence("c", 1920.0, 1080.0, 25.0, frames)
    # joints are 2D offsets of the exact centres, so keep the 2D midpoints
    sol = ransac_calibrate(seq, SingleViewConfig(iterations=100, centre_passes=0))
    assert sol.intrinsics.principal_point.tolist() == [960.0, 540.0]
    assert abs(sol.intrinsics.f / 960.0 - 1) < 1e-6


def test_projected_centres_remove_perspective_bias():
    from conftest import cached_rig

    rig = cached_rig(seed=2, n_frames=300, n_cameras=2)
    for c in range(2):
        true_f = rig.intrinsics[c].f
        plain = ransac_calibrate(rig.sequences[c], SingleViewConfig(centre_passes=0))
        fixed = ransac_calibrate(rig.sequences[c])
        # 2D joint midpoints are not projected 3D midpoints
        assert abs(plain.intrinsics.f / true_f - 1) > 1e-4
        assert abs(fixed.intrinsics.f / true_f - 1) < 1e-8
        assert metric_normal_deg(fixed.normal, rig.plane(c).normal) < 1e-6


def test_projected_centres_match_3d_midpoints():
    from conftest import cached_rig

    rig = cached_rig()
    k, plane = rig.intrinsics[0], rig.plane(0)
    pairs = [p for p in extract_pairs(rig.sequences[0]) if p.joints is not None][:20]
    ankles, shoulders = projected_centres(pairs, k, plane, rig.config.shoulder_height)
    names = list(rig.joint_names)
    ext = rig.extrinsics[0]
    for pair, a, s in zip(pairs, ankles, shoulders):
        g = pair.frame + rig.delta_t[0]
        person = int(np.nonzero(rig.person_ids[0] == pair.person_id)[0][0])
        w = rig.joints_world[g, person]
        mid_a = 0.5 * (w[names.index("left_ankle")] + w[names.index("right_ankle")])
        mid_s = 0.5 * (w[names.index("left_shoulder")] + w[names.index("right_shoulder")])
        np.testing.assert_allclose(a, project(ext.world_to_cam(mid_a), k), atol=1e-6)
        np.testing.assert_allclose(s, project(ext.world_to_cam(mid_s), k), atol=1e-6)

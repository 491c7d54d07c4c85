"""Single-view calibration from standing people.

Every upright person contributes an ankle-centre / shoulder-centre pixel pair.
Assuming a shared metric shoulder height ``h`` and a flat ground, three or
more pairs determine the focal length, the ground normal and the ankle
depths through a homogeneous linear system (DLT). RANSAC over minimal triples
rejects people that violate the assumptions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .detections import CameraSequence, PoseDetection
from .errors import (
    CalibrationFailed,
    DegenerateConfiguration,
    InsufficientData,
    MissingJoints,
    NegativeFocalSquared,
)
from .geometry import CameraIntrinsics, GroundPlaneFrame, pixel_rays, plane_basis_from_normal

RANK_RATIO = 1e-6


@dataclass(frozen=True)
class AnkleShoulderPair:
    ankle: np.ndarray
    shoulder: np.ndarray
    frame: int = 0
    person_id: int = 0
    # left ankle, right ankle, left shoulder, right shoulder pixels, when known
    joints: np.ndarray | None = field(default=None, compare=False)


@dataclass
class SingleViewConfig:
    h: float = 1.7
    iterations: int = 1000
    angle_thresh: float = float(np.deg2rad(2.86))
    pixel_thresh: float = 0.05
    standing_thresh: float = 0.6
    seed: int = 0
    # Passes that replace the 2D joint midpoints by projections of the 3D
    # midpoints under the current fit (0 keeps the plain 2D midpoints).
    centre_passes: int = 3


@dataclass
class SingleViewSolution:
    intrinsics: CameraIntrinsics
    normal: np.ndarray
    depths: np.ndarray
    plane: GroundPlaneFrame
    inlier_mask: np.ndarray
    hypotheses_tried: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


# --------------------------------------------------------------------------
# standing filter


def _side_deviation(pose: PoseDetection, side: str) -> float | None:
    names = [f"{side}_{j}" for j in ("ankle", "knee", "hip", "shoulder")]
    if not pose.has(*names):
        return None
    ankle, knee, hip, shoulder = (pose.point(n) for n in names)
    knee_angle = _angle2d(ankle - knee, hip - knee)
    hip_angle = _angle2d(knee - hip, shoulder - hip)
    return abs(knee_angle - np.pi) + abs(hip_angle - np.pi)


def _angle2d(a, b) -> float:
    return float(np.arctan2(abs(a[0] * b[1] - a[1] * b[0]), a @ b))


def standing_deviation(pose: PoseDetection) -> float:
    """Total deviation (radians) of the knee and hip angles from straight.

    Evaluated per body side; the straighter side wins.
    """
    sides = [d for d in (_side_deviation(pose, "left"), _side_deviation(pose, "right")) if d is not None]
    if not sides:
        raise MissingJoints(f"person {pose.person_id}: no complete ankle-knee-hip-shoulder side")
    return min(sides)


def filter_standing(pose: PoseDetection, threshold: float = 0.6) -> bool:
    return standing_deviation(pose) <= threshold


def extract_pairs(seq: CameraSequence, standing_thresh: float = 0.6) -> list:
    """Ankle/shoulder centre pairs of every upright pose in ``seq``."""
    pairs = []
    for frame in seq.frames:
        for pose in frame.poses:
            try:
                if not filter_standing(pose, standing_thresh):
                    continue
            except MissingJoints:
                continue
            ankle, shoulder = pose.ankle_center, pose.shoulder_center
            if ankle is None or shoulder is None:
                continue
            joints = None
            if pose.has("left_ankle", "right_ankle", "left_shoulder", "right_shoulder"):
                joints = np.array([pose.point(n) for n in ("left_ankle", "right_ankle", "left_shoulder", "right_shoulder")])
            pairs.append(AnkleShoulderPair(ankle, shoulder, frame.index, pose.person_id, joints))
    return pairs


def _stack(pairs):
    ankles = np.array([p.ankle for p in pairs], dtype=float)
    shoulders = np.array([p.shoulder for p in pairs], dtype=float)
    return ankles, shoulders


# --------------------------------------------------------------------------
# DLT


def constraint_matrix(ankles, shoulders) -> np.ndarray:
    """Stacked ``2M x (3 + M)`` constraint matrix for centred pixel coordinates.

    Unknowns are ``(f n_x, f n_y, n_z, z_1/h, ..., z_M/h)``.
    """
    m = len(ankles)
    d = np.zeros((2 * m, 3 + m))
    delta = shoulders - ankles
    rows = np.arange(m)
    d[2 * rows, 1] = -1.0
    d[2 * rows, 2] = shoulders[:, 1]
    d[2 * rows, 3 + rows] = delta[:, 1]
    d[2 * rows + 1, 0] = 1.0
    d[2 * rows + 1, 2] = -shoulders[:, 0]
    d[2 * rows + 1, 3 + rows] = -delta[:, 0]
    return d


# above this many pairs the null vector comes from the block structure
# instead of a dense SVD
STRUCTURED_MIN_PAIRS = 64


def _null_vector_dense(ankles_c, shoulders_c) -> np.ndarray:
    d = constraint_matrix(ankles_c, shoulders_c)
    _, s, vt = np.linalg.svd(d, full_matrices=False)
    # nullity > 1 shows up as a tiny second-smallest singular value
    n_unknowns = d.shape[1]
    second = s[n_unknowns - 2] if len(s) >= n_unknowns - 1 else 0.0
    if second <= RANK_RATIO * s[0]:
        raise DegenerateConfiguration("constraint matrix has rank below n-1")
    return vt[-1]


def _null_vector_structured(ankles_c, shoulders_c) -> np.ndarray:
    """Smallest right singular vector exploiting the per-pair depth columns.

    With ``D = [A | B]`` where ``B`` holds one column per pair, eliminating
    the depth unknowns from ``D^T D v = lam v`` leaves the 3x3 problem
    ``S(lam) u = 0`` with ``S(lam) = A^T A - sum c_i c_i^T / (d_i - lam) - lam I``.
    The smallest eigenvalue of ``S`` decreases monotonically in ``lam``, so the
    sought ``lam`` is its first root, found by bracketing.
    """
    d_full = constraint_matrix(ankles_c, shoulders_c)
    a = d_full[:, :3]
    delta = shoulders_c - ankles_c
    dd = np.sum(delta**2, axis=1)
    c = delta[:, 1:2] * a[0::2] - delta[:, 0:1] * a[1::2]
    ata = a.T @ a
    scale = np.trace(ata) + dd.sum()

    def s_mat(lam):
        return ata - (c / (dd - lam)[:, None]).T @ c - lam * np.eye(3)

    def g(lam):
        return np.linalg.eigvalsh(s_mat(lam))[0]

    hi = dd.min() * (1.0 - 1e-12)
    if g(0.0) <= 0.0:
        lam = 0.0
    elif g(hi) >= 0.0:
        return _null_vector_dense(ankles_c, shoulders_c)
    else:
        lam = brentq(g, 0.0, hi, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps, maxiter=200)
    evals, evecs = np.linalg.eigh(s_mat(lam))
    if evals[1] <= (RANK_RATIO**2) * scale:
        raise DegenerateConfiguration("constraint matrix has rank below n-1")
    u = evecs[:, 0]
    w = -(c @ u) / (dd - lam)
    v = np.concatenate([u, w])
    return v / np.linalg.norm(v)


def _null_vector(ankles_c, shoulders_c) -> np.ndarray:
    if len(ankles_c) < 3:
        raise InsufficientData("at least three ankle/shoulder pairs are needed")
    if len(ankles_c) <= STRUCTURED_MIN_PAIRS:
        diff = ankles_c[:, None, :] - ankles_c[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        min_dist = dist.min()
    else:
        min_dist = cKDTree(ankles_c).query(ankles_c, k=2)[0][:, 1].min()
    if min_dist < 1e-6:
        raise DegenerateConfiguration("two ankle points coincide")
    if len(ankles_c) > STRUCTURED_MIN_PAIRS:
        return _null_vector_structured(ankles_c, shoulders_c)
    return _null_vector_dense(ankles_c, shoulders_c)


def solve_dlt(ankles, shoulders, o) -> np.ndarray:
    """Null vector of the DLT system (defined up to scale).

    ``ankles`` / ``shoulders`` are ``(M, 2)`` pixel arrays with ``M >= 3``; they
    are centred on the principal point ``o`` before assembly. The ``h`` factor
    is absorbed into the depth unknowns, so it only enters at extraction.
    """
    o = np.asarray(o, dtype=float)
    return _null_vector(np.asarray(ankles, float) - o, np.asarray(shoulders, float) - o)


def extract_focal_and_normal(sol, ankles, o, h: float):
    """Recover ``(f, n, depths)`` from a DLT null vector.

    The focal length follows from coplanarity of the ankles: for every pair
    ``(i, j)`` the normal is orthogonal to ``P_i - P_j``. With more than two
    ankles the pairwise conditions are combined in least squares.
    """
    u = np.asarray(sol, dtype=float)
    a = np.asarray(ankles, dtype=float) - np.asarray(o, dtype=float)
    m = len(a)
    w = u[3:]
    i, j = np.array(list(combinations(range(m), 2))).T
    px = a[i, 0] * w[i] - a[j, 0] * w[j]
    py = a[i, 1] * w[i] - a[j, 1] * w[j]
    num = u[0] * px + u[1] * py          # multiplies 1/f^2
    den = u[2] * (w[i] - w[j])
    # (num / f^2 + den) = 0 for every pair; least squares in 1/f^2
    nn = num @ num
    if nn <= 0:
        raise NegativeFocalSquared("focal length unobservable from this configuration")
    inv_f2 = -(num @ den) / nn
    if not np.isfinite(inv_f2) or inv_f2 <= 0:
        raise NegativeFocalSquared(f"focal length squared is non-positive ({inv_f2!r})")
    f = 1.0 / np.sqrt(inv_f2)

    lam_n = np.array([u[0] / f, u[1] / f, u[2]])
    scale = np.linalg.norm(lam_n)
    depths = h * w / scale
    sign = np.sign(depths.sum())
    if sign == 0 or np.any(depths * sign <= 0):
        raise NegativeFocalSquared("ankle depths of mixed sign")
    return float(f), sign * lam_n / scale, sign * depths


def plane_from_solution(f, normal, depths, ankles, o) -> GroundPlaneFrame:
    k = CameraIntrinsics(f, o[0], o[1])
    pts = pixel_rays(ankles, k) * np.asarray(depths)[:, None]
    height = float(np.mean(-(pts @ normal)))
    return plane_basis_from_normal(normal, k, height)


def calibrate_pairs(ankles, shoulders, o, h: float):
    """DLT + extraction for a set of pairs. Returns ``(intrinsics, normal, depths, plane)``."""
    o = np.asarray(o, dtype=float)
    u = solve_dlt(ankles, shoulders, o)
    f, n, depths = extract_focal_and_normal(u, ankles, o, h)
    plane = plane_from_solution(f, n, depths, np.asarray(ankles, float), o)
    return CameraIntrinsics(f, o[0], o[1]), n, depths, plane


def projected_centres(pairs, k: CameraIntrinsics, plane: GroundPlaneFrame, h: float):
    """Ankle and shoulder centres as projections of 3D joint midpoints.

    Under perspective the midpoint of two projected joints is not the
    projection of their 3D midpoint. With a fit at hand, both ankles are
    placed on the ground and both shoulders on the parallel plane ``h``
    above it, and the 3D midpoints are projected back. Pairs without the
    four joints, or with a joint that misses its plane, keep their 2D
    midpoints.
    """
    ankles, shoulders = _stack(pairs)
    have = np.array([p.joints is not None for p in pairs])
    if not have.any():
        return ankles, shoulders
    idx = np.nonzero(have)[0]
    joints = np.stack([pairs[i].joints for i in idx])
    rays = pixel_rays(joints.reshape(-1, 2), k).reshape(-1, 4, 3)
    offset = plane.normal @ plane.t_plane + np.array([0.0, 0.0, h, h])
    denom = rays @ plane.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = offset[None, :] / denom
    pts = rays * depth[..., None]
    ok = np.all(np.isfinite(depth) & (depth > 0), axis=1)
    mid_a = 0.5 * (pts[:, 0] + pts[:, 1])
    mid_s = 0.5 * (pts[:, 2] + pts[:, 3])
    ok &= (mid_a[:, 2] > 1e-9) & (mid_s[:, 2] > 1e-9)
    with np.errstate(divide="ignore", invalid="ignore"):
        proj_a = k.f * mid_a[:, :2] / mid_a[:, 2:3] + k.principal_point
        proj_s = k.f * mid_s[:, :2] / mid_s[:, 2:3] + k.principal_point
    ankles[idx[ok]] = proj_a[ok]
    shoulders[idx[ok]] = proj_s[ok]
    return ankles, shoulders


# --------------------------------------------------------------------------
# inlier scoring


def shoulder_residuals(ankles, shoulders, k: CameraIntrinsics, plane: GroundPlaneFrame, h: float):
    """Normalised pixel error and angle error of the predicted shoulders.

    Pairs whose ankle cannot be placed on the plane in front of the camera get
    ``inf`` for both errors.
    """
    ankles = np.asarray(ankles, float)
    shoulders = np.asarray(shoulders, float)
    rays = pixel_rays(ankles, k)
    denom = rays @ plane.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (plane.normal @ plane.t_plane) / denom
        pred3 = rays * s[:, None] + h * plane.normal
        ok = (np.abs(denom) > 1e-9) & (s > 0) & (pred3[:, 2] > 1e-12)
        pred = k.f * pred3[:, :2] / pred3[:, 2:3] + k.principal_point
        detected = shoulders - ankles
        predicted = pred - ankles
        person_px = np.linalg.norm(detected, axis=1)
        pixel_err = np.linalg.norm(pred - shoulders, axis=1) / person_px
        cross = detected[:, 0] * predicted[:, 1] - detected[:, 1] * predicted[:, 0]
        angle_err = np.abs(np.arctan2(cross, np.einsum("ij,ij->i", detected, predicted)))
    ok &= np.isfinite(pixel_err) & np.isfinite(angle_err)
    pixel_err = np.where(ok, pixel_err, np.inf)
    angle_err = np.where(ok, angle_err, np.inf)
    return pixel_err, angle_err


def inlier_test(pair: AnkleShoulderPair, k: CameraIntrinsics, plane: GroundPlaneFrame, h: float,
                angle_thresh: float = float(np.deg2rad(2.86)), pixel_thresh: float = 0.05) -> bool:
    pix, ang = shoulder_residuals(pair.ankle[None], pair.shoulder[None], k, plane, h)
    return bool(pix[0] < pixel_thresh and ang[0] < angle_thresh)


def _inliers(ankles, shoulders, k, plane, cfg):
    pix, ang = shoulder_residuals(ankles, shoulders, k, plane, cfg.h)
    mask = (pix < cfg.pixel_thresh) & (ang < cfg.angle_thresh)
    mean_err = float(pix[mask].mean()) if mask.any() else np.inf
    return mask, mean_err


# --------------------------------------------------------------------------
# RANSAC


def ransac_calibrate(data, cfg: SingleViewConfig | None = None, principal_point=None) -> SingleViewSolution:
    """Robust single-view calibration.

    ``data`` is a :class:`CameraSequence` (poses are filtered for standing and
    reduced to ankle/shoulder centres) or a list of :class:`AnkleShoulderPair`.
    The principal point defaults to the image centre of the sequence.
    """
    cfg = cfg or SingleViewConfig()
    if isinstance(data, CameraSequence):
        pairs = extract_pairs(data, cfg.standing_thresh)
        if principal_point is None:
            principal_point = (data.width / 2.0, data.height / 2.0)
    else:
        pairs = list(data)
    if principal_point is None:
        raise ValueError("principal_point is required when passing raw pairs")
    o = np.asarray(principal_point, dtype=float)
    if len(pairs) < 3:
        raise InsufficientData(f"{len(pairs)} usable ankle/shoulder pairs, need 3")
    ankles, shoulders = _stack(pairs)
    n = len(pairs)

    rng = np.random.default_rng(cfg.seed)
    best = None  # (count, -mean_err, index, model)
    failed = 0
    for it in range(cfg.iterations):
        idx = rng.choice(n, size=3, replace=False)
        try:
            k, normal, _, plane = calibrate_pairs(ankles[idx], shoulders[idx], o, cfg.h)
        except (NegativeFocalSquared, DegenerateConfiguration, ValueError):
            failed += 1
            continue
        mask, mean_err = _inliers(ankles, shoulders, k, plane, cfg)
        count = int(mask.sum())
        if best is None or count > best[0] or (count == best[0] and mean_err < best[1]):
            best = (count, mean_err, it, (k, normal, plane, mask))
    if best is None or best[0] < 3:
        raise CalibrationFailed("no RANSAC hypothesis reached three inliers")

    count, mean_err, _, (k, normal, plane, mask) = best
    refit = False
    try:
        k2, normal2, _, plane2 = calibrate_pairs(ankles[mask], shoulders[mask], o, cfg.h)
        mask2, mean_err2 = _inliers(ankles, shoulders, k2, plane2, cfg)
        if mask2.sum() >= count:
            k, normal, plane, mask, mean_err = k2, normal2, plane2, mask2, mean_err2
            refit = True
    except (NegativeFocalSquared, DegenerateConfiguration, ValueError):
        pass

    passes = 0
    for _ in range(cfg.centre_passes):
        a_c, s_c = projected_centres(pairs, k, plane, cfg.h)
        try:
            k2, normal2, _, plane2 = calibrate_pairs(a_c[mask], s_c[mask], o, cfg.h)
        except (NegativeFocalSquared, DegenerateConfiguration, ValueError):
            break
        k, normal, plane = k2, normal2, plane2
        ankles, shoulders = a_c, s_c
        passes += 1
    if passes:
        _, mean_err = _inliers(ankles[mask], shoulders[mask], k, plane, cfg)

    rays = pixel_rays(ankles[mask], k)
    depths = (plane.normal @ plane.t_plane) / (rays @ plane.normal)
    return SingleViewSolution(
        intrinsics=k,
        normal=normal,
        depths=depths,
        plane=plane,
        inlier_mask=mask,
        hypotheses_tried=cfg.iterations,
        diagnostics={
            "pairs": n,
            "inliers": int(mask.sum()),
            "hypothesis_inliers": count,
            "failed_hypotheses": failed,
            "refit_accepted": refit,
            "centre_passes": passes,
            "mean_pixel_error": mean_err,
        },
    )

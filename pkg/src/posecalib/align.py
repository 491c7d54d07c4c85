"""In-plane alignment of two cameras' ground-plane trajectories.

A brute-force rotation search over a timed chamfer cost gives the initial
2D rigid transform; ICP with per-frame Hungarian association refines it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyCloud, TooFewCorrespondences
from .geometry import CameraExtrinsics, GroundPlaneFrame, RigidTransform2D, rot2d, rot_about_z


@dataclass
class AlignmentResult:
    transform: RigidTransform2D
    cost: float
    iterations: int
    history: list = field(default_factory=list)
    angles: np.ndarray | None = None
    costs: np.ndarray | None = None


# --------------------------------------------------------------------------
# timed chamfer


def _as_timed(cloud) -> np.ndarray:
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(cloud) == 0:
        raise EmptyCloud("timed point cloud is empty")
    return cloud


def _candidate_pairs(t_a, t_b, window):
    """Index pairs ``(i, j)`` with ``|t_a[i] - t_b[j]| <= window``, grouped by ``i``."""
    order = np.argsort(t_b, kind="stable")
    tb = t_b[order]
    lo = np.searchsorted(tb, t_a - window - 1e-9, side="left")
    hi = np.searchsorted(tb, t_a + window + 1e-9, side="right")
    counts = hi - lo
    ia = np.repeat(np.arange(len(t_a)), counts)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    ib = order[np.arange(counts.sum()) + starts]
    return ia, ib, counts


class TimedChamfer:
    """Symmetric nearest-neighbour cost between two timed clouds.

    Candidate neighbours are restricted to points whose frame index lies
    within ``frame_window`` frames; the time axis is scaled by ``time_weight``
    (metres per frame). The candidate structure only depends on the time
    stamps, so it is built once and reused for every rigid motion of ``b``.
    """

    def __init__(self, a, b, time_weight: float = 1.0, frame_window: int = 0):
        a = _as_timed(a)
        b = _as_timed(b)
        self.time_weight = time_weight
        self.ab = _candidate_pairs(a[:, 2], b[:, 2], frame_window)
        self.ba = _candidate_pairs(b[:, 2], a[:, 2], frame_window)
        self.dt_ab = time_weight * (a[self.ab[0], 2] - b[self.ab[1], 2])
        self.dt_ba = time_weight * (b[self.ba[0], 2] - a[self.ba[1], 2])
        self.a_xy = a[:, :2]

    @staticmethod
    def _directed(src, dst, pairs, dt):
        ia, ib, counts = pairs
        if len(ia) == 0:
            return 0.0
        d = np.sqrt(np.sum((src[ia] - dst[ib]) ** 2, axis=1) + dt**2)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[counts > 0]
        return float(np.minimum.reduceat(d, starts).sum())

    def __call__(self, b_xy) -> float:
        return self._directed(self.a_xy, b_xy, self.ab, self.dt_ab) + self._directed(b_xy, self.a_xy, self.ba, self.dt_ba)


def timed_chamfer(a, b, time_weight: float = 1.0, frame_window: int = 0) -> float:
    """``L_t(a, b) + L_t(b, a)`` for clouds of ``(x, y, t)`` rows."""
    b = _as_timed(b)
    return TimedChamfer(a, b, time_weight, frame_window)(b[:, :2])


# --------------------------------------------------------------------------
# rotation search


def _common_frame_mask(t_self, t_other):
    return np.isin(np.round(t_self), np.round(t_other))


def search_rotation(ref, sync, step: float = 1.0, time_weight: float = 1.0, frame_window: int = 0) -> AlignmentResult:
    """Grid search of the in-plane rotation aligning ``sync`` onto ``ref``.

    ``step`` is in degrees. Centroids are taken over frames both clouds share,
    the sync cloud is rotated about its centroid and moved onto the reference
    centroid, and the angle with the lowest timed chamfer cost wins (first
    one on ties).
    """
    ref = _as_timed(ref)
    sync = _as_timed(sync)
    if not 0 < step <= 90:
        raise ValueError("step must be in (0, 90] degrees")
    m_ref = _common_frame_mask(ref[:, 2], sync[:, 2])
    m_sync = _common_frame_mask(sync[:, 2], ref[:, 2])
    if not m_ref.any():
        m_ref[:] = True
        m_sync[:] = True
    c_ref = ref[m_ref, :2].mean(axis=0)
    c_sync = sync[m_sync, :2].mean(axis=0)

    chamfer = TimedChamfer(ref, sync, time_weight, frame_window)
    centred = sync[:, :2] - c_sync
    angles = np.deg2rad(np.arange(0.0, 360.0, step))
    costs = np.empty(len(angles))
    for i, ang in enumerate(angles):
        costs[i] = chamfer(centred @ rot2d(ang).T + c_ref)
    best = int(np.argmin(costs))
    ang = angles[best]
    transform = RigidTransform2D(ang, c_ref - rot2d(ang) @ c_sync)
    return AlignmentResult(transform, float(costs[best]), len(angles), angles=angles, costs=costs)


# --------------------------------------------------------------------------
# ICP


@dataclass
class ICPConfig:
    max_iter: int = 50
    tol: float = 1e-10
    # correspondences further apart than this are dropped (None keeps all)
    gate: float | None = None


def fit_rigid_2d(src, dst) -> RigidTransform2D:
    """Least-squares rotation + translation mapping ``src`` onto ``dst``."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    # maximise sum(b . R a): closed form in 2D
    num = np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    den = np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])
    ang = np.arctan2(num, den)
    return RigidTransform2D(ang, cd - rot2d(ang) @ cs)


def _associate(ref_frames, sync_frames, transform, gate):
    src, dst = [], []
    for t, sync_pts in sync_frames.items():
        ref_pts = ref_frames.get(t)
        if ref_pts is None or len(ref_pts) == 0 or len(sync_pts) == 0:
            continue
        moved = transform.apply(sync_pts)
        cost = np.sum((ref_pts[:, None, :] - moved[None, :, :]) ** 2, axis=-1)
        rows, cols = linear_sum_assignment(cost)
        if gate is not None:
            keep = cost[rows, cols] <= gate**2
            rows, cols = rows[keep], cols[keep]
        dst.append(ref_pts[rows])
        src.append(sync_pts[cols])
    if not src:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(src), np.concatenate(dst)


def _rms(transform, src, dst):
    return float(np.sqrt(np.mean(np.sum((transform.apply(src) - dst) ** 2, axis=1))))


def icp_refine(ref_frames: dict, sync_frames: dict, init: RigidTransform2D, cfg: ICPConfig | None = None) -> AlignmentResult:
    """Refine an in-plane transform by ICP.

    ``ref_frames`` / ``sync_frames`` map a (reference-time) frame index to a
    ``(n, 2)`` array of plane points. Points are associated frame by frame
    with the Hungarian algorithm on squared distances, then the closed-form
    2D rigid fit is applied; the RMS cost never increases.
    """
    cfg = cfg or ICPConfig()
    ref_frames = {t: np.asarray(p, dtype=float).reshape(-1, 2) for t, p in ref_frames.items()}
    sync_frames = {t: np.asarray(p, dtype=float).reshape(-1, 2) for t, p in sync_frames.items()}

    transform = init
    src, dst = _associate(ref_frames, sync_frames, transform, cfg.gate)
    if len(src) < 2:
        raise TooFewCorrespondences(f"{len(src)} correspondences, need 2")
    cost = _rms(transform, src, dst)
    history = [cost]
    iterations = 0
    for _ in range(cfg.max_iter):
        iterations += 1
        candidate = fit_rigid_2d(src, dst)
        c_src, c_dst = _associate(ref_frames, sync_frames, candidate, cfg.gate)
        if len(c_src) < 2:
            raise TooFewCorrespondences(f"{len(c_src)} correspondences, need 2")
        new_cost = _rms(candidate, c_src, c_dst)
        if new_cost > cost:
            break
        improvement = cost - new_cost
        transform, src, dst, cost = candidate, c_src, c_dst, new_cost
        history.append(cost)
        if improvement < cfg.tol:
            break
    return AlignmentResult(transform, cost, iterations, history=history)


# --------------------------------------------------------------------------
# lifting to 3D


def lift_transform(t2d: RigidTransform2D) -> tuple:
    """3D rotation about the plane normal and in-plane translation."""
    return rot_about_z(t2d.angle), np.array([t2d.translation[0], t2d.translation[1], 0.0])


def compose_extrinsics(plane_ref: GroundPlaneFrame, plane_sync: GroundPlaneFrame, t2d: RigidTransform2D) -> CameraExtrinsics:
    """Pose of the sync camera in the reference camera's coordinate frame.

    ``t2d`` maps sync plane coordinates to reference plane coordinates.
    """
    rz, tz = lift_transform(t2d)
    r_ref, r_sync = plane_ref.rot_cam_to_plane, plane_sync.rot_cam_to_plane
    sync_to_ref = r_ref.T @ rz @ r_sync
    position = r_ref.T @ (rz @ (r_sync @ -plane_sync.t_plane) + tz) + plane_ref.t_plane
    return CameraExtrinsics(sync_to_ref.T, position)


def decompose_extrinsics(plane_ref: GroundPlaneFrame, plane_sync: GroundPlaneFrame, ext: CameraExtrinsics) -> RigidTransform2D:
    """Inverse of :func:`compose_extrinsics`."""
    r_ref, r_sync = plane_ref.rot_cam_to_plane, plane_sync.rot_cam_to_plane
    rz = r_ref @ ext.rot_world_to_cam.T @ r_sync.T
    ang = np.arctan2(rz[1, 0], rz[0, 0])
    t = r_ref @ (ext.position - plane_ref.t_plane) - rz @ (r_sync @ -plane_sync.t_plane)
    return RigidTransform2D(ang, t[:2])


def plane_to_world_extrinsics(plane: GroundPlaneFrame, t2d: RigidTransform2D) -> CameraExtrinsics:
    """Camera pose in the world frame spanned by the reference ground plane."""
    rz, tz = lift_transform(t2d)
    rot_world_to_cam = plane.rot_cam_to_plane.T @ rz.T
    position = rz @ (plane.rot_cam_to_plane @ -plane.t_plane) + tz
    return CameraExtrinsics(rot_world_to_cam, position)

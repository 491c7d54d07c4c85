"""End-to-end calibration of a camera rig from per-camera pose detections.

Stages, in dependency order:

1. single-view calibration of every camera (focal length and ground plane);
2. ankle centres mapped onto each camera's ground plane, outliers removed
   by DBSCAN;
3. frame offset of every camera against the reference;
4. in-plane rotation search and ICP, composed into relative extrinsics;
5. joint bundle refinement of all cameras.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .align import (
    ICPConfig,
    compose_extrinsics,
    icp_refine,
    plane_to_world_extrinsics,
    search_rotation,
)
from .bundle import BundleCamera, BundleConfig, BundleProblem, PoseMatch, bundle_loss, optimize_bundle
from .detections import BUNDLE_JOINTS, CameraSequence
from .errors import CalibrationError, InsufficientData, NoSharedObservations, StageError
from .geometry import CameraExtrinsics, RigidTransform2D, backproject_to_plane, nearest_rotation, plane_basis_from_normal
from .single_view import SingleViewConfig, ransac_calibrate
from .solution import CameraSolution, RigSolution
from .sync import center_distance_signal, dbscan_filter, search_offset_overlap_both, search_time_offset_both

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    single_view: SingleViewConfig = field(default_factory=SingleViewConfig)
    # camera id of the reference; the first sequence when None
    reference: str | None = None
    dbscan_eps: float = 0.5
    dbscan_min_pts: int = 5
    max_offset: int | None = None
    # distances for the offset search are taken from the centroid of the frames
    # both cameras share under each offset ("overlap") or of the whole sequence
    sync_centre: str = "overlap"
    rotation_step: float = 1.0
    time_weight: float = 1.0
    frame_window: int = 0
    icp: ICPConfig = field(default_factory=ICPConfig)
    run_bundle: bool = True
    bundle: BundleConfig = field(default_factory=lambda: BundleConfig(lr=0.05, max_iter=1000))
    # intersection, left/right symmetry, height, ankle-on-plane. Under detection
    # noise the height term shrinks the rig (noisy bones read long), so it is off.
    bundle_weights: tuple = (1.0, 0.1, 0.0, 0.1)
    # most confident matches kept for the bundle (None keeps all)
    k_top: int | None = 800
    # see BundleProblem.gauge
    bundle_gauge: str = "camera"
    # plane distance (m) under which two cameras' ankle centres are the same person
    match_gate: float = 1.0
    # +- frames searched around each offset when bundle.optimize_dt is set
    dt_window: int = 2


@dataclass
class _CameraState:
    seq: CameraSequence
    single: object
    # local frame index -> (poses, (n, 2) plane points) after outlier removal
    ground: dict
    delta_t: int = 0
    to_ref: RigidTransform2D = field(default_factory=RigidTransform2D.identity)


def _stage(name, camera_id, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CalibrationError as exc:
        raise StageError(name, camera_id, exc) from exc


def ground_points(seq: CameraSequence, single, eps: float, min_pts: int) -> dict:
    """Ankle centres on the camera's own ground plane, grouped by frame.

    Both ankles touch the ground, so each is back-projected on its own and
    the centre is their 3D midpoint (a lone ankle stands for the centre).
    """
    k, plane = single.intrinsics, single.plane
    owners, pix, slot = [], [], []
    for frame in seq.frames:
        for pose in frame.poses:
            ankles = [pose.point(n) for n in ("left_ankle", "right_ankle") if pose.has(n)]
            if not ankles:
                continue
            owners.append((frame.index, pose))
            for a in ankles:
                pix.append(a)
                slot.append(len(owners) - 1)
    if not pix:
        raise InsufficientData("no ankle detections")
    pix = np.asarray(pix, dtype=float)
    slot = np.asarray(slot)
    rays_ok = (pix - k.principal_point) / k.f
    denom = np.column_stack([rays_ok, np.ones(len(pix))]) @ plane.normal
    # rays that miss the ground in front of the camera cannot be placed
    ahead = denom * (plane.normal @ plane.t_plane) > 0
    # a person is placed only if every detected ankle lands on the ground
    placed = np.ones(len(owners), dtype=bool)
    np.logical_and.at(placed, slot, ahead)
    if not placed.any():
        raise InsufficientData("no ankle detection projects onto the ground")
    use = placed[slot]
    xy_each = backproject_to_plane(pix[use], k, plane)[:, :2]
    idx = slot[use]
    sums = np.zeros((len(owners), 2))
    np.add.at(sums, idx, xy_each)
    counts = np.bincount(idx, minlength=len(owners))
    xy = sums[placed] / counts[placed, None]
    owners = [o for o, ok in zip(owners, placed) if ok]
    keep = dbscan_filter(xy, eps, min_pts)
    grouped: dict = {}
    for (index, pose), p, kept in zip(owners, xy, keep):
        if kept:
            poses, points = grouped.setdefault(index, ([], []))
            poses.append(pose)
            points.append(p)
    return {t: (poses, np.array(points)) for t, (poses, points) in sorted(grouped.items())}


def ground_frames(ground: dict) -> list:
    """Plane points per local frame, ``0..last``, empty where nothing was kept."""
    last = max(ground) if ground else -1
    return [ground[t][1] if t in ground else np.empty((0, 2)) for t in range(last + 1)]


def ground_signal(ground: dict):
    return center_distance_signal(ground_frames(ground))


def search_ground_offset(ref_ground: dict, cam_ground: dict, cfg: PipelineConfig):
    """Frame offset of ``cam`` against ``ref`` from their ground points, both signs."""
    if cfg.sync_centre == "overlap":
        return search_offset_overlap_both(ground_frames(ref_ground), ground_frames(cam_ground), cfg.max_offset)
    if cfg.sync_centre == "sequence":
        return search_time_offset_both(ground_signal(ref_ground), ground_signal(cam_ground), cfg.max_offset)
    raise ValueError(f"unknown sync_centre {cfg.sync_centre!r}")


def _timed_cloud(ground: dict, shift: int) -> np.ndarray:
    return np.vstack([np.column_stack([pts, np.full(len(pts), t + shift)]) for t, (_, pts) in ground.items()])


def _frames_dict(ground: dict, shift: int) -> dict:
    return {t + shift: pts for t, (_, pts) in ground.items()}


def align_pair(ref: _CameraState, cam: _CameraState, cfg: PipelineConfig, delta_t: int | None = None) -> dict:
    """Offset, rotation search and ICP of ``cam`` against ``ref``; fills ``cam``.

    A given ``delta_t`` replaces the offset search.
    """
    cid = cam.seq.camera_id
    if delta_t is None:
        sync = _stage("sync", cid, search_ground_offset, ref.ground, cam.ground, cfg)
        cam.delta_t = sync.delta_t
        sync_diag = {
            "delta_t": int(sync.delta_t),
            "score": float(sync.score),
            "offsets": [int(v) for v in sync.offsets],
            "costs": [float(v) for v in sync.per_offset_costs],
        }
    else:
        cam.delta_t = int(delta_t)
        sync_diag = {"delta_t": int(delta_t), "score": None, "offsets": [], "costs": []}
    rot = _stage(
        "rotation",
        cid,
        search_rotation,
        _timed_cloud(ref.ground, 0),
        _timed_cloud(cam.ground, cam.delta_t),
        cfg.rotation_step,
        cfg.time_weight,
        cfg.frame_window,
    )
    icp = _stage("icp", cid, icp_refine, _frames_dict(ref.ground, 0), _frames_dict(cam.ground, cam.delta_t), rot.transform, cfg.icp)
    cam.to_ref = icp.transform
    return {
        "sync": sync_diag,
        "rotation": {
            "angle_deg": float(np.degrees(rot.transform.angle)),
            "translation": [float(v) for v in rot.transform.translation],
            "cost": float(rot.cost),
            "angles_deg": [float(v) for v in np.degrees(rot.angles)],
            "costs": [float(v) for v in rot.costs],
        },
        "icp": [float(v) for v in icp.history],
        "icp_transform": {
            "angle_deg": float(np.degrees(icp.transform.angle)),
            "translation": [float(v) for v in icp.transform.translation],
        },
    }


# --------------------------------------------------------------------------
# cross-camera pose matching


def _bundle_pixels(pose):
    pix = np.zeros((len(BUNDLE_JOINTS), 2))
    conf = np.zeros(len(BUNDLE_JOINTS))
    valid = np.zeros(len(BUNDLE_JOINTS), dtype=bool)
    for j, name in enumerate(BUNDLE_JOINTS):
        if name in pose.joints:
            x, y, c = pose.joints[name]
            pix[j] = (x, y)
            conf[j] = c
            valid[j] = c > 0
    return pix, conf, valid


def match_poses(states: list, gate: float) -> list:
    """Same-person pose pairs for every camera pair and shared reference frame.

    Poses are associated per frame by Hungarian matching of their ankle
    centres in the common (reference plane) coordinates.
    """
    matches = []
    world = []
    for st in states:
        world.append({t + st.delta_t: (poses, st.to_ref.apply(pts)) for t, (poses, pts) in st.ground.items()})
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            for t in sorted(set(world[a]) & set(world[b])):
                poses_a, pts_a = world[a][t]
                poses_b, pts_b = world[b][t]
                cost = np.linalg.norm(pts_a[:, None, :] - pts_b[None, :, :], axis=-1)
                rows, cols = linear_sum_assignment(cost)
                for r, c in zip(rows, cols):
                    if cost[r, c] > gate:
                        continue
                    pa, ca, va = _bundle_pixels(poses_a[r])
                    pb, cb, vb = _bundle_pixels(poses_b[c])
                    valid = va & vb
                    if not valid.any():
                        continue
                    conf = float(np.minimum(ca, cb)[valid].mean())
                    matches.append(PoseMatch(t, poses_a[r].person_id, a, b, pa, pb, valid, conf))
    return matches


def _world_cameras(states: list) -> list:
    return [
        BundleCamera(st.single.intrinsics, plane_to_world_extrinsics(st.single.plane, st.to_ref))
        for st in states
    ]


def _refine_offsets(states, cams, cfg: PipelineConfig) -> None:
    """Discrete re-check of each offset by the bundle loss at fixed cameras."""
    for st in states[1:]:
        base = st.delta_t
        best = None
        for dt in range(base - cfg.dt_window, base + cfg.dt_window + 1):
            st.delta_t = dt
            obs = match_poses(states, cfg.match_gate)
            if not obs:
                continue
            loss, _ = bundle_loss(BundleProblem(cams, obs, cfg.bundle_weights, cfg.k_top))
            if best is None or loss < best[0]:
                best = (loss, dt)
        st.delta_t = base if best is None else best[1]


def _relative_to_reference(ext: CameraExtrinsics, ref: CameraExtrinsics) -> CameraExtrinsics:
    rot = nearest_rotation(ext.rot_world_to_cam @ ref.rot_world_to_cam.T)
    return CameraExtrinsics(rot, ref.rot_world_to_cam @ (ext.position - ref.position))


def run_pipeline(
    sequences: list,
    cfg: PipelineConfig | None = None,
    single_view: dict | None = None,
    delta_t: dict | None = None,
) -> RigSolution:
    """Calibrate and synchronise a rig from one detection sequence per camera.

    ``single_view`` maps camera ids to ready :class:`SingleViewSolution`
    objects that replace the single-view stage for those cameras, and
    ``delta_t`` maps camera ids to fixed frame offsets that replace the
    offset search; both exist for studying how errors in one stage carry
    into the next.
    """
    cfg = cfg or PipelineConfig()
    single_view = single_view or {}
    delta_t = delta_t or {}
    if len(sequences) < 2:
        raise InsufficientData(">= 2 cameras required")
    ids = [s.camera_id for s in sequences]
    if len(set(ids)) != len(ids):
        raise ValueError("camera ids must be unique")
    ref_id = cfg.reference if cfg.reference is not None else ids[0]
    if ref_id not in ids:
        raise ValueError(f"reference camera {ref_id!r} not among the inputs")
    ordered = [sequences[ids.index(ref_id)]] + [s for s in sequences if s.camera_id != ref_id]

    diag = {"single_view": {}, "ground_points": {}, "sync": {}, "rotation": {}, "icp": {}, "icp_transform": {}}
    states = []
    for seq in ordered:
        single = single_view.get(seq.camera_id)
        if single is None:
            single = _stage("single_view", seq.camera_id, ransac_calibrate, seq, cfg.single_view)
        ground = _stage("ground_points", seq.camera_id, ground_points, seq, single, cfg.dbscan_eps, cfg.dbscan_min_pts)
        diag["single_view"][seq.camera_id] = {
            "focal": float(single.intrinsics.f),
            "normal": [float(v) for v in single.plane.normal],
            "camera_height": float(-single.plane.normal @ single.plane.t_plane),
            **{k: (v if isinstance(v, bool) else float(v) if isinstance(v, float) else int(v)) for k, v in single.diagnostics.items()},
        }
        diag["ground_points"][seq.camera_id] = int(sum(len(p) for _, p in ground.values()))
        states.append(_CameraState(seq, single, ground))

    ref = states[0]
    for st in states[1:]:
        out = align_pair(ref, st, cfg, delta_t.get(st.seq.camera_id))
        for key in ("sync", "rotation", "icp", "icp_transform"):
            diag[key][st.seq.camera_id] = out[key]

    cams = _world_cameras(states)
    if cfg.run_bundle:
        if len(states) == 2:
            log.warning("bundle refinement of a two-camera rig is weakly constrained")
        if cfg.bundle.optimize_dt:
            _refine_offsets(states, cams, cfg)
        obs = match_poses(states, cfg.match_gate)
        if not obs:
            raise StageError("bundle", ref_id, NoSharedObservations("no poses matched across cameras"))
        prob = BundleProblem(cams, obs, cfg.bundle_weights, cfg.k_top, cfg.single_view.h, fixed=(0,), gauge=cfg.bundle_gauge)
        res = _stage("bundle", ref_id, optimize_bundle, prob, cfg.bundle)
        cams = res.cameras
        diag["bundle"] = {
            "observations": len(obs),
            "iterations": int(res.iterations),
            "overshoots": int(res.overshoots),
            "terms": {k: float(v) for k, v in res.terms.items()},
            "loss_history": [float(v) for v in res.loss_history],
        }

    ref_world = cams[0].extrinsics
    out = []
    for st, cam in zip(states, cams):
        rel = CameraExtrinsics.identity() if st is ref else _relative_to_reference(cam.extrinsics, ref_world)
        if st is ref and not (cfg.run_bundle and cfg.bundle_gauge == "plane"):
            rel = CameraExtrinsics.identity()
            plane = st.single.plane
        elif cfg.run_bundle:
            # ground as seen by the refined camera; world z is the reference ground normal
            normal = cam.extrinsics.rot_world_to_cam[:, 2]
            plane = plane_basis_from_normal(normal, cam.intrinsics, float(cam.extrinsics.position[2]))
        else:
            rel = compose_extrinsics(ref.single.plane, st.single.plane, st.to_ref)
            plane = st.single.plane
        out.append(CameraSolution(st.seq.camera_id, cam.intrinsics, rel, plane, int(st.delta_t)))
    # original input order
    out.sort(key=lambda c: ids.index(c.camera_id))
    sol = RigSolution(ref_id, out, diag)
    sol.check()
    return sol

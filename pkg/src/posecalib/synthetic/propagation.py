"""How noise injected at one stage carries through the rest of the pipeline.

Each study perturbs one input (detections, focal length, ground normal,
frame offset, camera rotation) on a set of synthetic rigs and reports the
median over runs of the errors measured after every later stage. Runs reuse
the same rigs across noise levels so neighbouring levels differ only in the
injected noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ..align import compose_extrinsics
from ..errors import CalibrationError
from ..geometry import CameraExtrinsics, CameraIntrinsics, RigidTransform2D, pixel_rays, plane_basis_from_normal
from ..pipeline import PipelineConfig, run_pipeline
from ..single_view import SingleViewSolution
from .metrics import metric_focal_pct, metric_nmpjpe, metric_relpose
from .noise import inject_noise
from .rig import RigConfig, SyntheticRig, generate_rig

DETECTION_STDS = (0, 5, 10, 15, 20, 25, 30, 35)
FOCAL_STDS = tuple(range(0, 201, 20))
NORMAL_STDS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
SYNC_OFFSETS = (-100, -75, -50, -25, 0, 25, 50, 75, 100)
ROTATION_STDS = (0, 1, 2, 3, 5, 10, 15, 20)

STUDIES = ("detections", "focal", "normal", "sync", "rotation")
_TARGET_CODE = {name: i for i, name in enumerate(STUDIES)}


def _pipeline_default() -> PipelineConfig:
    return PipelineConfig(run_bundle=False, max_offset=100)


@dataclass
class PropagationConfig:
    runs: int = 5
    seed: int = 0
    rig: RigConfig = field(default_factory=RigConfig)
    pipeline: PipelineConfig = field(default_factory=_pipeline_default)


@dataclass
class StageErrors:
    """Median errors over the runs at one noise level (NaN when every run failed)."""

    value: float
    focal_pct: float
    sync_frames: float
    search_deg: float
    search_m: float
    icp_deg: float
    icp_m: float
    final_deg: float
    final_m: float
    failures: int
    runs: int


@dataclass
class PoseErrors:
    value: float
    nmpjpe: float
    runs: int


def _rig(cfg: PropagationConfig, run: int) -> SyntheticRig:
    return generate_rig(replace(cfg.rig, seed=cfg.seed + run))


def _noise_rng(cfg: PropagationConfig, study: str, level: int, run: int):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, _TARGET_CODE[study], level, run]))


def truth_single_view(rig: SyntheticRig, cam: int, focal: float | None = None, normal=None) -> SingleViewSolution:
    """Single-view result built from ground truth, optionally with a replaced focal length or normal.

    The camera height stays at its true value.
    """
    k = rig.intrinsics[cam]
    true_plane = rig.plane(cam)
    if focal is not None:
        k = CameraIntrinsics(float(focal), k.o1, k.o2)
    n = true_plane.normal if normal is None else np.asarray(normal, dtype=float)
    height = float(rig.extrinsics[cam].position[2])
    plane = plane_basis_from_normal(n, k, height)
    return SingleViewSolution(k, plane.normal, np.zeros(0), plane, np.zeros(0, dtype=bool))


def _stage_errors(sol, rig: SyntheticRig) -> dict:
    ids = [s.camera_id for s in rig.sequences]
    planes = []
    for cid in ids:
        sv = sol.diagnostics["single_view"][cid]
        k = CameraIntrinsics(sv["focal"], rig.config.width / 2, rig.config.height / 2)
        planes.append(plane_basis_from_normal(np.array(sv["normal"]), k, sv["camera_height"]))
    search, icp = [CameraExtrinsics.identity()], [CameraExtrinsics.identity()]
    for i, cid in enumerate(ids[1:], start=1):
        rot = sol.diagnostics["rotation"][cid]
        t2d = RigidTransform2D(np.deg2rad(rot["angle_deg"]), np.array(rot["translation"]))
        search.append(compose_extrinsics(planes[0], planes[i], t2d))
        icp_t = sol.diagnostics["icp_transform"][cid]
        icp.append(compose_extrinsics(planes[0], planes[i], RigidTransform2D(np.deg2rad(icp_t["angle_deg"]), np.array(icp_t["translation"]))))
    final = [sol.camera(cid).extrinsics for cid in ids]
    focal = np.mean([metric_focal_pct(sol.camera(cid).intrinsics.f, k.f) for cid, k in zip(ids, rig.intrinsics)])
    sync = np.mean([abs(sol.camera(cid).delta_t - d) for cid, d in zip(ids[1:], rig.delta_t[1:])])
    out = {"focal_pct": focal, "sync_frames": sync}
    for name, rig_pred in (("search", search), ("icp", icp), ("final", final)):
        out[f"{name}_deg"], out[f"{name}_m"] = metric_relpose(rig_pred, rig.extrinsics)
    return out


def _summarise(value, rows: list, runs: int) -> StageErrors:
    keys = ("focal_pct", "sync_frames", "search_deg", "search_m", "icp_deg", "icp_m", "final_deg", "final_m")
    ok = [r for r in rows if r is not None]
    med = {k: float(np.median([r[k] for r in ok])) if ok else float("nan") for k in keys}
    return StageErrors(value=float(value), failures=runs - len(ok), runs=runs, **med)


def _run_study(study: str, levels, cfg: PropagationConfig) -> list:
    reports = []
    for li, level in enumerate(levels):
        rows = []
        for run in range(cfg.runs):
            rig = _rig(cfg, run)
            rng = _noise_rng(cfg, study, li, run)
            ids = [s.camera_id for s in rig.sequences]
            seqs, singles, offsets = rig.sequences, None, None
            if study == "detections":
                seqs = [inject_noise("detections", s, level, rng=rng) for s in rig.sequences]
            elif study == "focal":
                singles = {cid: truth_single_view(rig, c, focal=inject_noise("focal", rig.intrinsics[c].f, level, rng=rng)) for c, cid in enumerate(ids)}
            elif study == "normal":
                singles = {cid: truth_single_view(rig, c, normal=inject_noise("normal", rig.plane(c).normal, level, rng=rng)) for c, cid in enumerate(ids)}
            elif study == "sync":
                singles = {cid: truth_single_view(rig, c) for c, cid in enumerate(ids)}
                offsets = {cid: inject_noise("sync", rig.delta_t[c], level) for c, cid in enumerate(ids) if c > 0}
            try:
                sol = run_pipeline(seqs, cfg.pipeline, single_view=singles, delta_t=offsets)
                rows.append(_stage_errors(sol, rig))
            except (CalibrationError, ValueError):
                rows.append(None)
        reports.append(_summarise(level, rows, cfg.runs))
    return reports


def run_detection_noise_study(stds=DETECTION_STDS, cfg: PropagationConfig | None = None) -> list:
    """Pixel noise on every detected joint; every stage runs on the noisy detections."""
    return _run_study("detections", stds, cfg or PropagationConfig())


def run_focal_noise_study(stds=FOCAL_STDS, cfg: PropagationConfig | None = None) -> list:
    """True normal, focal length with Gaussian noise (pixels), in place of the single-view stage."""
    return _run_study("focal", stds, cfg or PropagationConfig())


def run_normal_noise_study(stds=NORMAL_STDS, cfg: PropagationConfig | None = None) -> list:
    """True focal length, ground normal with per-component Gaussian noise, renormalised."""
    return _run_study("normal", stds, cfg or PropagationConfig())


def run_sync_noise_study(offsets=SYNC_OFFSETS, cfg: PropagationConfig | None = None) -> list:
    """True single-view results; every frame offset is the true one plus ``offset``."""
    return _run_study("sync", offsets, cfg or PropagationConfig())


# --------------------------------------------------------------------------
# rotation noise: effect on triangulated poses


def triangulate(centres, directions) -> np.ndarray:
    """Least-squares point closest to a set of rays (at least two, not all parallel)."""
    centres = np.asarray(centres, dtype=float)
    d = np.asarray(directions, dtype=float)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    proj = np.eye(3)[None] - d[:, :, None] * d[:, None, :]
    a = proj.sum(axis=0)
    b = np.einsum("nij,nj->i", proj, centres)
    return np.linalg.solve(a, b)


def _root_centred(pose, names) -> np.ndarray:
    root = 0.5 * (pose[names.index("left_hip")] + pose[names.index("right_hip")])
    return pose - root


def triangulate_rig_poses(rig: SyntheticRig, extrinsics: list, max_frames: int | None = None) -> tuple:
    """Triangulate every person seen by two or more cameras with the given camera poses.

    Uses the rig's true intrinsics and identities; returns ``(pred, gt)`` arrays
    of root-centred poses, ``(N, J, 3)``.
    """
    names = list(rig.joint_names)
    lookup = []
    for c, seq in enumerate(rig.sequences):
        frames = {}
        for frame in seq.frames:
            frames[frame.index + rig.delta_t[c]] = {p.person_id: p for p in frame.poses}
        lookup.append(frames)
    pred, gt = [], []
    n_global = rig.joints_world.shape[0]
    frames = range(n_global) if max_frames is None else range(min(n_global, max_frames))
    for g in frames:
        for person in range(rig.config.n_people):
            views = []
            for c in range(len(rig.sequences)):
                pose = lookup[c].get(g, {}).get(int(rig.person_ids[c][person]))
                if pose is not None:
                    views.append((c, pose))
            if len(views) < 2:
                continue
            pts = np.empty((len(names), 3))
            for j, name in enumerate(names):
                centres, dirs = [], []
                for c, pose in views:
                    ext = extrinsics[c]
                    ray = pixel_rays(np.array(pose.joints[name][:2]), rig.intrinsics[c])
                    centres.append(ext.position)
                    dirs.append(ray @ ext.rot_world_to_cam)
                pts[j] = triangulate(centres, dirs)
            pred.append(_root_centred(pts, names))
            gt.append(_root_centred(rig.joints_world[g, person], names))
    return np.array(pred), np.array(gt)


def run_rotation_noise_study(stds=ROTATION_STDS, cfg: PropagationConfig | None = None, max_frames: int | None = 100) -> list:
    """NMPJPE of poses triangulated with true cameras whose rotations carry Gaussian noise (degrees)."""
    cfg = cfg or PropagationConfig()
    reports = []
    for li, std in enumerate(stds):
        errs = []
        for run in range(cfg.runs):
            rig = _rig(cfg, run)
            rng = _noise_rng(cfg, "rotation", li, run)
            noisy = [inject_noise("rotation", ext, std, rng=rng) for ext in rig.extrinsics]
            pred, gt = triangulate_rig_poses(rig, noisy, max_frames)
            errs.append(metric_nmpjpe(pred, gt))
        reports.append(PoseErrors(float(std), float(np.median(errs)), cfg.runs))
    return reports


def write_study_csv(reports: list, path) -> None:
    """One row per noise level; columns are the report fields."""
    if not reports:
        raise ValueError("no reports to write")
    names = list(reports[0].__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in reports:
            w.writerow([repr(getattr(r, n)) if isinstance(getattr(r, n), float) else getattr(r, n) for n in names])

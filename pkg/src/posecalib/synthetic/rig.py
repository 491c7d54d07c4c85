"""Synthetic multi-camera recordings of people walking on a flat ground.

Produces full-skeleton 2D detections per camera (as :class:`CameraSequence`)
together with the ground truth every later stage is scored against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detections import JOINTS, CameraSequence, Frame, PoseDetection
from ..geometry import CameraExtrinsics, CameraIntrinsics, RigidTransform2D, plane_basis_from_normal, rot2d
from .scene import UP

# (vertical fraction of shoulder height, lateral fraction, forward fraction)
_BODY = {
    "left_ankle": (0.0, 0.06, 0.0),
    "right_ankle": (0.0, -0.06, 0.0),
    "left_knee": (0.32, 0.06, 0.0),
    "right_knee": (0.32, -0.06, 0.0),
    "left_hip": (0.62, 0.07, 0.0),
    "right_hip": (0.62, -0.07, 0.0),
    "left_shoulder": (1.0, 0.12, 0.0),
    "right_shoulder": (1.0, -0.12, 0.0),
    "left_elbow": (0.74, 0.15, 0.02),
    "right_elbow": (0.74, -0.15, 0.02),
    "left_wrist": (0.5, 0.15, 0.06),
    "right_wrist": (0.5, -0.15, 0.06),
    "neck": (1.06, 0.0, 0.0),
    "nose": (1.2, 0.0, 0.07),
    "left_eye": (1.23, 0.03, 0.06),
    "right_eye": (1.23, -0.03, 0.06),
    "left_ear": (1.22, 0.06, 0.0),
    "right_ear": (1.22, -0.06, 0.0),
    "head": (1.32, 0.0, 0.0),
}
_BODY_NAMES = [n for n in JOINTS if n in _BODY]
_BODY_OFFSETS = np.array([_BODY[n] for n in _BODY_NAMES])


@dataclass
class RigConfig:
    n_cameras: int = 3
    n_people: int = 4
    n_frames: int = 300
    fps: float = 25.0
    shoulder_height: float = 1.7
    height_std: float = 0.0
    area: float = 8.0
    speed: float = 1.3
    turn_std: float = 0.25
    cam_distance: tuple = (9.0, 12.0)
    cam_height: tuple = (3.0, 5.0)
    focal: tuple = (900.0, 1300.0)
    width: float = 1920.0
    height: float = 1080.0
    max_delta_t: int = 50
    detection_noise: float = 0.0
    confidence: tuple = (0.6, 1.0)
    seed: int = 0
    delta_t: tuple | None = None


@dataclass
class SyntheticRig:
    config: RigConfig
    intrinsics: list
    extrinsics: list
    delta_t: list
    joints_world: np.ndarray  # (global frames, people, joints, 3)
    ankle_world: np.ndarray  # (global frames, people, 3)
    sequences: list
    heights: np.ndarray
    # per camera: detection id of every ground-truth person
    person_ids: list = field(default_factory=list)
    joint_names: tuple = field(default_factory=lambda: tuple(_BODY_NAMES))

    def plane(self, cam: int):
        """Ground-truth ground plane in camera ``cam``'s coordinates."""
        ext = self.extrinsics[cam]
        normal = ext.rot_world_to_cam @ UP
        return plane_basis_from_normal(normal, self.intrinsics[cam], float(ext.position[2]))

    def plane_to_world(self, cam: int) -> RigidTransform2D:
        """2D rigid transform from camera ``cam``'s plane frame to world ``(x, y)``."""
        plane = self.plane(cam)
        ext = self.extrinsics[cam]
        # world -> plane directions: a rotation about the shared up axis
        m = plane.rot_cam_to_plane @ ext.rot_world_to_cam
        ang = np.arctan2(m[0, 1], m[0, 0])
        cam_in_plane = plane.rot_cam_to_plane @ -plane.t_plane
        return RigidTransform2D(ang, ext.position[:2] - rot2d(ang) @ cam_in_plane[:2])


def _walk(rng, cfg: RigConfig, n_total: int):
    half = cfg.area / 2
    step = cfg.speed / cfg.fps
    pos = rng.uniform(-half, half, size=(cfg.n_people, 2))
    heading = rng.uniform(0, 2 * np.pi, cfg.n_people)
    speed = step * rng.uniform(0.7, 1.3, cfg.n_people)
    traj = np.empty((n_total, cfg.n_people, 2))
    head = np.empty((n_total, cfg.n_people))
    for t in range(n_total):
        traj[t] = pos
        head[t] = heading
        heading = heading + rng.normal(0, cfg.turn_std, cfg.n_people) / np.sqrt(cfg.fps)
        nxt = pos + speed[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])
        # turn around at the area boundary
        out = np.abs(nxt) > half
        for i in np.where(out.any(axis=1))[0]:
            heading[i] = np.arctan2(-pos[i, 1], -pos[i, 0]) + rng.normal(0, 0.5)
            nxt[i] = pos[i] + speed[i] * np.array([np.cos(heading[i]), np.sin(heading[i])])
        pos = nxt
    return traj, head


def _skeletons(traj, head, heights):
    fwd = np.stack([np.cos(head), np.sin(head)], axis=-1)
    lat = np.stack([-np.sin(head), np.cos(head)], axis=-1)
    h = heights[None, :, None]
    vert, side, front = _BODY_OFFSETS[:, 0], _BODY_OFFSETS[:, 1], _BODY_OFFSETS[:, 2]
    xy = (
        traj[:, :, None, :]
        + h[..., None] * side[None, None, :, None] * lat[:, :, None, :]
        + h[..., None] * front[None, None, :, None] * fwd[:, :, None, :]
    )
    z = h * vert[None, None, :]
    return np.concatenate([xy, np.broadcast_to(z[..., None], xy.shape[:3] + (1,))], axis=-1)


def _camera(rng, cfg: RigConfig, index: int):
    base = 2 * np.pi * index / cfg.n_cameras
    azim = base + rng.uniform(-0.3, 0.3)
    dist = rng.uniform(*cfg.cam_distance)
    height = rng.uniform(*cfg.cam_height)
    position = np.array([dist * np.cos(azim), dist * np.sin(azim), height])
    target = np.array([rng.normal(0, 0.5), rng.normal(0, 0.5), 0.8])
    forward = target - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, UP)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    f = rng.uniform(*cfg.focal)
    return CameraIntrinsics(f, cfg.width / 2, cfg.height / 2), CameraExtrinsics(rot, position)


def generate_rig(cfg: RigConfig | None = None) -> SyntheticRig:
    """Random rig of ``n_cameras`` around the walking area.

    Camera 0 is the reference. Camera ``c`` starts ``delta_t[c]`` frames later
    than the reference, i.e. ``t_ref = t_c + delta_t[c]``.
    """
    cfg = cfg or RigConfig()
    rng = np.random.default_rng(cfg.seed)
    if cfg.delta_t is None:
        delta_t = [0] + [int(rng.integers(0, cfg.max_delta_t + 1)) for _ in range(cfg.n_cameras - 1)]
    else:
        delta_t = [int(d) for d in cfg.delta_t]
    heights = cfg.shoulder_height + (rng.normal(0, cfg.height_std, cfg.n_people) if cfg.height_std > 0 else np.zeros(cfg.n_people))
    traj, head = _walk(rng, cfg, cfg.n_frames)
    joints = _skeletons(traj, head, heights)
    cams = [_camera(rng, cfg, c) for c in range(cfg.n_cameras)]

    sequences = []
    person_ids = []
    for c, (k, ext) in enumerate(cams):
        ids = rng.permutation(cfg.n_people) + 100 * c
        person_ids.append(ids)
        frames = []
        for local, g in enumerate(range(delta_t[c], cfg.n_frames)):
            p_cam = ext.world_to_cam(joints[g])
            poses = []
            for p in range(cfg.n_people):
                z = p_cam[p, :, 2]
                if np.any(z < 0.5):
                    continue
                pix = np.column_stack([k.f * p_cam[p, :, 0] / z + k.o1, k.f * p_cam[p, :, 1] / z + k.o2])
                if cfg.detection_noise > 0:
                    pix = pix + rng.normal(0, cfg.detection_noise, pix.shape)
                inside = (pix[:, 0] >= 0) & (pix[:, 0] < cfg.width) & (pix[:, 1] >= 0) & (pix[:, 1] < cfg.height)
                if not inside.all():
                    continue
                conf = rng.uniform(*cfg.confidence, size=len(_BODY_NAMES))
                poses.append(
                    PoseDetection(
                        int(ids[p]),
                        {n: (float(pix[j, 0]), float(pix[j, 1]), float(conf[j])) for j, n in enumerate(_BODY_NAMES)},
                    )
                )
            frames.append(Frame(local, tuple(poses)))
        sequences.append(CameraSequence(f"cam{c}", cfg.width, cfg.height, cfg.fps, frames))

    return SyntheticRig(
        config=cfg,
        intrinsics=[k for k, _ in cams],
        extrinsics=[e for _, e in cams],
        delta_t=delta_t,
        joints_world=joints,
        ankle_world=np.concatenate([traj, np.zeros(traj.shape[:2] + (1,))], axis=-1),
        sequences=sequences,
        heights=heights,
        person_ids=person_ids,
    )

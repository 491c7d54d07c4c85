"""Random single-camera scenes of people standing on a ground plane."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import FrustumExhausted
from ..geometry import CameraIntrinsics, GroundPlaneFrame, plane_basis_from_normal

UP = np.array([0.0, 0.0, 1.0])


@dataclass
class SceneConfig:
    n_people: int = 3
    height_mean: float = 1.6
    height_std: float = 0.0
    # 960 on a 1920 px wide image is the 90 degree horizontal FOV
    fx: float = 960.0
    fy: float = 960.0
    width: float = 1920.0
    height: float = 1080.0
    cam_height_range: tuple = (2.0, 8.0)
    tilt_range_deg: tuple = (5.0, 60.0)
    roll_range_deg: tuple = (-10.0, 10.0)
    patch_size: float = 10.0
    margin: float = 0.0
    seed: int = 0


@dataclass
class SyntheticScene:
    config: SceneConfig
    rot_world_to_cam: np.ndarray
    cam_position: np.ndarray
    normal: np.ndarray
    plane: GroundPlaneFrame
    heights: np.ndarray
    ankles_world: np.ndarray
    shoulders_world: np.ndarray
    ankles_cam: np.ndarray
    shoulders_cam: np.ndarray
    ankle_px: np.ndarray
    shoulder_px: np.ndarray

    @property
    def intrinsics(self) -> CameraIntrinsics:
        """Square-pixel model of the generator camera (uses ``fx``)."""
        c = self.config
        return CameraIntrinsics(c.fx, c.width / 2.0, c.height / 2.0)

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.config.width / 2.0, self.config.height / 2.0])

    @property
    def camera_height(self) -> float:
        return float(self.cam_position[2])


def look_rotation(tilt: float, roll: float, yaw: float = 0.0) -> np.ndarray:
    """World-to-camera rotation for a camera looking along ``yaw`` tilted down by ``tilt``."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    forward = np.array([-sy * np.cos(tilt), cy * np.cos(tilt), -np.sin(tilt)])
    right = np.array([cy, sy, 0.0])
    down = np.cross(forward, right)
    # roll about the optical axis
    cr, sr = np.cos(roll), np.sin(roll)
    right, down = cr * right + sr * down, -sr * right + cr * down
    return np.stack([right, down, forward])


def project_xy(p_cam, fx, fy, o1, o2):
    return np.stack([fx * p_cam[..., 0] / p_cam[..., 2] + o1, fy * p_cam[..., 1] / p_cam[..., 2] + o2], axis=-1)


def generate_scene(cfg: SceneConfig | None = None, rng=None) -> SyntheticScene:
    """Random camera above a flat ground and ``n_people`` upright people in view.

    Heights are drawn from ``N(height_mean, height_std)``; each person's
    shoulder centre sits exactly ``height`` above the ankle centre.
    """
    cfg = cfg or SceneConfig()
    if cfg.n_people < 3:
        raise ValueError("need at least three people")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng

    cam_h = rng.uniform(*cfg.cam_height_range)
    tilt = np.deg2rad(rng.uniform(*cfg.tilt_range_deg))
    roll = np.deg2rad(rng.uniform(*cfg.roll_range_deg))
    rot = look_rotation(tilt, roll)
    position = np.array([0.0, 0.0, cam_h])
    o1, o2 = cfg.width / 2.0, cfg.height / 2.0

    center_y = cam_h / np.tan(tilt)
    ankles = np.empty((0, 3))
    heights = np.empty(0)
    for _ in range(1000):
        need = cfg.n_people - len(ankles)
        if need <= 0:
            break
        batch = 4 * need + 8
        xy = rng.uniform(-cfg.patch_size / 2, cfg.patch_size / 2, size=(batch, 2))
        xy[:, 1] += center_y
        h = rng.normal(cfg.height_mean, cfg.height_std, size=batch) if cfg.height_std > 0 else np.full(batch, cfg.height_mean)
        a = np.column_stack([xy, np.zeros(batch)])
        s = a + h[:, None] * UP
        a_cam = (a - position) @ rot.T
        s_cam = (s - position) @ rot.T
        ok = (a_cam[:, 2] > 0.5) & (s_cam[:, 2] > 0.5) & (h > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            pa = project_xy(a_cam, cfg.fx, cfg.fy, o1, o2)
            ps = project_xy(s_cam, cfg.fx, cfg.fy, o1, o2)
        for p in (pa, ps):
            ok &= (p[:, 0] >= cfg.margin) & (p[:, 0] <= cfg.width - cfg.margin)
            ok &= (p[:, 1] >= cfg.margin) & (p[:, 1] <= cfg.height - cfg.margin)
        ankles = np.vstack([ankles, a[ok][:need]])
        heights = np.concatenate([heights, h[ok][:need]])
    else:
        raise FrustumExhausted("could not place every person inside the image")
    if len(ankles) < cfg.n_people:
        raise FrustumExhausted("could not place every person inside the image")

    shoulders = ankles + heights[:, None] * UP
    a_cam = (ankles - position) @ rot.T
    s_cam = (shoulders - position) @ rot.T
    normal = rot @ UP
    k = CameraIntrinsics(cfg.fx, o1, o2)
    plane = plane_basis_from_normal(normal, k, cam_h)
    return SyntheticScene(
        config=cfg,
        rot_world_to_cam=rot,
        cam_position=position,
        normal=normal,
        plane=plane,
        heights=heights,
        ankles_world=ankles,
        shoulders_world=shoulders,
        ankles_cam=a_cam,
        shoulders_cam=s_cam,
        ankle_px=project_xy(a_cam, cfg.fx, cfg.fy, o1, o2),
        shoulder_px=project_xy(s_cam, cfg.fx, cfg.fy, o1, o2),
    )

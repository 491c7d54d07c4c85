"""Pinhole camera model and ground-plane frames.

Conventions used throughout the package:

* camera coordinates are x right, y down, z forward (image coordinates grow
  the same way);
* the ground normal points from the ground towards the camera, so a camera
  above the ground has positive height along the normal;
* plane coordinates are right-handed with the up axis (the normal) as the
  third coordinate. 2D plane points are the first two coordinates.

Points are plain numpy arrays with the coordinate on the last axis, so every
function here works on a single point or a stack of them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBasis, NonPositiveDepth, RayParallelToPlane

DEPTH_EPS = 1e-12
PARALLEL_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    o1: float
    o2: float

    def __post_init__(self):
        if not (np.isfinite(self.f) and self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not (np.isfinite(self.o1) and np.isfinite(self.o2)):
            raise ValueError("principal point must be finite")

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.o1, self.o2])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.o1], [0.0, self.f, self.o2], [0.0, 0.0, 1.0]])

    @classmethod
    def centered(cls, f: float, width: float, height: float) -> "CameraIntrinsics":
        return cls(float(f), width / 2.0, height / 2.0)


@dataclass(frozen=True)
class GroundPlaneFrame:
    """Ground plane seen from one camera.

    ``rot_cam_to_plane`` has rows (x axis, y axis, normal) expressed in camera
    coordinates and ``t_plane`` is the plane origin in camera coordinates, so
    ``p_plane = rot_cam_to_plane @ (p_cam - t_plane)``.
    """

    normal: np.ndarray
    rot_cam_to_plane: np.ndarray
    t_plane: np.ndarray

    @property
    def camera_height(self) -> float:
        """Distance from the camera centre to the plane along the normal."""
        return float(-self.normal @ self.t_plane)

    def to_plane(self, p_cam):
        return (np.asarray(p_cam, dtype=float) - self.t_plane) @ self.rot_cam_to_plane.T

    def to_camera(self, p_plane):
        return np.asarray(p_plane, dtype=float) @ self.rot_cam_to_plane + self.t_plane


@dataclass(frozen=True)
class RigidTransform2D:
    """In-plane rigid motion ``p -> R(angle) p + translation``."""

    angle: float
    translation: np.ndarray

    def __post_init__(self):
        angle = float(np.mod(self.angle, 2 * np.pi))
        # mod of a tiny negative angle rounds up to the period itself
        object.__setattr__(self, "angle", 0.0 if angle >= 2 * np.pi else angle)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(2))

    @classmethod
    def identity(cls) -> "RigidTransform2D":
        return cls(0.0, np.zeros(2))

    @property
    def matrix(self) -> np.ndarray:
        return rot2d(self.angle)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T + self.translation

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform2D(self.angle + other.angle, self.matrix @ other.translation + self.translation)


@dataclass(frozen=True)
class CameraExtrinsics:
    """Pose of a camera: ``p_cam = rot_world_to_cam @ (p_world - position)``."""

    rot_world_to_cam: np.ndarray
    position: np.ndarray

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3))

    @property
    def translation(self) -> np.ndarray:
        return -self.rot_world_to_cam @ self.position

    def world_to_cam(self, p_world):
        return (np.asarray(p_world, dtype=float) - self.position) @ self.rot_world_to_cam.T

    def cam_to_world(self, p_cam):
        return np.asarray(p_cam, dtype=float) @ self.rot_world_to_cam + self.position


def rot2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rot_about_z(angle: float) -> np.ndarray:
    r = np.eye(3)
    r[:2, :2] = rot2d(angle)
    return r


def rodrigues(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-15:
        return np.eye(3)
    k = rotvec / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * kx @ kx


def rotation_angle(r: np.ndarray) -> float:
    """Angle of a rotation matrix in radians."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormality_residual(r: np.ndarray) -> float:
    return float(max(np.abs(r @ r.T - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0)))


def angle_between(a, b) -> float:
    """Unsigned angle between two vectors, in radians."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # atan2 form stays accurate near 0 and pi
    cross = np.linalg.norm(np.cross(a, b)) if a.shape[-1] == 3 else abs(a[0] * b[1] - a[1] * b[0])
    return float(np.arctan2(cross, a @ b))


def project(p_cam, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection ``(f x/z + o1, f y/z + o2)``."""
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= DEPTH_EPS):
        raise NonPositiveDepth("point at or behind the camera centre")
    return np.stack([k.f * p[..., 0] / z + k.o1, k.f * p[..., 1] / z + k.o2], axis=-1)


def pixel_rays(pix, k: CameraIntrinsics) -> np.ndarray:
    """``K^-1 [u, v, 1]``: rays with unit depth through the given pixels."""
    pix = np.asarray(pix, dtype=float)
    x = (pix[..., 0] - k.o1) / k.f
    y = (pix[..., 1] - k.o2) / k.f
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def backproject_to_depth(pix, k: CameraIntrinsics, depth) -> np.ndarray:
    return pixel_rays(pix, k) * np.asarray(depth, dtype=float)[..., None]


def intersect_plane_camera(pix, k: CameraIntrinsics, plane: GroundPlaneFrame) -> np.ndarray:
    """Intersection of the pixel rays with the plane, in camera coordinates."""
    rays = pixel_rays(pix, k)
    denom = rays @ plane.normal
    if np.any(np.abs(denom) <= PARALLEL_EPS):
        raise RayParallelToPlane("viewing ray is parallel to the ground plane")
    s = (plane.normal @ plane.t_plane) / denom
    return rays * s[..., None]


def backproject_to_plane(pix, k: CameraIntrinsics, plane: GroundPlaneFrame) -> np.ndarray:
    """Plane coordinates ``(x, y, ~0)`` of the ground point seen at ``pix``."""
    return plane.to_plane(intersect_plane_camera(pix, k, plane))


def plane_basis_from_normal(normal, k: CameraIntrinsics, camera_height: float, center=None) -> GroundPlaneFrame:
    """Build the camera's ground-plane frame from the unit normal.

    The in-plane x axis is the camera x axis (the backprojected image
    horizontal) projected onto the plane; the second axis is
    ``normal × x``. The origin is where the ray through ``center`` (default:
    the principal point) meets the plane lying ``camera_height`` below the
    camera, or the point straight below the camera when that ray runs
    parallel to the ground and no ``center`` was given.
    """
    n = np.asarray(normal, dtype=float)
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"normal must be unit length, got norm {norm}")
    n = n / norm
    horizontal = np.array([1.0, 0.0, 0.0])
    x_axis = horizontal - (horizontal @ n) * n
    x_norm = np.linalg.norm(x_axis)
    if x_norm < 1e-6:
        raise DegenerateBasis("image horizontal is parallel to the ground normal")
    x_axis /= x_norm
    y_axis = np.cross(n, x_axis)
    rot = np.stack([x_axis, y_axis, n])

    explicit = center is not None
    center = k.principal_point if center is None else np.asarray(center, dtype=float)
    ray = pixel_rays(center, k)
    denom = ray @ n
    if abs(denom) > PARALLEL_EPS:
        origin = ray * (-camera_height / denom)
    elif explicit:
        raise RayParallelToPlane("image centre ray is parallel to the ground plane")
    else:
        origin = -camera_height * n
    return GroundPlaneFrame(normal=n, rot_cam_to_plane=rot, t_plane=origin)

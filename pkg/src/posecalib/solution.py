"""Calibrated rig: per-camera parameters plus stage diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvariantViolation
from .geometry import CameraExtrinsics, CameraIntrinsics, GroundPlaneFrame, orthonormality_residual

# 4 intrinsics (fx, fy, o1, o2; this model ties fx = fy), 6 extrinsic DOF, 1 time offset
PARAMETERS_PER_CAMERA = 11


@dataclass
class CameraSolution:
    camera_id: str
    intrinsics: CameraIntrinsics
    # world -> camera, world being the reference camera's frame
    extrinsics: CameraExtrinsics
    plane: GroundPlaneFrame
    delta_t: int = 0


@dataclass
class RigSolution:
    reference: str
    cameras: list
    diagnostics: dict = field(default_factory=dict)

    def camera(self, camera_id: str) -> CameraSolution:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise KeyError(camera_id)

    def check(self, tol: float = 1e-6) -> None:
        """Raise :class:`InvariantViolation` if the rig is inconsistent."""
        ref = self.camera(self.reference)
        if ref.delta_t != 0:
            raise InvariantViolation("reference camera must have delta_t = 0")
        if not np.allclose(ref.extrinsics.rot_world_to_cam, np.eye(3), atol=tol) or not np.allclose(ref.extrinsics.position, 0, atol=tol):
            raise InvariantViolation("reference camera must have identity extrinsics")
        for cam in self.cameras:
            if orthonormality_residual(cam.extrinsics.rot_world_to_cam) > tol:
                raise InvariantViolation(f"rotation of {cam.camera_id} is not orthonormal")
            if not np.all(np.isfinite(cam.extrinsics.position)):
                raise InvariantViolation(f"position of {cam.camera_id} is not finite")

    def rebase(self, camera_id: str) -> "RigSolution":
        """Same rig expressed in the frame and clock of another camera."""
        new = self.camera(camera_id)
        r_new, c_new = new.extrinsics.rot_world_to_cam, new.extrinsics.position
        cams = []
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                ext = CameraExtrinsics.identity()
            else:
                r, c = cam.extrinsics.rot_world_to_cam, cam.extrinsics.position
                ext = CameraExtrinsics(r @ r_new.T, r_new @ (c - c_new))
            cams.append(replace(cam, extrinsics=ext, delta_t=cam.delta_t - new.delta_t))
        return RigSolution(camera_id, cams, self.diagnostics)


def relative_pose(a: CameraExtrinsics, b: CameraExtrinsics) -> CameraExtrinsics:
    """Pose of camera ``b`` in the coordinate frame of camera ``a``."""
    r_a = a.rot_world_to_cam
    return CameraExtrinsics(b.rot_world_to_cam @ r_a.T, r_a @ (b.position - a.position))

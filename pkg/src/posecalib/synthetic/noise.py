"""Perturbations used by the noise-propagation studies."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..detections import CameraSequence, Frame, PoseDetection
from ..errors import UnknownTarget
from ..geometry import CameraExtrinsics, CameraIntrinsics, rodrigues

TARGETS = ("detections", "focal", "normal", "sync", "rotation")


def _noisy_sequence(seq: CameraSequence, std: float, rng) -> CameraSequence:
    frames = []
    for frame in seq.frames:
        poses = []
        for pose in frame.poses:
            joints = {}
            for name, (x, y, c) in pose.joints.items():
                dx, dy = rng.normal(0.0, std, 2)
                joints[name] = (x + dx, y + dy, c)
            poses.append(PoseDetection(pose.person_id, joints))
        frames.append(Frame(frame.index, tuple(poses)))
    return replace(seq, frames=frames)


def _random_rotation(std_deg: float, rng) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rodrigues(np.deg2rad(rng.normal(0.0, std_deg)) * axis)


def inject_noise(target: str, value, magnitude: float, seed=None, rng=None):
    """Return a perturbed copy of ``value``.

    ``detections``: Gaussian pixel noise of std ``magnitude`` on an array of
    pixels or on every joint of a :class:`CameraSequence`.
    ``focal``: Gaussian noise in pixels on a focal length or intrinsics.
    ``normal``: Gaussian noise on each component, then renormalised.
    ``sync``: the integer ``magnitude`` (may be negative) is added to an offset.
    ``rotation``: rotation by a Gaussian angle (degrees) about a random axis,
    applied to a rotation matrix or to the orientation of an extrinsics.

    A zero magnitude returns ``value`` itself.
    """
    if target not in TARGETS:
        raise UnknownTarget(f"unknown noise target {target!r}; expected one of {TARGETS}")
    if target != "sync" and magnitude < 0:
        raise ValueError("noise magnitude must be non-negative")
    if magnitude == 0:
        return value
    rng = np.random.default_rng(seed) if rng is None else rng

    if target == "sync":
        if int(magnitude) != magnitude:
            raise ValueError("sync offsets are whole frames")
        return int(value) + int(magnitude)
    if target == "detections":
        if isinstance(value, CameraSequence):
            return _noisy_sequence(value, magnitude, rng)
        arr = np.asarray(value, dtype=float)
        return arr + rng.normal(0.0, magnitude, arr.shape)
    if target == "focal":
        if isinstance(value, CameraIntrinsics):
            return replace(value, f=max(value.f + rng.normal(0.0, magnitude), 1.0))
        return max(float(value) + rng.normal(0.0, magnitude), 1.0)
    if target == "normal":
        n = np.asarray(value, dtype=float) + rng.normal(0.0, magnitude, 3)
        return n / np.linalg.norm(n)
    # rotation
    noise = _random_rotation(magnitude, rng)
    if isinstance(value, CameraExtrinsics):
        return CameraExtrinsics(noise @ value.rot_world_to_cam, value.position.copy())
    return noise @ np.asarray(value, dtype=float)

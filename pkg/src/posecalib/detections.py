"""2D keypoint detections: skeleton enumeration, poses and per-camera sequences."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# COCO-17 order plus the optional neck / head keypoints some detectors emit.
JOINTS = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "neck",
    "head",
)
JOINT_SET = frozenset(JOINTS)

# Head and arm keypoints move too freely to constrain the bundle adjustment.
BUNDLE_JOINTS = (
    "left_shoulder",
    "right_shoulder",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

# (left bone, right bone) pairs compared by the symmetry term
BONE_PAIRS = (
    (("left_ankle", "left_knee"), ("right_ankle", "right_knee")),
    (("left_knee", "left_hip"), ("right_knee", "right_hip")),
    (("left_hip", "left_shoulder"), ("right_hip", "right_shoulder")),
)

# ankle -> shoulder chains whose length should add up to the person height
HEIGHT_CHAINS = (
    ("left_ankle", "left_knee", "left_hip", "left_shoulder"),
    ("right_ankle", "right_knee", "right_hip", "right_shoulder"),
)


@dataclass(frozen=True)
class PoseDetection:
    """One person in one frame: joint name -> (x, y, confidence)."""

    person_id: int
    joints: dict

    def __post_init__(self):
        for name, value in self.joints.items():
            if name not in JOINT_SET:
                raise ValueError(f"unknown joint {name!r}")
            if len(value) != 3:
                raise ValueError(f"joint {name!r} must be (x, y, confidence)")
            if not 0.0 <= value[2] <= 1.0:
                raise ValueError(f"confidence of {name!r} outside [0, 1]")

    def point(self, name: str) -> np.ndarray:
        x, y, _ = self.joints[name]
        return np.array([x, y], dtype=float)

    def confidence(self, name: str) -> float:
        return float(self.joints[name][2])

    def has(self, *names: str) -> bool:
        return all(n in self.joints for n in names)

    def mean_point(self, left: str, right: str) -> np.ndarray | None:
        """Mean of a left/right joint pair, or the single one present."""
        pts = [self.point(n) for n in (left, right) if n in self.joints]
        if not pts:
            return None
        return np.mean(pts, axis=0)

    @property
    def ankle_center(self):
        return self.mean_point("left_ankle", "right_ankle")

    @property
    def shoulder_center(self):
        return self.mean_point("left_shoulder", "right_shoulder")

    @property
    def mean_confidence(self) -> float:
        if not self.joints:
            return 0.0
        return float(np.mean([v[2] for v in self.joints.values()]))


@dataclass(frozen=True)
class Frame:
    index: int
    poses: tuple = ()


@dataclass
class CameraSequence:
    camera_id: str
    width: float
    height: float
    fps: float
    frames: list = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    @property
    def frame_indices(self) -> np.ndarray:
        return np.array([f.index for f in self.frames], dtype=int)

    def by_index(self) -> dict:
        return {f.index: f for f in self.frames}

    def pose_count(self) -> int:
        return sum(len(f.poses) for f in self.frames)

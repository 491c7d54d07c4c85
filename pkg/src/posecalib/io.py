"""Reading and writing detection files, calibrated rigs and diagnostic curves.

Detection file (JSON)::

    {
      "version": 1,
      "camera_id": "cam0",
      "width": 1920.0, "height": 1080.0, "fps": 25.0,
      "frames": [
        {"frame": 0, "poses": [
          {"person_id": 3, "joints": {"left_ankle": [x, y, confidence], ...}}
        ]}
      ]
    }

Frame indices must be strictly increasing and joint names must come from
:data:`posecalib.detections.JOINTS`.

Solution file (JSON, keys in a fixed order)::

    {
      "version": 1,
      "reference": "cam0",
      "parameters_per_camera": 11,
      "cameras": [
        {"id": "cam0", "K": {"f": .., "o1": .., "o2": ..},
         "R": [9 numbers, row-major world -> camera],
         "T": [3 numbers, metres], "position": [3 numbers, metres],
         "plane": {"normal": [3], "R": [9], "origin": [3]},
         "delta_t": 0}
      ],
      "diagnostics": {...}
    }

The world frame is the reference camera's frame, so the reference block has
``R = I``, ``T = 0`` and ``delta_t = 0``.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .detections import JOINT_SET, JOINTS, CameraSequence, Frame, PoseDetection
from .errors import EmptySequence, IoError, ParseError, SchemaError
from .geometry import CameraExtrinsics, CameraIntrinsics, GroundPlaneFrame
from .solution import PARAMETERS_PER_CAMERA, CameraSolution, RigSolution

SCHEMA_VERSION = 1
SOLUTION_VERSION = 1

# detection files load straight into camera sequences
DetectionFile = CameraSequence

COCO_KEYPOINTS = JOINTS[:17]


# --------------------------------------------------------------------------
# detections


def _require(obj, key, kind, where):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_pose(raw, where) -> PoseDetection:
    pid = _require(raw, "person_id", int, where)
    joints_raw = _require(raw, "joints", dict, where)
    joints = {}
    for name, val in joints_raw.items():
        if name not in JOINT_SET:
            raise SchemaError(f"{where}.joints: unknown joint {name!r}")
        if (
            not isinstance(val, list)
            or len(val) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)
        ):
            raise SchemaError(f"{where}.joints.{name}: expected [x, y, confidence]")
        x, y, c = (float(v) for v in val)
        if not (np.isfinite(x) and np.isfinite(y) and 0.0 <= c <= 1.0):
            raise SchemaError(f"{where}.joints.{name}: non-finite coordinate or confidence outside [0, 1]")
        joints[name] = (x, y, c)
    return PoseDetection(pid, joints)


def parse_detections(doc, source: str = "<memory>") -> CameraSequence:
    """Validate an already-decoded detection document."""
    where = source
    version = _require(doc, "version", int, where)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}.version: unsupported version {version}")
    camera_id = _require(doc, "camera_id", str, where)
    width = float(_require(doc, "width", float, where))
    height = float(_require(doc, "height", float, where))
    fps = float(_require(doc, "fps", float, where))
    if width <= 0 or height <= 0:
        raise SchemaError(f"{where}: width and height must be positive")
    if fps <= 0:
        raise SchemaError(f"{where}.fps: must be positive")
    frames_raw = _require(doc, "frames", list, where)
    if not frames_raw:
        raise EmptySequence(f"{where}: no frames")
    frames = []
    last = None
    for i, fr in enumerate(frames_raw):
        fw = f"{where}.frames[{i}]"
        index = _require(fr, "frame", int, fw)
        if last is not None and index <= last:
            raise SchemaError(f"{fw}.frame: index {index} does not increase (previous {last})")
        last = index
        poses_raw = _require(fr, "poses", list, fw)
        poses = tuple(_parse_pose(p, f"{fw}.poses[{j}]") for j, p in enumerate(poses_raw))
        frames.append(Frame(index, poses))
    return CameraSequence(camera_id, width, height, fps, frames)


def load_detections(path) -> CameraSequence:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_detections(doc, str(path))


def detections_to_dict(seq: CameraSequence) -> dict:
    frames = []
    for frame in seq.frames:
        poses = []
        for pose in frame.poses:
            joints = {n: [float(v) for v in pose.joints[n]] for n in JOINTS if n in pose.joints}
            poses.append({"person_id": int(pose.person_id), "joints": joints})
        frames.append({"frame": int(frame.index), "poses": poses})
    return {
        "version": SCHEMA_VERSION,
        "camera_id": seq.camera_id,
        "width": float(seq.width),
        "height": float(seq.height),
        "fps": float(seq.fps),
        "frames": frames,
    }


def dumps_detections(seq: CameraSequence) -> str:
    """Canonical text: fixed key order, joints in skeleton order, one frame per line."""
    doc = detections_to_dict(seq)
    frames = doc.pop("frames")
    head = json.dumps(doc)[:-1]
    body = ",\n".join("  " + json.dumps(f, separators=(",", ":")) for f in frames)
    return f'{head}, "frames": [\n{body}\n]}}\n'


def write_detections(seq: CameraSequence, path) -> None:
    _write_text(path, dumps_detections(seq))


def coco_to_sequence(results, camera_id: str, width: float, height: float, fps: float,
                     min_visibility: float = 0.0) -> CameraSequence:
    """Convert COCO-style keypoint results to a camera sequence.

    ``results`` is a list of ``{"image_id", "keypoints": [x, y, v] * 17,
    "score", optional "track_id"}``. Images are ordered by ``image_id`` and
    numbered from zero; the keypoint ``v`` becomes the joint confidence
    (values above one are divided by two, as COCO ground-truth visibilities
    are 0/1/2). Keypoints with ``v <= min_visibility`` are dropped.
    """
    by_image: dict = {}
    for det in results:
        by_image.setdefault(det["image_id"], []).append(det)
    frames = []
    for index, image_id in enumerate(sorted(by_image)):
        poses = []
        for n, det in enumerate(by_image[image_id]):
            kp = np.asarray(det["keypoints"], dtype=float).reshape(17, 3)
            joints = {}
            for name, (x, y, v) in zip(COCO_KEYPOINTS, kp):
                if v <= min_visibility:
                    continue
                joints[name] = (float(x), float(y), float(min(v / 2.0 if v > 1 else v, 1.0)))
            poses.append(PoseDetection(int(det.get("track_id", n)), joints))
        frames.append(Frame(index, tuple(poses)))
    if not frames:
        raise EmptySequence("no COCO detections")
    return CameraSequence(camera_id, float(width), float(height), float(fps), frames)


# --------------------------------------------------------------------------
# solution


def _flat(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def solution_to_dict(sol: RigSolution) -> dict:
    cams = []
    for cam in sol.cameras:
        ext = cam.extrinsics
        cams.append(
            {
                "id": cam.camera_id,
                "K": {"f": float(cam.intrinsics.f), "o1": float(cam.intrinsics.o1), "o2": float(cam.intrinsics.o2)},
                "R": _flat(ext.rot_world_to_cam),
                "T": _flat(ext.translation),
                "position": _flat(ext.position),
                "plane": {
                    "normal": _flat(cam.plane.normal),
                    "R": _flat(cam.plane.rot_cam_to_plane),
                    "origin": _flat(cam.plane.t_plane),
                },
                "delta_t": int(cam.delta_t),
            }
        )
    return {
        "version": SOLUTION_VERSION,
        "reference": sol.reference,
        "parameters_per_camera": PARAMETERS_PER_CAMERA,
        "cameras": cams,
        "diagnostics": sol.diagnostics,
    }


def solution_from_dict(doc: dict) -> RigSolution:
    try:
        if doc["version"] != SOLUTION_VERSION:
            raise SchemaError(f"unsupported solution version {doc['version']}")
        cams = []
        for c in doc["cameras"]:
            k = c["K"]
            plane = c["plane"]
            cams.append(
                CameraSolution(
                    camera_id=c["id"],
                    intrinsics=CameraIntrinsics(k["f"], k["o1"], k["o2"]),
                    extrinsics=CameraExtrinsics(np.array(c["R"]).reshape(3, 3), np.array(c["position"], dtype=float)),
                    plane=GroundPlaneFrame(
                        np.array(plane["normal"], dtype=float),
                        np.array(plane["R"], dtype=float).reshape(3, 3),
                        np.array(plane["origin"], dtype=float),
                    ),
                    delta_t=int(c["delta_t"]),
                )
            )
        return RigSolution(doc["reference"], cams, doc.get("diagnostics", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed solution: {exc!r}") from exc


def dumps_solution(sol: RigSolution) -> str:
    return json.dumps(solution_to_dict(sol), indent=2) + "\n"


def write_solution(sol: RigSolution, path) -> None:
    _write_text(path, dumps_solution(sol))


def read_solution(path) -> RigSolution:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return solution_from_dict(doc)


# --------------------------------------------------------------------------
# curves


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def write_curves(sol: RigSolution, directory) -> list:
    """One CSV per diagnostic curve; returns the written paths.

    ``sync_<cam>.csv`` (offset, cost), ``rotation_<cam>.csv`` (angle_deg, cost),
    ``icp_<cam>.csv`` (iteration, rms) and ``bundle_loss.csv`` (iteration, loss).
    """
    directory = Path(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise IoError(f"{directory}: {exc}") from exc
    diag = sol.diagnostics
    written = []
    for cam_id, curve in diag.get("sync", {}).items():
        p = directory / f"sync_{cam_id}.csv"
        write_csv(p, ("offset", "cost"), zip(curve["offsets"], curve["costs"]))
        written.append(p)
    for cam_id, curve in diag.get("rotation", {}).items():
        p = directory / f"rotation_{cam_id}.csv"
        write_csv(p, ("angle_deg", "cost"), zip(curve["angles_deg"], curve["costs"]))
        written.append(p)
    for cam_id, hist in diag.get("icp", {}).items():
        p = directory / f"icp_{cam_id}.csv"
        write_csv(p, ("iteration", "rms"), enumerate(hist))
        written.append(p)
    if "bundle" in diag:
        p = directory / "bundle_loss.csv"
        write_csv(p, ("iteration", "loss"), enumerate(diag["bundle"]["loss_history"]))
        written.append(p)
    return written

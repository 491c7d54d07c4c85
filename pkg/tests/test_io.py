import json

import numpy as np
import pytest

from posecalib.detections import CameraSequence, Frame, PoseDetection
from posecalib.errors import EmptySequence, IoError, ParseError, SchemaError
from posecalib.geometry import CameraExtrinsics, CameraIntrinsics, plane_basis_from_normal, rodrigues
from posecalib.io import (
    coco_to_sequence,
    dumps_detections,
    dumps_solution,
    load_detections,
    parse_detections,
    read_solution,
    write_curves,
    write_detections,
    write_solution,
)
from posecalib.solution import CameraSolution, RigSolution

from conftest import cached_rig


def minimal_doc():
    return {
        "version": 1,
        "camera_id": "c0",
        "width": 1920,
        "height": 1080,
        "fps": 25,
        "frames": [
            {"frame": 0, "poses": [{"person_id": 1, "joints": {"left_ankle": [10, 20, 0.9]}}]},
            {"frame": 2, "poses": []},
        ],
    }


def test_minimal_file_parses():
    seq = parse_detections(minimal_doc())
    assert seq.camera_id == "c0" and seq.width == 1920.0
    assert [f.index for f in seq.frames] == [0, 2]
    assert seq.frames[0].poses[0].joints["left_ankle"] == (10.0, 20.0, 0.9)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["frames"].reverse(),
        lambda d: d.pop("fps"),
        lambda d: d.update(version=2),
        lambda d: d.update(width=-1),
        lambda d: d["frames"][0]["poses"][0]["joints"].update(tail=[0, 0, 1]),
        lambda d: d["frames"][0]["poses"][0]["joints"].update(nose=[0, 0, 1.5]),
        lambda d: d["frames"][0]["poses"][0]["joints"].update(nose=[0, 0]),
        lambda d: d["frames"][0]["poses"][0].update(person_id="a"),
    ],
)
def test_schema_violations(mutate):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(SchemaError):
        parse_detections(doc)


def test_empty_frames():
    doc = minimal_doc()
    doc["frames"] = []
    with pytest.raises(EmptySequence):
        parse_detections(doc)


def test_bad_json_and_missing_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_detections(p)
    with pytest.raises(IoError):
        load_detections(tmp_path / "missing.json")


def test_detection_round_trip_is_byte_stable(tmp_path):
    seq = cached_rig().sequences[1]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_detections(seq, a)
    loaded = load_detections(a)
    write_detections(loaded, b)
    assert a.read_bytes() == b.read_bytes()
    assert loaded == seq
    json.loads(a.read_text())


def test_coco_conversion():
    kp = [0.0] * 51
    kp[15 * 3: 15 * 3 + 3] = [100.0, 200.0, 2.0]  # left ankle, visible
    kp[0:3] = [5.0, 6.0, 0.0]  # nose, not labelled
    seq = coco_to_sequence([{"image_id": 7, "keypoints": kp, "score": 1.0, "track_id": 4}], "cam", 640, 480, 30)
    pose = seq.frames[0].poses[0]
    assert pose.person_id == 4 and seq.frames[0].index == 0
    assert pose.joints == {"left_ankle": (100.0, 200.0, 1.0)}


def _solution():
    k = CameraIntrinsics(1000.0, 960.0, 540.0)
    plane = plane_basis_from_normal(np.array([0.0, -0.8, -0.6]), k, 4.0)
    cams = [
        CameraSolution("a", k, CameraExtrinsics.identity(), plane, 0),
        CameraSolution("b", k, CameraExtrinsics(rodrigues([0.1, 0.5, -0.2]), np.array([3.0, 0.1, 2.0])), plane, 12),
    ]
    diag = {
        "sync": {"b": {"offsets": [0, 1, 2], "costs": [0.5, 0.1, 0.3]}},
        "rotation": {"b": {"angles_deg": [0.0, 90.0], "costs": [2.0, 1.0]}},
        "icp": {"b": [0.3, 0.2, 0.2]},
        "bundle": {"loss_history": [1.0, 0.5]},
    }
    return RigSolution("a", cams, diag)


def test_solution_round_trip(tmp_path):
    sol = _solution()
    p = tmp_path / "sol.json"
    write_solution(sol, p)
    back = read_solution(p)
    assert dumps_solution(back) == p.read_text()
    np.testing.assert_array_equal(back.camera("b").extrinsics.rot_world_to_cam, sol.camera("b").extrinsics.rot_world_to_cam)
    assert back.camera("b").delta_t == 12


def test_malformed_solution(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"version": 1, "cameras": [{"id": "x"}]}))
    with pytest.raises(SchemaError):
        read_solution(p)


def test_curve_files(tmp_path):
    paths = write_curves(_solution(), tmp_path / "curves")
    names = sorted(p.name for p in paths)
    assert names == ["bundle_loss.csv", "icp_b.csv", "rotation_b.csv", "sync_b.csv"]
    rows = (tmp_path / "curves" / "sync_b.csv").read_text().splitlines()
    assert rows[0] == "offset,cost" and len(rows) == 4
    assert len((tmp_path / "curves" / "icp_b.csv").read_text().splitlines()) == 4


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        write_curves(_solution(), blocker / "sub")

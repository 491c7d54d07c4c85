"""Error metrics shared by the simulations, tests and experiment scripts."""
from __future__ import annotations

import numpy as np

from ..errors import MismatchedRigs
from ..geometry import CameraExtrinsics, angle_between, rotation_angle


def metric_focal_pct(pred: float, gt: float) -> float:
    return 100.0 * abs(float(pred) - float(gt)) / float(gt)


def metric_normal_deg(pred, gt) -> float:
    return float(np.degrees(angle_between(pred, gt)))


def metric_rho_pct(pred_height: float, gt_height: float) -> float:
    """Relative error of the camera-to-ground distance."""
    return 100.0 * abs(float(pred_height) - float(gt_height)) / float(gt_height)


def metric_x_pct(pred_pts, gt_pts) -> float:
    """Mean relative 3D point error ``|p - g| / |g|`` in percent."""
    pred = np.asarray(pred_pts, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt_pts, dtype=float).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError("point sets differ in shape")
    return float(100.0 * np.mean(np.linalg.norm(pred - gt, axis=1) / np.linalg.norm(gt, axis=1)))


def _relative(rig, ref):
    base = rig[ref]
    out = []
    for i, cam in enumerate(rig):
        if i == ref:
            continue
        rot = cam.rot_world_to_cam @ base.rot_world_to_cam.T
        t = cam.rot_world_to_cam @ (base.position - cam.position)
        out.append((rot, t))
    return out


def _check(pred_rig, gt_rig):
    if len(pred_rig) != len(gt_rig):
        raise MismatchedRigs(f"{len(pred_rig)} predicted cameras vs {len(gt_rig)} ground truth")
    if len(pred_rig) < 2:
        raise MismatchedRigs("relative pose needs at least two cameras")
    for cam in list(pred_rig) + list(gt_rig):
        if not isinstance(cam, CameraExtrinsics):
            raise MismatchedRigs("rig entries must be CameraExtrinsics")


def metric_relpose(pred_rig, gt_rig, ref: int = 0) -> tuple:
    """Mean rotation-angle and translation-norm differences of relative poses.

    For each non-reference camera the transform from the reference camera is
    computed in both rigs; the errors are ``|angle(R_pred) - angle(R_gt)|`` in
    degrees and ``| |t_pred| - |t_gt| |`` in metres.
    """
    _check(pred_rig, gt_rig)
    rot_err, trans_err = [], []
    for (rp, tp), (rg, tg) in zip(_relative(pred_rig, ref), _relative(gt_rig, ref)):
        rot_err.append(abs(np.degrees(rotation_angle(rp) - rotation_angle(rg))))
        trans_err.append(abs(np.linalg.norm(tp) - np.linalg.norm(tg)))
    return float(np.mean(rot_err)), float(np.mean(trans_err))


def relpose_errors(pred_rig, gt_rig, ref: int = 0) -> tuple:
    """Per-camera geodesic rotation error (degrees) and translation vector error (metres).

    Stricter than :func:`metric_relpose`: a wrong rotation axis or
    translation direction is also penalised.
    """
    _check(pred_rig, gt_rig)
    rot_err, trans_err = [], []
    for (rp, tp), (rg, tg) in zip(_relative(pred_rig, ref), _relative(gt_rig, ref)):
        rot_err.append(np.degrees(rotation_angle(rp @ rg.T)))
        trans_err.append(np.linalg.norm(tp - tg))
    return np.array(rot_err), np.array(trans_err)


def metric_nmpjpe(pred_poses, gt_poses) -> float:
    """Mean per-joint position error after the optimal per-pose scale.

    Inputs are ``(J, 3)`` or ``(N, J, 3)``; each predicted pose is scaled by
    ``s = <pred, gt> / <pred, pred>`` before the joint distances are averaged.
    """
    pred = np.asarray(pred_poses, dtype=float)
    gt = np.asarray(gt_poses, dtype=float)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ValueError("pose arrays must share a (..., J, 3) shape")
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    num = np.einsum("nij,nij->n", pred, gt)
    den = np.einsum("nij,nij->n", pred, pred)
    scale = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    err = np.linalg.norm(scale[:, None, None] * pred - gt, axis=-1)
    return float(err.mean())

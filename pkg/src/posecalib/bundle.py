"""Joint refinement of all cameras from matched body keypoints.

For every matched pose pair seen by two cameras, each keypoint defines one
viewing ray per camera. The loss combines the distance between the closest
points of those rays with anthropometric priors (left/right bone symmetry,
ankle-to-shoulder height, ankles on the ground plane) and is minimised by
gradient descent with backtracking. Gradients come from JAX autodiff.

The world frame is the reference camera's ground plane: ``z`` is up and the
ground is ``z = 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import jax
import jax.numpy as jnp
import numpy as np

from .detections import BUNDLE_JOINTS
from .errors import NoSharedObservations
from .geometry import CameraExtrinsics, CameraIntrinsics, nearest_rotation, rodrigues

jax.config.update("jax_enable_x64", True)

log = logging.getLogger(__name__)

PARALLEL_EPS = 1e-12

_J = {name: i for i, name in enumerate(BUNDLE_JOINTS)}
_BONES = np.array(
    [
        [_J["left_ankle"], _J["left_knee"], _J["right_ankle"], _J["right_knee"]],
        [_J["left_knee"], _J["left_hip"], _J["right_knee"], _J["right_hip"]],
        [_J["left_hip"], _J["left_shoulder"], _J["right_hip"], _J["right_shoulder"]],
    ]
)
_CHAINS = np.array(
    [
        [_J["left_ankle"], _J["left_knee"], _J["left_hip"], _J["left_shoulder"]],
        [_J["right_ankle"], _J["right_knee"], _J["right_hip"], _J["right_shoulder"]],
    ]
)
_ANKLES = np.array([_J["left_ankle"], _J["right_ankle"]])


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def at(self, k):
        return self.origin + np.asarray(k, dtype=float)[..., None] * self.direction


def build_ray(pixel, intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics) -> Ray:
    """World-frame viewing ray through ``pixel`` starting at the camera centre."""
    pixel = np.asarray(pixel, dtype=float)
    cam_dir = np.array([(pixel[0] - intrinsics.o1) / intrinsics.f, (pixel[1] - intrinsics.o2) / intrinsics.f, 1.0])
    return Ray(np.asarray(extrinsics.position, dtype=float), extrinsics.rot_world_to_cam.T @ cam_dir)


def closest_points(r1: Ray, r2: Ray):
    """Mutually closest points of two lines.

    Returns ``(p1, p2, distance, parallel)``. For (near) parallel rays the
    points at parameter 1 are returned and ``parallel`` is set.
    """
    d1, d2 = r1.direction, r2.direction
    w0 = r1.origin - r2.origin
    a, b, c = d1 @ d1, d1 @ d2, d2 @ d2
    d, e = d1 @ w0, d2 @ w0
    denom = a * c - b * b
    if denom <= PARALLEL_EPS * a * c:
        p1, p2 = r1.at(1.0), r2.at(1.0)
        return p1, p2, float(np.linalg.norm(p1 - p2)), True
    s = (b * e - c * d) / denom
    t = (a * e - b * d) / denom
    p1, p2 = r1.at(s), r2.at(t)
    return p1, p2, float(np.linalg.norm(p1 - p2)), False


# --------------------------------------------------------------------------
# problem definition


@dataclass
class BundleCamera:
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics


@dataclass
class PoseMatch:
    """The same person in the same instant seen by cameras ``cam_a`` and ``cam_b``.

    ``pix_*`` are ``(J, 2)`` arrays over :data:`BUNDLE_JOINTS`; ``valid``
    marks joints detected in both views.
    """

    frame: int
    person_id: int
    cam_a: int
    cam_b: int
    pix_a: np.ndarray
    pix_b: np.ndarray
    valid: np.ndarray
    confidence: float


@dataclass
class BundleProblem:
    cameras: list
    observations: list
    weights: tuple = (1.0, 0.1, 0.0, 0.1)
    k_top: int | None = None
    h: float = 1.7
    fixed: tuple = (0,)
    # "camera": fixed cameras are frozen entirely. "plane": fixed cameras keep
    # only their in-plane position and heading, which is the true gauge of a
    # metric rig standing on z = 0; height, tilt and roll stay free.
    gauge: str = "camera"

    def __post_init__(self):
        if self.gauge not in ("camera", "plane"):
            raise ValueError("gauge must be 'camera' or 'plane'")
        if any(w < 0 for w in self.weights):
            raise ValueError("loss weights must be non-negative")
        for obs in self.observations:
            if not (0 <= obs.cam_a < len(self.cameras) and 0 <= obs.cam_b < len(self.cameras)):
                raise ValueError("observation references a missing camera")


@dataclass
class BundleConfig:
    lr: float = 1e-2
    max_iter: int = 500
    optimize_intrinsics: bool = False
    # discrete re-check of the frame offsets; carried out by the pipeline
    optimize_dt: bool = False
    halvings: int = 20
    tol: float = 1e-14


@dataclass
class BundleResult:
    cameras: list
    loss_history: list
    triangulated_points: np.ndarray
    terms: dict = field(default_factory=dict)
    # trial steps rejected by the backtracking search for exceeding 10x the
    # initial loss; accepted iterates always decrease the loss
    overshoots: int = 0
    iterations: int = 0


def select_top_k(observations, k: int | None) -> list:
    """Keep the ``k`` most confident matches (ties broken by frame, person)."""
    if k is None or k >= len(observations):
        return list(observations)
    if k < 1:
        raise ValueError("k must be at least 1")
    ranked = sorted(observations, key=lambda o: (-o.confidence, o.frame, o.person_id))
    return ranked[:k]


# --------------------------------------------------------------------------
# loss


def _rodrigues(w):
    th2 = w @ w
    small = th2 < 1e-12
    th2s = jnp.where(small, 1.0, th2)
    th = jnp.sqrt(th2s)
    a = jnp.where(small, 1.0 - th2 / 6.0, jnp.sin(th) / th)
    b = jnp.where(small, 0.5 - th2 / 24.0, (1.0 - jnp.cos(th)) / th2s)
    k = jnp.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    return jnp.eye(3) + a * k + b * (k @ k)


def _safe_norm(v):
    sq = jnp.sum(v * v, axis=-1)
    pos = sq > 0
    return jnp.where(pos, jnp.sqrt(jnp.where(pos, sq, 1.0)), 0.0)


def _masked_mean(x, mask):
    n = jnp.sum(mask)
    return jnp.where(n > 0, jnp.sum(jnp.where(mask, x, 0.0)) / jnp.maximum(n, 1), 0.0)


def _bucket(n: int) -> int:
    # observation arrays are padded to a multiple of 64 so that problems of
    # similar size share one compiled loss
    return 64 * max(1, -(-n // 64))


class _Packed:
    """Problem arrays plus the mapping between free parameters and cameras.

    The parameter vector always holds six pose entries per camera (rotation
    vector about world axes, centre offset) followed by one log-focal entry
    per camera; entries that are held fixed are masked out of every step.
    """

    def __init__(self, prob: BundleProblem, optimize_intrinsics: bool):
        obs = prob.observations
        if not obs:
            raise NoSharedObservations("no matched observations between cameras")
        n_cam = len(prob.cameras)
        self.n_cam = n_cam
        r0 = np.stack([c.extrinsics.rot_world_to_cam for c in prob.cameras])
        c0 = np.stack([c.extrinsics.position for c in prob.cameras])
        f0 = np.array([c.intrinsics.f for c in prob.cameras])
        o = np.array([[c.intrinsics.o1, c.intrinsics.o2] for c in prob.cameras])
        valid = np.stack([ob.valid for ob in obs]).astype(bool)
        if not valid.any():
            raise NoSharedObservations("matched poses share no valid joints")
        n_obs, n_pad = len(obs), _bucket(len(obs)) - len(obs)

        def pad(a):
            return np.concatenate([a, np.zeros((n_pad,) + a.shape[1:], a.dtype)])

        cam_a = pad(np.array([ob.cam_a for ob in obs]))
        cam_b = pad(np.array([ob.cam_b for ob in obs]))
        valid = pad(valid)
        pix_a = pad(np.where(valid[:n_obs, :, None], np.stack([ob.pix_a for ob in obs]).astype(float), 0.0))
        pix_b = pad(np.where(valid[:n_obs, :, None], np.stack([ob.pix_b for ob in obs]).astype(float), 0.0))
        self.n_obs = n_obs
        self.valid = valid
        self.weights = np.asarray(prob.weights, dtype=float)

        pose_mask = np.ones((n_cam, 6), dtype=bool)
        for i in set(prob.fixed):
            pose_mask[i] = [True, True, False, False, False, True] if prob.gauge == "plane" else False
        self.mask = np.concatenate([pose_mask.ravel(), np.full(n_cam, optimize_intrinsics)]).astype(float)
        self.size = 7 * n_cam
        self.data = {
            "r0": r0, "c0": c0, "f0": f0, "o": o,
            "cam_a": cam_a, "cam_b": cam_b, "pix_a": pix_a, "pix_b": pix_b, "valid": valid,
            "lr_mask": np.stack([valid[:, b].all(axis=1) for b in _BONES], axis=1),
            "h_mask": np.stack([valid[:, c].all(axis=1) for c in _CHAINS], axis=1),
            "z_mask": np.concatenate([valid[:, _ANKLES], valid[:, _ANKLES]], axis=1),
            "weights": self.weights, "h": np.float64(prob.h),
        }
        self.data["depth"] = self._typical_depth()
        self.data = {k: jnp.asarray(v) for k, v in self.data.items()}

    def _typical_depth(self) -> np.ndarray:
        # Rotation and log-focal parameters are divided by the typical viewing
        # distance so that a unit step moves the scene points about one metre,
        # like a unit step of the camera centre. This evens out the gradient
        # scales, which plain gradient descent is sensitive to.
        d = self.data
        pa, pb, _ = _triangulate(d["r0"], d["c0"], d["f0"], d["o"], d["cam_a"], d["cam_b"], d["pix_a"], d["pix_b"])
        mid = np.asarray(0.5 * (pa + pb))
        depth = np.ones(self.n_cam)
        for c in range(self.n_cam):
            pts = np.concatenate([mid[d["cam_a"] == c][self.valid[d["cam_a"] == c]], mid[d["cam_b"] == c][self.valid[d["cam_b"] == c]]])
            if len(pts):
                dist = float(np.median(np.linalg.norm(pts - d["c0"][c], axis=1)))
                if np.isfinite(dist) and dist > 1e-6:
                    depth[c] = dist
        return depth

    def unpack(self, x):
        return _unpack(x, self.data)

    def terms(self, x):
        return _terms_jit(x, self.data)

    def loss(self, x):
        return _loss_jit(x, self.data)

    def value_and_grad(self, x):
        return _value_and_grad_jit(x, self.data)


def _unpack(x, data):
    n_cam = data["r0"].shape[0]
    pose = x[: 6 * n_cam].reshape(n_cam, 6)
    depth = data["depth"]
    omega, dc = pose[:, :3] / depth[:, None], pose[:, 3:]
    logf = x[6 * n_cam:] / depth
    # camera turned by exp(omega) in the world: R = R0 exp(omega)^T
    rots = data["r0"] @ jnp.swapaxes(jax.vmap(_rodrigues)(omega), 1, 2)
    return rots, data["c0"] + dc, data["f0"] * jnp.exp(logf)


def _terms(x, data):
    rots, centres, focals = _unpack(x, data)
    pts_a, pts_b, dist = _triangulate(rots, centres, focals, data["o"], data["cam_a"], data["cam_b"], data["pix_a"], data["pix_b"])
    mid = 0.5 * (pts_a + pts_b)

    l3d = _masked_mean(dist, data["valid"])

    def bone(i, j):
        return _safe_norm(mid[:, i] - mid[:, j])

    lr_vals = jnp.stack([jnp.abs(bone(b[0], b[1]) - bone(b[2], b[3])) for b in _BONES], axis=1)
    llr = _masked_mean(lr_vals, data["lr_mask"])

    h_vals = jnp.stack(
        [jnp.abs(bone(c[0], c[1]) + bone(c[1], c[2]) + bone(c[2], c[3]) - data["h"]) for c in _CHAINS], axis=1
    )
    lh = _masked_mean(h_vals, data["h_mask"])

    z = jnp.concatenate([pts_a[:, _ANKLES, 2], pts_b[:, _ANKLES, 2]], axis=1)
    lp = _masked_mean(jnp.abs(z), data["z_mask"])
    return jnp.stack([l3d, llr, lh, lp]), mid


def _loss(x, data):
    t, _ = _terms(x, data)
    return jnp.dot(data["weights"], t)


_terms_jit = jax.jit(_terms)
_loss_jit = jax.jit(_loss)
_value_and_grad_jit = jax.jit(jax.value_and_grad(_loss))


def _triangulate(rots, centres, focals, o, cam_a, cam_b, pix_a, pix_b):
    def rays(cam, pix):
        f = focals[cam][:, None]
        cam_dir = jnp.stack(
            [(pix[..., 0] - o[cam, 0][:, None]) / f, (pix[..., 1] - o[cam, 1][:, None]) / f, jnp.ones(pix.shape[:2])],
            axis=-1,
        )
        # world direction = R^T d
        return jnp.einsum("pji,pkj->pki", rots[cam], cam_dir), centres[cam][:, None, :]

    d1, o1 = rays(cam_a, pix_a)
    d2, o2 = rays(cam_b, pix_b)
    w0 = o1 - o2
    a = jnp.sum(d1 * d1, -1)
    b = jnp.sum(d1 * d2, -1)
    c = jnp.sum(d2 * d2, -1)
    d = jnp.sum(d1 * w0, -1)
    e = jnp.sum(d2 * w0, -1)
    denom = a * c - b * b
    parallel = denom <= PARALLEL_EPS * a * c
    safe = jnp.where(parallel, 1.0, denom)
    s = jnp.where(parallel, 1.0, (b * e - c * d) / safe)
    t = jnp.where(parallel, 1.0, (a * e - b * d) / safe)
    p1 = o1 + s[..., None] * d1
    p2 = o2 + t[..., None] * d2
    return p1, p2, _safe_norm(p1 - p2)


def bundle_loss(prob: BundleProblem):
    """Weighted loss at the problem's current cameras and its per-term values."""
    packed = _Packed(prob, optimize_intrinsics=False)
    terms, _ = packed.terms(jnp.zeros(packed.size))
    terms = np.asarray(terms)
    names = ("intersection", "left_right", "height", "plane")
    return float(np.dot(packed.weights, terms)), dict(zip(names, terms.tolist()))


def loss_and_grad_fn(prob: BundleProblem, optimize_intrinsics: bool = False):
    """``loss`` and ``value_and_grad`` callables over the parameter vector.

    The parameters per camera are an axis-angle rotation increment about
    world axes, a camera-centre offset and a log-focal offset. Entries of
    ``packed.mask`` that are zero are held fixed by the optimiser.
    """
    packed = _Packed(prob, optimize_intrinsics)
    return packed.loss, packed.value_and_grad, packed


def _apply(packed: _Packed, x, prob: BundleProblem) -> list:
    rots, centres, focals = packed.unpack(jnp.asarray(x))
    rots, centres, focals = np.asarray(rots), np.asarray(centres), np.asarray(focals)
    out = []
    for i, cam in enumerate(prob.cameras):
        k = replace(cam.intrinsics, f=float(focals[i]))
        out.append(BundleCamera(k, CameraExtrinsics(nearest_rotation(rots[i]), centres[i].copy())))
    return out


def optimize_bundle(prob: BundleProblem, cfg: BundleConfig | None = None) -> BundleResult:
    """Gradient descent with backtracking on the bundle loss.

    Each iteration tries a step along the negative gradient and halves it
    until the loss decreases; when no halving helps the optimum has been
    reached. The first trial step is twice the last accepted one, capped at
    ``lr``, so few halvings are needed once the scale is found. The loss
    history is therefore strictly decreasing.
    """
    cfg = cfg or BundleConfig()
    obs = select_top_k(prob.observations, prob.k_top)
    prob = replace(prob, observations=obs)
    loss_fn, vg_fn, packed = loss_and_grad_fn(prob, cfg.optimize_intrinsics)

    x = jnp.zeros(packed.size)
    mask = jnp.asarray(packed.mask)
    value, grad = vg_fn(x)
    grad = grad * mask
    value = float(value)
    initial = value
    if not np.isfinite(initial):
        raise ValueError("initial bundle loss is not finite")
    history = [value]
    overshoots = 0
    iterations = 0
    last_step = cfg.lr
    if packed.mask.any():
        for iterations in range(1, cfg.max_iter + 1):
            step = min(cfg.lr, 2.0 * last_step)
            accepted = False
            for _ in range(cfg.halvings + 1):
                cand = x - step * grad
                cand_value = float(loss_fn(cand))
                if np.isfinite(cand_value) and cand_value > 10 * initial:
                    overshoots += 1
                if np.isfinite(cand_value) and cand_value < value:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            last_step = step
            improvement = value - cand_value
            x = cand
            value, grad = vg_fn(x)
            grad = grad * mask
            value = float(value)
            history.append(value)
            if improvement < cfg.tol:
                break
    if overshoots:
        log.debug("backtracking rejected %d trial steps above 10x the initial loss", overshoots)

    terms, mid = packed.terms(x)
    n = packed.n_obs
    mid = np.where(packed.valid[:n, :, None], np.asarray(mid)[:n], np.nan)
    names = ("intersection", "left_right", "height", "plane")
    return BundleResult(
        cameras=_apply(packed, x, prob),
        loss_history=history,
        triangulated_points=mid,
        terms=dict(zip(names, np.asarray(terms).tolist())),
        overshoots=overshoots,
        iterations=iterations,
    )


def perturb_camera(cam: BundleCamera, angle_deg: float, offset_m: float, rng) -> BundleCamera:
    """Rotate a camera by ``angle_deg`` about a random axis and shift it by ``offset_m``."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    rot = rodrigues(np.deg2rad(angle_deg) * axis) @ cam.extrinsics.rot_world_to_cam
    return BundleCamera(cam.intrinsics, CameraExtrinsics(rot, cam.extrinsics.position + offset_m * direction))

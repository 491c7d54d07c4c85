"""Monte-Carlo trials of the single-view solver on random scenes.

Every trial draws a fresh scene, perturbs the ankle and shoulder pixels, and
solves the DLT on all pairs at once. Trials whose system is unsolvable count
towards ``fail_pct`` and are left out of the error means.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ..errors import CalibrationError
from ..geometry import pixel_rays
from ..single_view import calibrate_pairs
from .metrics import metric_focal_pct, metric_normal_deg, metric_rho_pct, metric_x_pct
from .scene import SceneConfig, generate_scene


@dataclass
class TrialReport:
    value: float
    fx_pct: float
    fy_pct: float
    normal_deg: float
    rho_pct: float
    x_pct: float
    fail_pct: float
    trials: int


@dataclass
class TrialConfig:
    trials: int = 5000
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)


def trial_rng(seed: int, grid_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, grid_index, trial]))


def solve_trial(scene_cfg: SceneConfig, pixel_std: float, solver_h: float, rng) -> dict | None:
    """One trial; ``None`` when the noisy system is unsolvable."""
    sc = generate_scene(scene_cfg, rng=rng)
    ankles = sc.ankle_px + rng.normal(0.0, pixel_std, sc.ankle_px.shape) if pixel_std > 0 else sc.ankle_px
    shoulders = sc.shoulder_px + rng.normal(0.0, pixel_std, sc.shoulder_px.shape) if pixel_std > 0 else sc.shoulder_px
    try:
        k, normal, depths, plane = calibrate_pairs(ankles, shoulders, sc.principal_point, solver_h)
    except CalibrationError:
        return None
    a3 = pixel_rays(ankles, k) * depths[:, None]
    s3 = a3 + solver_h * normal
    cfg = sc.config
    return {
        "fx_pct": metric_focal_pct(k.f, cfg.fx),
        "fy_pct": metric_focal_pct(k.f, cfg.fy),
        "normal_deg": metric_normal_deg(normal, sc.normal),
        "rho_pct": metric_rho_pct(plane.camera_height, sc.camera_height),
        "x_pct": metric_x_pct(np.vstack([a3, s3]), np.vstack([sc.ankles_cam, sc.shoulders_cam])),
    }


def _aggregate(value, results, trials) -> TrialReport:
    ok = [r for r in results if r is not None]
    fail = 100.0 * (trials - len(ok)) / trials
    means = {k: float(np.mean([r[k] for r in ok])) if ok else float("nan") for k in ("fx_pct", "fy_pct", "normal_deg", "rho_pct", "x_pct")}
    return TrialReport(value=float(value), fail_pct=fail, trials=trials, **means)


def run_grid(values, make_scene, pixel_std, solver_h, cfg: TrialConfig) -> list:
    """Generic grid runner; ``make_scene(value)`` / ``pixel_std(value)`` / ``solver_h(value)`` per point."""
    reports = []
    for g, value in enumerate(values):
        scene_cfg = make_scene(value)
        std = pixel_std(value)
        h = solver_h(value)
        results = [solve_trial(scene_cfg, std, h, trial_rng(cfg.seed, g, t)) for t in range(cfg.trials)]
        reports.append(_aggregate(value, results, cfg.trials))
    return reports


MEASUREMENT_STDS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0)
HEIGHT_STDS = (0.05, 0.1, 0.15, 0.2, 0.25)
PEOPLE_COUNTS = (5, 10, 20, 50, 100)


def run_measurement_noise_trials(stds=MEASUREMENT_STDS, cfg: TrialConfig | None = None, height: float = 1.6, n_people: int = 3) -> list:
    """Pixel noise sweep with a fixed person height known to the solver."""
    cfg = cfg or TrialConfig()
    scene = replace(cfg.scene, n_people=n_people, height_mean=height, height_std=0.0)
    return run_grid(stds, lambda v: scene, lambda v: v, lambda v: height, cfg)


def run_height_trials(stds=HEIGHT_STDS, cfg: TrialConfig | None = None, height: float = 1.7, n_people: int = 3,
                      pixel_std: float = 0.5) -> list:
    """Person heights drawn around ``height``; the solver assumes ``height``."""
    cfg = cfg or TrialConfig()
    return run_grid(
        stds,
        lambda v: replace(cfg.scene, n_people=n_people, height_mean=height, height_std=v),
        lambda v: pixel_std,
        lambda v: height,
        cfg,
    )


def run_people_trials(counts=PEOPLE_COUNTS, cfg: TrialConfig | None = None, height: float = 1.7,
                      height_std: float = 0.1, pixel_std: float = 0.5) -> list:
    cfg = cfg or TrialConfig()
    return run_grid(
        counts,
        lambda v: replace(cfg.scene, n_people=int(v), height_mean=height, height_std=height_std),
        lambda v: pixel_std,
        lambda v: height,
        cfg,
    )


def write_reports_csv(reports, path) -> None:
    names = [f.name for f in fields(TrialReport)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for r in reports:
            row = asdict(r)
            writer.writerow([repr(row[n]) if isinstance(row[n], float) else row[n] for n in names])

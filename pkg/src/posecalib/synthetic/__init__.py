"""Synthetic scenes, rigs, noise models and metrics."""
from .metrics import metric_focal_pct, metric_nmpjpe, metric_normal_deg, metric_relpose, metric_rho_pct, metric_x_pct, relpose_errors
from .noise import inject_noise
from .rig import RigConfig, SyntheticRig, generate_rig
from .scene import SceneConfig, SyntheticScene, generate_scene
from .trials import TrialConfig, TrialReport, run_height_trials, run_measurement_noise_trials, run_people_trials

__all__ = [
    "RigConfig", "SceneConfig", "SyntheticRig", "SyntheticScene", "TrialConfig", "TrialReport",
    "generate_rig", "generate_scene", "inject_noise", "metric_focal_pct", "metric_nmpjpe",
    "metric_normal_deg", "metric_relpose", "metric_rho_pct", "metric_x_pct", "relpose_errors",
    "run_height_trials", "run_measurement_noise_trials", "run_people_trials",
]

"""Calibration and time synchronisation of a camera rig from 2D human pose detections."""
from .errors import CalibrationError
from .io import load_detections, read_solution, write_curves, write_detections, write_solution
from .pipeline import PipelineConfig, run_pipeline
from .single_view import SingleViewConfig, ransac_calibrate
from .solution import CameraSolution, RigSolution

__all__ = [
    "CalibrationError", "CameraSolution", "PipelineConfig", "RigSolution", "SingleViewConfig",
    "load_detections", "ransac_calibrate", "read_solution", "run_pipeline", "write_curves",
    "write_detections", "write_solution",
]

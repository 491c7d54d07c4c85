"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 calibration failure, 4 internal
invariant violation.

Options are resolved in three layers: built-in defaults, then flags given on
the command line, then the JSON file passed with ``--config`` (whose keys are
the long option names with dashes or underscores).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .errors import (
    CalibrationError,
    EmptySequence,
    InvariantViolation,
    IoError,
    ParseError,
    SchemaError,
    StageError,
)
from .io import load_detections, write_csv, write_curves, write_detections, write_solution, dumps_solution
from .pipeline import PipelineConfig, ground_points, run_pipeline, search_ground_offset
from .single_view import SingleViewConfig, ransac_calibrate

log = logging.getLogger("posecalib")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CALIBRATION = 3
EXIT_INVARIANT = 4

_INPUT_ERRORS = (ParseError, SchemaError, EmptySequence, IoError)


class InputError(Exception):
    """Bad command-line or config-file input."""


# (name, type, default, help)
_SINGLE_VIEW_OPTIONS = [
    ("height", float, 1.7, "ankle-to-shoulder height of the people in metres"),
    ("iterations", int, 1000, "RANSAC hypotheses"),
    ("angle-thresh", float, 2.86, "RANSAC angle threshold in degrees"),
    ("pixel-thresh", float, 0.05, "RANSAC shoulder error threshold, fraction of person pixel height"),
    ("standing-thresh", float, 0.6, "standing filter threshold"),
    ("seed", int, 0, "random seed"),
    ("centre-passes", int, 3, "passes re-deriving joint centres from the 3D fit (0: plain 2D midpoints)"),
]
_PIPELINE_OPTIONS = [
    ("reference", str, None, "reference camera id (default: first file)"),
    ("max-offset", int, None, "largest frame offset searched (default: a third of the sequence)"),
    ("sync-centre", str, "overlap", "centroid for the offset search: overlap or sequence"),
    ("rotation-step", float, 1.0, "rotation search step in degrees"),
    ("dbscan-eps", float, 0.5, "DBSCAN radius on the ground plane in metres"),
    ("dbscan-min-pts", int, 5, "DBSCAN core point count"),
    ("no-bundle", bool, False, "skip the joint bundle refinement"),
    ("bundle-iters", int, 1000, "bundle refinement iterations"),
    ("bundle-lr", float, 0.05, "largest bundle step"),
    ("k-top", int, 800, "most confident matched poses used by the bundle"),
    ("optimize-intrinsics", bool, False, "refine focal lengths in the bundle"),
    ("optimize-dt", bool, False, "re-check frame offsets with the bundle loss"),
]


def _dest(name: str) -> str:
    return name.replace("-", "_")


def _add_options(parser, table) -> None:
    for name, kind, default, text in table:
        if kind is bool:
            parser.add_argument(f"--{name}", action="store_true", default=None, help=text)
        else:
            shown = "" if default is None else f" (default {default})"
            parser.add_argument(f"--{name}", type=kind, default=None, help=text + shown)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return {_dest(k): v for k, v in doc.items()}


def resolve_options(args, table) -> dict:
    """Defaults, overridden by explicit flags, overridden by the config file."""
    opts = {_dest(name): default for name, _, default, _ in table}
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    config = _load_config(getattr(args, "config", None))
    types = {_dest(name): kind for name, kind, _, _ in table}
    for key, value in config.items():
        if key not in types:
            raise InputError(f"unknown config key {key!r}")
        kind = types[key]
        if value is not None and not (kind is float and isinstance(value, int)) and not isinstance(value, kind):
            raise InputError(f"config key {key!r} must be {kind.__name__}")
        opts[key] = float(value) if kind is float and value is not None else value
    return opts


def single_view_config(opts: dict) -> SingleViewConfig:
    return SingleViewConfig(
        h=opts["height"],
        iterations=opts["iterations"],
        angle_thresh=float(np.deg2rad(opts["angle_thresh"])),
        pixel_thresh=opts["pixel_thresh"],
        standing_thresh=opts["standing_thresh"],
        seed=opts["seed"],
        centre_passes=opts["centre_passes"],
    )


def pipeline_config(opts: dict) -> PipelineConfig:
    if opts["sync_centre"] not in ("overlap", "sequence"):
        raise InputError(f"sync-centre must be 'overlap' or 'sequence', got {opts['sync_centre']!r}")
    base = PipelineConfig()
    return replace(
        base,
        single_view=single_view_config(opts),
        reference=opts["reference"],
        max_offset=opts["max_offset"],
        sync_centre=opts["sync_centre"],
        rotation_step=opts["rotation_step"],
        dbscan_eps=opts["dbscan_eps"],
        dbscan_min_pts=opts["dbscan_min_pts"],
        run_bundle=not opts["no_bundle"],
        bundle=replace(
            base.bundle,
            lr=opts["bundle_lr"],
            max_iter=opts["bundle_iters"],
            optimize_intrinsics=opts["optimize_intrinsics"],
            optimize_dt=opts["optimize_dt"],
        ),
        k_top=opts["k_top"],
    )


def _emit(doc, out) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise IoError(f"{out}: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_calibrate(args) -> int:
    opts = resolve_options(args, _SINGLE_VIEW_OPTIONS + _PIPELINE_OPTIONS)
    cfg = pipeline_config(opts)
    if len(args.detections) < 2:
        raise InputError(">= 2 cameras required")
    seqs = [load_detections(p) for p in args.detections]
    if len(seqs) == 2 and cfg.run_bundle:
        log.warning("two views constrain the bundle refinement weakly; consider --no-bundle")
    sol = run_pipeline(seqs, cfg)
    if args.out is None:
        sys.stdout.write(dumps_solution(sol))
    else:
        write_solution(sol, args.out)
    if args.curves is not None:
        write_curves(sol, args.curves)
    return EXIT_OK


def cmd_single_view(args) -> int:
    opts = resolve_options(args, _SINGLE_VIEW_OPTIONS)
    seq = load_detections(args.detections)
    sol = ransac_calibrate(seq, single_view_config(opts))
    k, plane = sol.intrinsics, sol.plane
    _emit(
        {
            "camera_id": seq.camera_id,
            "K": {"f": k.f, "o1": k.o1, "o2": k.o2},
            "normal": plane.normal.tolist(),
            "camera_height": float(-plane.normal @ plane.t_plane),
            "inliers": sol.inlier_count,
            "diagnostics": sol.diagnostics,
        },
        args.out,
    )
    return EXIT_OK


def cmd_sync(args) -> int:
    opts = resolve_options(args, _SINGLE_VIEW_OPTIONS + _PIPELINE_OPTIONS)
    cfg = pipeline_config(opts)
    ref, other = load_detections(args.reference_file), load_detections(args.other_file)
    grounds = []
    for seq in (ref, other):
        single = ransac_calibrate(seq, cfg.single_view)
        grounds.append(ground_points(seq, single, cfg.dbscan_eps, cfg.dbscan_min_pts))
    res = search_ground_offset(grounds[0], grounds[1], cfg)
    _emit({"reference": ref.camera_id, "camera": other.camera_id, "delta_t": res.delta_t, "cost": res.score}, args.out)
    if args.curve is not None:
        write_csv(args.curve, ("offset", "cost"), zip(res.offsets.tolist(), res.per_offset_costs.tolist()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .synthetic import RigConfig, TrialConfig, generate_rig
    from .synthetic.trials import run_height_trials, run_measurement_noise_trials, run_people_trials, write_reports_csv

    if args.study == "rig":
        if args.out is None:
            raise InputError("simulate rig needs --out DIR")
        rig = generate_rig(RigConfig(n_cameras=args.cameras, seed=args.seed, detection_noise=args.noise, n_frames=args.frames))
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoError(f"{out}: {exc}") from exc
        truth = {"delta_t": rig.delta_t, "cameras": []}
        for seq, k, ext in zip(rig.sequences, rig.intrinsics, rig.extrinsics):
            write_detections(seq, out / f"{seq.camera_id}.json")
            truth["cameras"].append(
                {"id": seq.camera_id, "f": k.f, "R": ext.rot_world_to_cam.ravel().tolist(), "position": ext.position.tolist()}
            )
        _emit(truth, out / "truth.json")
        return EXIT_OK

    cfg = TrialConfig(trials=args.trials, seed=args.seed)
    runner = {"measurement": run_measurement_noise_trials, "height": run_height_trials, "people": run_people_trials}[args.study]
    reports = runner(cfg=cfg)
    if args.out is None:
        for r in reports:
            sys.stdout.write(json.dumps(asdict(r)) + "\n")
    else:
        write_reports_csv(reports, args.out)
    return EXIT_OK


def cmd_noise_study(args) -> int:
    from .synthetic import propagation as prop

    cfg = prop.PropagationConfig(runs=args.runs, seed=args.seed)
    runner = {
        "detections": prop.run_detection_noise_study,
        "focal": prop.run_focal_noise_study,
        "normal": prop.run_normal_noise_study,
        "sync": prop.run_sync_noise_study,
        "rotation": prop.run_rotation_noise_study,
    }[args.target]
    reports = runner(cfg=cfg) if args.levels is None else runner(args.levels, cfg=cfg)
    if args.out is None:
        for r in reports:
            sys.stdout.write(json.dumps(asdict(r)) + "\n")
    else:
        prop.write_study_csv(reports, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posecalib", description="Camera rig calibration from 2D pose detections.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="full pipeline on one detection file per camera")
    p.add_argument("detections", nargs="+", help="detection files, one per camera")
    p.add_argument("-o", "--out", help="solution file (default: stdout)")
    p.add_argument("--curves", help="directory for diagnostic CSV curves")
    p.add_argument("--config", help="JSON file overriding the flags")
    _add_options(p, _SINGLE_VIEW_OPTIONS + _PIPELINE_OPTIONS)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("single-view", help="focal length and ground plane of one camera")
    p.add_argument("detections")
    p.add_argument("-o", "--out")
    p.add_argument("--config")
    _add_options(p, _SINGLE_VIEW_OPTIONS)
    p.set_defaults(func=cmd_single_view)

    p = sub.add_parser("sync", help="frame offset between two cameras")
    p.add_argument("reference_file")
    p.add_argument("other_file")
    p.add_argument("-o", "--out")
    p.add_argument("--curve", help="CSV of the cost per offset")
    p.add_argument("--config")
    _add_options(p, _SINGLE_VIEW_OPTIONS + _PIPELINE_OPTIONS)
    p.set_defaults(func=cmd_sync)

    p = sub.add_parser("simulate", help="single-view simulation trials or a synthetic rig")
    p.add_argument("study", choices=("measurement", "height", "people", "rig"))
    p.add_argument("--trials", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", type=int, default=3, help="rig only")
    p.add_argument("--frames", type=int, default=300, help="rig only")
    p.add_argument("--noise", type=float, default=0.0, help="rig only: detection noise std in pixels")
    p.add_argument("-o", "--out", help="CSV report, or output directory for a rig")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("noise-study", help="noise propagation through the pipeline")
    p.add_argument("target", choices=("detections", "focal", "normal", "sync", "rotation"))
    p.add_argument("--levels", type=float, nargs="+", help="noise levels (default: the standard grid)")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", help="CSV report (default: stdout)")
    p.set_defaults(func=cmd_noise_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "levels", None) is not None and args.target == "sync":
        args.levels = [int(v) for v in args.levels]
    try:
        return args.func(args)
    except (InputError, ValueError, *_INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except StageError as exc:
        if isinstance(exc.cause, InvariantViolation):
            print(f"invariant violated: {exc}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())

"""Noise injected at one stage, errors measured at every later stage."""
import argparse
from pathlib import Path

from posecalib.synthetic.propagation import (
    STUDIES,
    PropagationConfig,
    run_detection_noise_study,
    run_focal_noise_study,
    run_normal_noise_study,
    run_rotation_noise_study,
    run_sync_noise_study,
    write_study_csv,
)

RUNNERS = {
    "detections": run_detection_noise_study,
    "focal": run_focal_noise_study,
    "normal": run_normal_noise_study,
    "sync": run_sync_noise_study,
    "rotation": run_rotation_noise_study,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("studies", nargs="*", choices=STUDIES, default=list(STUDIES))
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = PropagationConfig(runs=args.runs, seed=args.seed)
    for name in args.studies:
        reports = RUNNERS[name](cfg=cfg)
        write_study_csv(reports, args.out / f"propagation_{name}.csv")
        print(f"\n{name}")
        if name == "rotation":
            for r in reports:
                print(f"  std {r.value:6g} deg  NMPJPE {r.nmpjpe:.4f}")
            continue
        print(f"{'level':>7} {'f%':>6} {'dt':>5} {'srch deg':>8} {'icp deg':>8} {'final deg':>9} {'final m':>8} {'fail':>4}")
        for r in reports:
            print(f"{r.value:7g} {r.focal_pct:6.2f} {r.sync_frames:5.1f} {r.search_deg:8.3f} {r.icp_deg:8.3f} "
                  f"{r.final_deg:9.3f} {r.final_m:8.3f} {r.failures:4d}")


if __name__ == "__main__":
    main()

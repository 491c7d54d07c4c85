"""Single-view Monte-Carlo tables: pixel noise, height spread, people count."""
import argparse
from pathlib import Path

from posecalib.synthetic.trials import (
    TrialConfig,
    run_height_trials,
    run_measurement_noise_trials,
    run_people_trials,
    write_reports_csv,
)

STUDIES = {
    "measurement": run_measurement_noise_trials,
    "height": run_height_trials,
    "people": run_people_trials,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", choices=sorted(STUDIES))
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = TrialConfig(trials=args.trials, seed=args.seed)
    for name, run in STUDIES.items():
        if args.only and name != args.only:
            continue
        reports = run(cfg=cfg)
        write_reports_csv(reports, args.out / f"single_view_{name}.csv")
        print(f"\n{name} ({args.trials} trials per row)")
        print(f"{'value':>8} {'f%':>7} {'normal':>7} {'rho%':>7} {'X%':>7} {'fail%':>7}")
        for r in reports:
            print(f"{r.value:8g} {r.fx_pct:7.2f} {r.normal_deg:7.2f} {r.rho_pct:7.2f} {r.x_pct:7.2f} {r.fail_pct:7.2f}")


if __name__ == "__main__":
    main()

"""Spline prior on vs off under probabilistic traffic with the interactive predictor.

    python3 scripts/run_spline_ablation.py --out runs/spline --runs 40
"""
import argparse
from dataclasses import replace

from merge_mppi.config import ExperimentConfig, load_config, parse_grid
from merge_mppi.harness import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/spline")
    ap.add_argument("--runs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = replace(cfg, cells=parse_grid("spline"), runs=args.runs, base_seed=args.seed, workers=args.workers)
    results = run_experiment(cfg, args.out)
    print(f"{'MPPI':22s} {'success':>8s} {'merge time [s]':>16s} {'planning cost':>16s}")
    for res in results.values():
        s = res.summary
        label = "with spline prior" if res.cell.spline_prior else "without spline prior"
        mt, pc = s["merge_time"], s["planning_cost"]
        mt_txt = "-" if mt["mean"] is None else f"{mt['mean']:.2f} ± {mt['std']:.2f}"
        print(f"{label:22s} {s['success_rate'] / 100:8.3f} {mt_txt:>16s} {pc['mean']:7.2f} ± {pc['std']:.2f}")


if __name__ == "__main__":
    main()

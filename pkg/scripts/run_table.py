"""Behaviour x predictor Monte-Carlo table (spline prior on).

    python3 scripts/run_table.py --out runs/table --runs 40
"""
import argparse
from dataclasses import replace

from merge_mppi.config import ExperimentConfig, load_config, parse_grid
from merge_mppi.harness import format_summary, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/table")
    ap.add_argument("--runs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = replace(cfg, cells=parse_grid("table"), runs=args.runs, base_seed=args.seed, workers=args.workers)
    results = run_experiment(cfg, args.out)
    print(format_summary({name: r.summary for name, r in results.items()}))


if __name__ == "__main__":
    main()

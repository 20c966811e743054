"""Per-step planning wall time for each predictor on a fixed merge scene.

    python3 scripts/time_planner.py --steps 50
"""
import argparse

from merge_mppi.config import ExperimentConfig, load_config
from merge_mppi.harness import planning_step_times
from merge_mppi.prediction import PredictorKind


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--steps", type=int, default=50)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    print(f"K={cfg.planner.sampling.K} H={cfg.planner.H} H_pred={cfg.planner.H_pred} "
          f"N_veh={cfg.scenario.n_vehicles}")
    for kind in (PredictorKind.CONSTANT_VELOCITY, PredictorKind.ALWAYS_YIELD_IDM, PredictorKind.INTERACTIVE_IDM):
        t = planning_step_times(cfg, kind, args.steps)
        print(f"{kind.value:18s} {t.mean():.4f} ± {t.std():.4f} s per step")


if __name__ == "__main__":
    main()

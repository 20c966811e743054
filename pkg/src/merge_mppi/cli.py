"""Command line entry point: ``python3 -m merge_mppi {run,replay,metrics}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig, load_config, parse_grid
from .harness import SUMMARY_FILE, format_summary, replay_lines, run_experiment, summaries_from_dir
from .traffic_sim import EpisodeRecord


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.grid is not None:
        overrides["cells"] = parse_grid(args.grid)
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides)


def cmd_run(args) -> int:
    cfg = _experiment(args)
    out = Path(args.out)
    results = run_experiment(cfg, out)
    print(format_summary({name: r.summary for name, r in results.items()}))
    print(f"wrote {len(cfg.cells) * cfg.runs} episodes to {out}")
    return 0


def cmd_replay(args) -> int:
    path = Path(args.episode)
    if path.is_dir():
        matches = sorted(path.glob(f"episode_{args.cell or '*'}_{args.run:03d}.jsonl"))
        if not matches:
            print(f"no episode file for run {args.run} in {path}", file=sys.stderr)
            return 1
        path = matches[0]
    record = EpisodeRecord.read_jsonl(path)
    for i, line in enumerate(replay_lines(record)):
        if i == 0 or (i - 1) % args.every == 0:
            print(line)
    return 0


def cmd_metrics(args) -> int:
    out = Path(args.out)
    cfg = load_config(args.config) if args.config else _echoed_config(out)
    summary = summaries_from_dir(out, cfg.planner.weights, cfg.planner.H)
    if not summary:
        print(f"no episode files in {out}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(format_summary(summary))
    stored = out / SUMMARY_FILE
    if stored.exists() and json.loads(stored.read_text()) != json.loads(json.dumps(summary)):
        print(f"warning: recomputed metrics differ from {stored}", file=sys.stderr)
    return 0


def _echoed_config(out: Path) -> ExperimentConfig:
    echo = out / "config_echo.yaml"
    return load_config(echo) if echo.exists() else ExperimentConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="merge_mppi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo grid and write episodes plus summary.json")
    run.add_argument("--config", help="YAML experiment config (defaults otherwise)")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--runs", type=int, help="episodes per cell")
    run.add_argument("--grid", help="named grid (table, spline, probabilistic, ...) or b:p[:on|off],...")
    run.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="print a logged episode step by step")
    rep.add_argument("episode", help="episode_*.jsonl file or an output directory")
    rep.add_argument("--cell", help="cell name when a directory is given")
    rep.add_argument("--run", type=int, default=0)
    rep.add_argument("--every", type=int, default=1, help="print every n-th step")
    rep.set_defaults(func=cmd_replay)

    met = sub.add_parser("metrics", help="recompute per-cell metrics from episode files")
    met.add_argument("--out", required=True, help="output directory of a previous run")
    met.add_argument("--config", help="config used for the run (defaults to the echoed one)")
    met.add_argument("--json", action="store_true")
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)

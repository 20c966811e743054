"""Seeded Monte-Carlo episodes, per-episode metrics and per-cell summaries."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import Cell, ExperimentConfig, dump_config
from .cost import CostWeights, LaneContext, local_goal, objective
from .dynamics import ACCEL, STEER, Y, rollout
from .planner import LaneReference, PlannerState, plan_step, planning_context
from .prediction import TrajectoryHistory, make_predictor
from .traffic_sim import EpisodeRecord, Status, World, detect_collision, initial_world, sim_step

log = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
CONFIG_ECHO = "config_echo.yaml"


def episode_seed(base_seed: int, run: int) -> np.random.SeedSequence:
    """Seeds depend on the run index only, so every cell sees the same scenarios."""
    return np.random.SeedSequence([base_seed, run])


def lane_context(cfg: ExperimentConfig, v_ref: float) -> LaneContext:
    sc = cfg.scenario
    return LaneContext(y_lane=sc.target_y, y_target_lane=sc.target_y, y_boundary=sc.road_boundaries,
                       v_ref=v_ref, lane_width=sc.lane_width)


def run_episode(cfg: ExperimentConfig, cell: Cell, run: int) -> EpisodeRecord:
    scen_rng, sim_rng, plan_rng = (np.random.default_rng(s) for s in episode_seed(cfg.base_seed, run).spawn(3))
    scenario = replace(cfg.scenario, behavior=replace(cfg.scenario.behavior, kind=cell.behavior))
    geom, dt = cfg.geometry, cfg.planner.dt
    pcfg = replace(cfg.planner, predictor=cell.predictor,
                   sampling=replace(cfg.planner.sampling, use_spline_prior=cell.spline_prior))
    if not cell.spline_prior:
        pcfg = replace(pcfg, weight_rule=cfg.noprior_weight_rule)

    world = initial_world(scenario, geom, scen_rng)
    ctx = lane_context(cfg, world.v_ref)
    predictor = make_predictor(cell.predictor, geom, dt, replace(scenario.behavior.idm, v0=world.traffic_speed),
                               scenario.zones, scenario.lane_width, cfg.predictor_p_yield)
    state = PlannerState.zeros(pcfg.H)

    record = EpisodeRecord(dt=dt, v_ref=world.v_ref, meta={
        "cell": cell.name, "run": run, "lane": {"y_lane": ctx.y_lane, "y_target_lane": ctx.y_target_lane,
                                                "y_boundary": list(ctx.y_boundary), "lane_width": ctx.lane_width,
                                                "centers": list(scenario.lane_centers),
                                                "reference": pcfg.lane_reference.value}})
    ego_hist, agent_hist = [world.ego], [world.agents]
    on_target = 0
    for _ in range(scenario.max_steps):
        history = TrajectoryHistory(np.array(ego_hist[-pcfg.history_window:]),
                                    np.array(agent_hist[-pcfg.history_window:]))
        start = time.perf_counter()
        control, state, diag = plan_step(world.ego, history, state, pcfg, predictor, ctx, plan_rng,
                                         scenario.lane_centers)
        elapsed = time.perf_counter() - start
        record.append(world, control, plan=diag["plan"].tolist(), best_cost=diag["best_cost"],
                      ess=diag["ess"], fallback=diag["fallback"], wall_time=elapsed,
                      yielded=[bool(b) for b in world.yielded])
        world = sim_step(world, control, scenario, geom, dt, sim_rng)
        ego_hist.append(world.ego)
        agent_hist.append(world.agents)

        if detect_collision(world.ego, world.agents, geom):
            record.status = Status.COLLISION
            break
        on_target = on_target + 1 if abs(world.ego[Y] - scenario.target_y) <= scenario.success_tolerance else 0
        if on_target >= scenario.success_steps:
            record.status = Status.SUCCESS
            record.merge_step = world.t - scenario.success_steps + 1
            break
    else:
        record.status = Status.TIMEOUT
    record.append(world, yielded=[bool(b) for b in world.yielded])
    return record


def _context_from_record(record: EpisodeRecord) -> LaneContext:
    lane = record.meta["lane"]
    return LaneContext(lane["y_lane"], lane["y_target_lane"], tuple(lane["y_boundary"]), record.v_ref,
                       lane["lane_width"])


def _lane_reference(record: EpisodeRecord):
    lane = record.meta.get("lane", {})
    return tuple(lane.get("centers", ())), LaneReference(lane.get("reference", LaneReference.TARGET.value))


def compute_metrics(record: EpisodeRecord, weights: CostWeights, ctx: LaneContext | None = None,
                    horizon: int = 17) -> dict:
    """Per-episode metrics recomputed from the logged trajectory.

    Planning cost: for every step t the objective without the risk term is
    evaluated on the realised states t+1..t+H and controls t..t+H-1 (windows
    are truncated at the end of the episode), then averaged over steps. The
    lane reference is resolved at t exactly as the planner did.
    """
    ctx = ctx or _context_from_record(record)
    centers, reference = _lane_reference(record)
    states = np.array([s["ego"] for s in record.steps])
    controls = np.array([s["control"] for s in record.steps if "control" in s]).reshape(-1, 2)
    n = len(controls)
    dt = record.dt

    costs = []
    for t in range(max(n - horizon, 0) + 1 if n else 0):
        end = min(t + horizon, n)
        ctx_t = planning_context(states[t], ctx, centers, reference)
        goal = local_goal(states[t], ctx_t, horizon, dt)
        costs.append(objective(states[t + 1:end + 1], controls[t:end], None, weights, ctx_t, goal,
                               include_risk=False))
    accel = np.abs(controls[:, ACCEL]) if n else np.zeros(0)
    steer_rate = np.abs(np.diff(controls[:, STEER])) / dt if n > 1 else np.zeros(0)
    merge_time = record.merge_step * dt if record.status is Status.SUCCESS else None
    return {
        "status": record.status.value,
        "steps": n,
        "merge_time": merge_time,
        "planning_cost": float(np.mean(costs)) if costs else 0.0,
        "mean_abs_accel": float(np.mean(accel)) if accel.size else 0.0,
        "mean_abs_steer_rate": float(np.mean(steer_rate)) if steer_rate.size else 0.0,
    }


def planning_step_times(cfg: ExperimentConfig, predictor, steps: int = 30, warmup: int = 3, seed: int = 0):
    """Wall time of ``steps`` consecutive planner calls on the initial merge scene of run ``seed``."""
    sc = cfg.scenario
    world = initial_world(sc, cfg.geometry, np.random.default_rng(episode_seed(cfg.base_seed, seed).spawn(3)[0]))
    window = cfg.planner.history_window
    history = TrajectoryHistory(np.tile(world.ego, (window, 1)), np.tile(world.agents, (window, 1, 1)))
    model = make_predictor(predictor, cfg.geometry, cfg.planner.dt, replace(sc.behavior.idm, v0=world.traffic_speed),
                           sc.zones, sc.lane_width, cfg.predictor_p_yield)
    pcfg = replace(cfg.planner, predictor=predictor)
    ctx = lane_context(cfg, world.v_ref)
    rng = np.random.default_rng(seed)
    state = PlannerState.zeros(pcfg.H)
    times = []
    for i in range(warmup + steps):
        start = time.perf_counter()
        _, state, _ = plan_step(world.ego, history, state, pcfg, model, ctx, rng, sc.lane_centers)
        if i >= warmup:
            times.append(time.perf_counter() - start)
    return np.asarray(times)


def _mean_std(values) -> dict:
    values = [v for v in values if v is not None]
    if not values:
        return {"mean": None, "std": None, "n": 0}
    arr = np.asarray(values, dtype=float)
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr)), "n": len(values)}


def summarize(metrics: list[dict]) -> dict:
    n = len(metrics)
    count = {s.value: sum(m["status"] == s.value for m in metrics) for s in
             (Status.SUCCESS, Status.COLLISION, Status.TIMEOUT)}
    return {
        "runs": n,
        "success_rate": 100.0 * count["success"] / n,
        "collision_rate": 100.0 * count["collision"] / n,
        "timeout_rate": 100.0 * count["timeout"] / n,
        "planning_cost": _mean_std(m["planning_cost"] for m in metrics),
        "merge_time": _mean_std(m["merge_time"] for m in metrics),
        "acceleration": _mean_std(m["mean_abs_accel"] for m in metrics),
        "steering_rate": _mean_std(m["mean_abs_steer_rate"] for m in metrics),
    }


def step_times(record: EpisodeRecord) -> list[float]:
    return [s["wall_time"] for s in record.steps if "wall_time" in s]


def timing_summary(times) -> dict:
    arr = np.asarray(list(times), dtype=float)
    if arr.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(np.mean(arr)), "std": float(np.std(arr)), "n": int(arr.size)}


@dataclass
class CellResult:
    cell: Cell
    records: list[EpisodeRecord]
    metrics: list[dict]

    @property
    def summary(self) -> dict:
        return summarize(self.metrics)


def _episode_task(args):
    cfg, cell, run = args
    return run_episode(cfg, cell, run)


def episode_path(out_dir: Path, cell: Cell, run: int) -> Path:
    return Path(out_dir) / f"episode_{cell.name}_{run:03d}.jsonl"


def _write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> dict[str, CellResult]:
    """Run every (cell, run) episode; optionally write records and summaries to ``out_dir``.

    Results do not depend on ``workers``: each episode owns its seeds.
    """
    workers = cfg.workers if workers is None else workers
    tasks = [(cfg, cell, run) for cell in cfg.cells for run in range(cfg.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_episode_task, tasks, chunksize=1))
    else:
        records = [_episode_task(t) for t in tasks]

    results: dict[str, CellResult] = {}
    for (_, cell, run), record in zip(tasks, records):
        res = results.setdefault(cell.name, CellResult(cell, [], []))
        res.records.append(record)
        res.metrics.append(compute_metrics(record, cfg.planner.weights, horizon=cfg.planner.H))
        log.info("%s run %d: %s", cell.name, run, record.status.value)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for (_, cell, run), record in zip(tasks, records):
            record.write_jsonl(episode_path(out, cell, run))
        _write_json(out / SUMMARY_FILE, {name: r.summary for name, r in results.items()})
        _write_json(out / TIMING_FILE, {name: timing_summary(t for rec in r.records for t in step_times(rec))
                                        for name, r in results.items()})
        echo = out / CONFIG_ECHO
        echo.with_suffix(".tmp").write_text(dump_config(cfg))
        echo.with_suffix(".tmp").replace(echo)
    return results


def summaries_from_dir(out_dir, weights: CostWeights, horizon: int) -> dict:
    """Recompute the per-cell summary from the episode files on disk."""
    grouped: dict[str, list[dict]] = {}
    for path in sorted(Path(out_dir).glob("episode_*.jsonl")):
        record = EpisodeRecord.read_jsonl(path)
        grouped.setdefault(record.meta["cell"], []).append(compute_metrics(record, weights, horizon=horizon))
    return {name: summarize(ms) for name, ms in grouped.items()}


def format_summary(summary: dict) -> str:
    def ms(d):
        return "-" if d["mean"] is None else f"{d['mean']:.2f} ± {d['std']:.2f}"

    lines = [f"{'cell':45s} {'succ%':>6s} {'coll%':>6s} {'cost':>14s} {'merge[s]':>14s} {'|a|':>12s} {'|ddelta|':>12s}"]
    for name, s in summary.items():
        lines.append(f"{name:45s} {s['success_rate']:6.1f} {s['collision_rate']:6.1f} {ms(s['planning_cost']):>14s} "
                     f"{ms(s['merge_time']):>14s} {ms(s['acceleration']):>12s} {ms(s['steering_rate']):>12s}")
    return "\n".join(lines)


def replay_lines(record: EpisodeRecord):
    yield f"# {record.meta.get('cell', '?')} run {record.meta.get('run', '?')}: {record.status.value}"
    for s in record.steps:
        ego = s["ego"]
        ctrl = s.get("control")
        ctrl_txt = "" if ctrl is None else f" delta={ctrl[0]:+.3f} a={ctrl[1]:+.3f}"
        gaps = [a[0] - ego[0] for a in s["agents"]]
        near = min(gaps, key=abs) if gaps else math.nan
        yield (f"t={s['time']:6.1f} x={ego[0]:7.2f} y={ego[1]:5.2f} psi={ego[2]:+.3f} v={ego[3]:4.2f}"
               f"{ctrl_txt} nearest_dx={near:+6.2f}")

"""Interaction-aware MPPI.

Each call to :func:`plan_step` samples K control sequences (partly around
lane-change spline priors), rolls out the ego, predicts the neighbours'
reaction to every rolled-out candidate, scores everything with the planning
objective and averages the sequences with exponentiated-cost weights.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostWeights, LaneContext, local_goal, objective
from .dynamics import Y, ControlBounds, VehicleGeometry, rollout
from .prediction import Predictor, PredictorKind, TrajectoryHistory, predict_conditioned
from .sampler import LEFT, NOMINAL, RIGHT, SamplingConfig, TrackerGains, build_spline, draw_samples, track_spline


class WeightRule(str, enum.Enum):
    STANDARD = "standard"
    BIASED = "biased"


class DegenerateWeightsError(FloatingPointError):
    pass


class LaneReference(str, enum.Enum):
    """Which centre line the lane-centering term pulls towards."""

    STEP = "step"  # lane containing the ego at each horizon step
    START = "start"  # lane containing the ego when planning starts
    TARGET = "target"


@dataclass(frozen=True)
class PlannerConfig:
    H: int = 17
    H_pred: int = 8
    dt: float = 0.3
    lam: float = 1.0
    eta: float = 1.0
    weight_rule: WeightRule = WeightRule.BIASED
    predictor: PredictorKind = PredictorKind.INTERACTIVE_IDM
    history_window: int = 8
    neighborhood: float = 30.0
    lane_reference: LaneReference = LaneReference.STEP
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    gains: TrackerGains = field(default_factory=TrackerGains)
    bounds: ControlBounds = field(default_factory=ControlBounds)
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)

    def __post_init__(self):
        if self.H_pred > self.H:
            raise ValueError("H_pred must not exceed H")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")


@dataclass(frozen=True)
class PlannerState:
    mean: np.ndarray
    last_control: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @classmethod
    def zeros(cls, horizon: int) -> "PlannerState":
        return cls(np.zeros((horizon, 2)))


@dataclass
class ControlSample:
    controls: np.ndarray
    ego_rollout: np.ndarray
    prediction: np.ndarray
    cost: float
    weight: float
    tag: str


def standard_log_weight(costs, controls, mean, sigma, lam: float, eta: float = 1.0):
    """Logarithm of the Gaussian importance-sampling weight as printed (unnormalised)."""
    controls = np.asarray(controls, dtype=float)
    mean = np.asarray(mean, dtype=float)
    inv = np.linalg.inv(np.asarray(sigma, dtype=float))
    quad = 0.5 * np.einsum("hi,ij,hj->", mean, inv, mean)
    cross = np.einsum("hi,ij,...hj->...", mean, inv, controls)
    return -np.asarray(costs, dtype=float) / lam + quad - cross - math.log(eta)


def standard_weight(cost, controls, mean, sigma, lam: float, eta: float = 1.0):
    return np.exp(standard_log_weight(cost, controls, mean, sigma, lam, eta))


def normalize_log_weights(log_w) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise DegenerateWeightsError("no sample has a finite cost")
    w = np.zeros_like(log_w)
    w[finite] = np.exp(log_w[finite] - np.max(log_w[finite]))
    return w / np.sum(w)


def biased_weight(costs, lam: float) -> np.ndarray:
    """Softmax of -cost / lambda; the normaliser plays the role of eta."""
    costs = np.asarray(costs, dtype=float)
    if np.any(np.isnan(costs)):
        raise DegenerateWeightsError("NaN cost")
    return normalize_log_weights(-costs / lam)


def effective_sample_size(weights) -> float:
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(weights**2))


def neighbor_lanes(y: float, lane_centers, on_center: float = 0.25) -> dict:
    """Nearest centre line strictly left (higher y) and right of ``y``.

    A centre line closer than ``on_center`` counts as the ego's own lane and is
    skipped, so mid-manoeuvre the two priors are "finish" and "return".
    """
    centers = sorted(lane_centers)
    left = [c for c in centers if c > y + on_center]
    right = [c for c in centers if c < y - on_center]
    return {LEFT: left[0] if left else None, RIGHT: right[-1] if right else None}


def ego_lane_center(y: float, lane_centers) -> float:
    return float(min(lane_centers, key=lambda c: abs(y - c)))


def planning_context(ego, ctx: LaneContext, lane_centers, reference: LaneReference) -> LaneContext:
    reference = LaneReference(reference)
    if reference is LaneReference.TARGET or not len(lane_centers):
        return replace(ctx, y_lane=ctx.y_target_lane, lane_centers=())
    y_lane = ego_lane_center(float(ego[Y]), lane_centers)
    centers = tuple(float(c) for c in lane_centers) if reference is LaneReference.STEP else ()
    return replace(ctx, y_lane=y_lane, lane_centers=centers)


def spline_priors(ego, ctx: LaneContext, lane_centers, cfg: PlannerConfig) -> dict:
    refs = {}
    for side, target in neighbor_lanes(float(ego[Y]), lane_centers).items():
        if target is None:
            refs[side] = None
            continue
        waypoints = build_spline(ego, target, cfg.H, cfg.dt, ctx.v_ref)
        refs[side] = track_spline(ego, waypoints, cfg.geometry, cfg.dt, ctx.v_ref, cfg.bounds, cfg.gains)
    return refs


def plan_step(ego, history: TrajectoryHistory, state: PlannerState, cfg: PlannerConfig,
              predictor: Predictor, ctx: LaneContext, rng: np.random.Generator,
              lane_centers=(), keep_samples: bool = False):
    """One MPPI iteration. Returns ``(control, new_state, diagnostics)``."""
    ego = np.asarray(ego, dtype=float)
    ctx = planning_context(ego, ctx, lane_centers, cfg.lane_reference)
    refs = spline_priors(ego, ctx, lane_centers, cfg) if cfg.sampling.use_spline_prior else {}
    samples, tags = draw_samples(state.mean, refs, cfg.sampling, rng, cfg.bounds)

    rollouts = rollout(ego, samples, cfg.geometry, cfg.dt)
    hist = history.window(cfg.history_window).neighbors(cfg.neighborhood)
    if hist.n_agents:
        prediction = predict_conditioned(hist, rollouts, predictor, cfg.H_pred).states
    else:
        prediction = None
    goal = local_goal(ego, ctx, cfg.H, cfg.dt)
    costs = objective(rollouts, samples, prediction, cfg.weights, ctx, goal, cfg.geometry)

    fallback = False
    try:
        if cfg.weight_rule is WeightRule.STANDARD:
            log_w = standard_log_weight(costs, samples, state.mean, cfg.sampling.sigma, cfg.lam, cfg.eta)
            weights = normalize_log_weights(log_w)
        else:
            weights = biased_weight(costs, cfg.lam)
        optimal = np.einsum("k,khi->hi", weights, samples)
    except DegenerateWeightsError:
        fallback = True
        weights = np.zeros(len(costs))
        best = int(np.nanargmin(np.where(np.isfinite(costs), costs, np.inf))) if np.any(np.isfinite(costs)) else 0
        weights[best] = 1.0
        optimal = samples[best].copy()

    optimal = cfg.bounds.clamp(optimal)
    control = optimal[0].copy()
    new_mean = np.concatenate([optimal[1:], optimal[-1:]], axis=0)
    new_state = PlannerState(new_mean, control)

    tag_mass = {tag: float(np.sum(weights[tags == tag])) for tag in (LEFT, RIGHT, NOMINAL)}
    diagnostics = {
        "best_cost": float(np.min(costs)),
        "mean_cost": float(np.mean(costs)),
        "weighted_cost": float(np.dot(weights, np.where(np.isfinite(costs), costs, 0.0))),
        "ess": effective_sample_size(weights),
        "fallback": fallback,
        "tag_weight": tag_mass,
        "n_neighbors": hist.n_agents,
        "plan": optimal,
    }
    if keep_samples:
        diagnostics["samples"] = [
            ControlSample(samples[k], rollouts[k], None if prediction is None else prediction[k],
                          float(costs[k]), float(weights[k]), str(tags[k]))
            for k in range(len(costs))
        ]
    return control, new_state, diagnostics


class MPPIPlanner:
    """Stateful convenience wrapper holding the warm-start mean and the sampling RNG."""

    def __init__(self, cfg: PlannerConfig, predictor: Predictor, ctx: LaneContext,
                 lane_centers=(), seed=None):
        self.cfg = cfg
        self.predictor = predictor
        self.ctx = ctx
        self.lane_centers = tuple(lane_centers)
        self.rng = np.random.default_rng(seed)
        self.state = PlannerState.zeros(cfg.H)

    def reset(self) -> None:
        self.state = PlannerState.zeros(self.cfg.H)

    def plan_step(self, ego, history: TrajectoryHistory, keep_samples: bool = False):
        control, self.state, diag = plan_step(ego, history, self.state, self.cfg, self.predictor, self.ctx,
                                              self.rng, self.lane_centers, keep_samples)
        return control, diag

"""Interaction-aware sampling-based motion planning for highway merges."""
from .cost import CostWeights, LaneContext, gaussian_risk, local_goal, objective
from .dynamics import ControlBounds, ControlInput, VehicleGeometry, VehicleState, rollout, step
from .planner import MPPIPlanner, PlannerConfig, PlannerState, WeightRule, biased_weight, plan_step, standard_weight
from .prediction import PredictorKind, TrajectoryHistory, make_predictor, predict_conditioned
from .sampler import SamplingConfig, build_spline, draw_samples, track_spline
from .traffic_sim import BehaviorKind, BehaviorModel, ScenarioConfig, YieldZones, detect_collision, idm_accel

__version__ = "0.1.0"

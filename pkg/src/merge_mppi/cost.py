"""Planning objective: tracking, comfort, road-boundary and Gaussian-overlap risk terms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ACCEL, PSI, STEER, V, X, Y, InvalidInputError, VehicleGeometry

TERMS = ("goal_x", "goal_y", "lane", "velocity", "control", "steer_rate", "jerk", "boundary", "risk")


@dataclass(frozen=True)
class CostWeights:
    """Term weights of the planning objective.

    ``risk``, ``goal``, ``velocity`` and ``epsilon`` are calibrated on the merge
    scenario: the overlap risk of two nearby cars is O(1e-2), so it needs a weight
    in the thousands to compete with the tracking terms.
    """

    goal: float = 4.0
    lane: float = 0.5
    velocity: float = 0.1
    steer: float = 1.0
    accel: float = 0.1
    steer_rate: float = 1.0
    jerk: float = 0.1
    boundary: float = 1.0
    risk: float = 2000.0
    epsilon: float = 4.0  # squared goal radius: a 2 m band around the target centre line
    goal_as_reward: bool = True
    beta_l: float = 1.0
    beta_w: float = 0.7

    def __post_init__(self):
        lambdas = (self.goal, self.lane, self.velocity, self.steer, self.accel, self.steer_rate,
                   self.jerk, self.boundary, self.risk)
        if min(lambdas) < 0:
            raise ValueError("cost weights must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class LaneContext:
    y_lane: float
    y_target_lane: float
    y_boundary: tuple[float, float]
    v_ref: float
    lane_width: float = 3.5
    # when given, the lane-centering term follows the nearest of these centre
    # lines at every step instead of the fixed ``y_lane``
    lane_centers: tuple[float, ...] = ()

    def shifted(self, dy: float) -> "LaneContext":
        return LaneContext(self.y_lane + dy, self.y_target_lane + dy, tuple(b + dy for b in self.y_boundary),
                           self.v_ref, self.lane_width, tuple(c + dy for c in self.lane_centers))

    def lane_reference(self, y) -> np.ndarray:
        """Centre line the lane-centering term pulls each ``y`` towards."""
        y = np.asarray(y, dtype=float)
        if not self.lane_centers:
            return np.full_like(y, self.y_lane)
        centers = np.asarray(self.lane_centers, dtype=float)
        return centers[np.argmin(np.abs(y[..., None] - centers), axis=-1)]


@dataclass(frozen=True)
class LocalGoal:
    x_goal: float
    y_goal: float


@dataclass(frozen=True)
class GaussianFootprint:
    p: np.ndarray
    sigma: np.ndarray


def local_goal(ego, ctx: LaneContext, horizon: int, dt: float) -> LocalGoal:
    ego = np.asarray(ego, dtype=float)
    return LocalGoal(float(ego[X] + ctx.v_ref * horizon * dt), float(ctx.y_target_lane))


def footprint_covariance(psi, length: float, width: float, beta_l: float, beta_w: float) -> np.ndarray:
    """R(psi) diag(beta_l L, beta_w W) R(psi)^T, broadcast over ``psi``."""
    psi = np.asarray(psi, dtype=float)
    a, b = beta_l * length, beta_w * width
    c, s = np.cos(psi), np.sin(psi)
    out = np.empty(psi.shape + (2, 2))
    out[..., 0, 0] = a * c * c + b * s * s
    out[..., 1, 1] = a * s * s + b * c * c
    out[..., 0, 1] = out[..., 1, 0] = (a - b) * c * s
    return out


def footprint(state, geom: VehicleGeometry, beta_l: float = 1.0, beta_w: float = 0.7) -> GaussianFootprint:
    state = np.asarray(state, dtype=float)
    return GaussianFootprint(state[..., :2].copy(),
                             footprint_covariance(state[..., PSI], geom.length, geom.width, beta_l, beta_w))


def gaussian_overlap(delta, sigma) -> np.ndarray:
    """N(delta; 0, sigma) for 2-vectors ``delta`` (..., 2) and SPD ``sigma`` (..., 2, 2)."""
    sxx, syy, sxy = sigma[..., 0, 0], sigma[..., 1, 1], sigma[..., 0, 1]
    det = sxx * syy - sxy * sxy
    if np.any(det <= 0):
        raise FloatingPointError("singular covariance in risk evaluation")
    dx, dy = delta[..., 0], delta[..., 1]
    maha = (syy * dx * dx - 2.0 * sxy * dx * dy + sxx * dy * dy) / det
    return np.exp(-0.5 * maha) / (2.0 * math.pi * np.sqrt(det))


def gaussian_risk(a: GaussianFootprint, b: GaussianFootprint):
    """Integral of the product of two Gaussian densities over the plane."""
    out = gaussian_overlap(np.asarray(a.p) - np.asarray(b.p), np.asarray(a.sigma) + np.asarray(b.sigma))
    return float(out) if np.ndim(out) == 0 else out


def _indicator_sign(weights: CostWeights) -> float:
    return -1.0 if weights.goal_as_reward else 1.0


def objective_terms(ego_states, ego_controls, predictions, weights: CostWeights, ctx: LaneContext,
                    goal: LocalGoal, geom: VehicleGeometry | None = None) -> dict:
    """Per-term contributions, each of shape ``ego_states.shape[:-2]``.

    ``predictions`` is an array (..., H_pred, N, 4) (or anything with a
    ``states`` attribute, or ``None`` for no neighbours).
    """
    geom = geom or VehicleGeometry()
    s = np.asarray(ego_states, dtype=float)
    u = np.asarray(ego_controls, dtype=float)
    if s.shape[-2] != u.shape[-2]:
        raise InvalidInputError("state and control sequences must have equal length")
    x, y, v = s[..., X], s[..., Y], s[..., V]
    delta, acc = u[..., STEER], u[..., ACCEL]
    sign = _indicator_sign(weights)

    terms = {
        "goal_x": sign * weights.goal * np.sum((x - goal.x_goal) ** 2 < weights.epsilon, axis=-1),
        "goal_y": sign * weights.goal * np.sum((y - goal.y_goal) ** 2 < weights.epsilon, axis=-1),
        "lane": weights.lane * np.sum((ctx.lane_reference(y) - y) ** 2, axis=-1),
        "velocity": weights.velocity * np.sum((ctx.v_ref - v) ** 2, axis=-1),
        "control": np.sum(weights.steer * delta ** 2 + weights.accel * acc ** 2, axis=-1),
        "steer_rate": weights.steer_rate * np.sum(np.diff(delta, axis=-1) ** 2, axis=-1),
        "jerk": weights.jerk * np.sum(np.diff(acc, axis=-1) ** 2, axis=-1),
        "boundary": weights.boundary * sum(
            np.sum(np.log1p(np.exp(-(y - b) ** 2)), axis=-1) for b in ctx.y_boundary),
    }
    terms["risk"] = weights.risk * risk_sum(s, predictions, weights, geom)
    return {k: np.asarray(val, dtype=float) for k, val in terms.items()}


def risk_sum(ego_states, predictions, weights: CostWeights, geom: VehicleGeometry):
    """Sum of Gaussian overlaps over the first H_pred steps and all neighbours."""
    s = np.asarray(ego_states, dtype=float)
    if predictions is None:
        return np.zeros(s.shape[:-2])
    pred = np.asarray(getattr(predictions, "states", predictions), dtype=float)
    h_pred = pred.shape[-3]
    if h_pred > s.shape[-2]:
        raise InvalidInputError("prediction horizon exceeds the ego rollout")
    if pred.shape[-2] == 0 or h_pred == 0:
        return np.zeros(s.shape[:-2])
    ego = s[..., :h_pred, None, :]
    cov = (footprint_covariance(ego[..., PSI], geom.length, geom.width, weights.beta_l, weights.beta_w)
           + footprint_covariance(pred[..., PSI], geom.length, geom.width, weights.beta_l, weights.beta_w))
    rho = gaussian_overlap(ego[..., :2] - pred[..., :2], cov)
    return np.sum(rho, axis=(-2, -1))


def objective(ego_states, ego_controls, predictions, weights: CostWeights, ctx: LaneContext,
              goal: LocalGoal, geom: VehicleGeometry | None = None, include_risk: bool = True):
    terms = objective_terms(ego_states, ego_controls, predictions, weights, ctx, goal, geom)
    if not include_risk:
        terms.pop("risk")
    total = sum(terms.values())
    return float(total) if np.ndim(total) == 0 else total

"""Ego-conditioned prediction of surrounding vehicles.

A predictor only has to answer one question: given the joint history of the
surrounding agents and the ego, where is every agent one step later?
:func:`predict_conditioned` turns that into a multi-step forecast conditioned
on a candidate ego trajectory by feeding the predictor its own outputs
together with the candidate's states, one step at a time.

All arrays may carry leading batch axes (one per MPPI sample).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .dynamics import V, X, InvalidInputError, VehicleGeometry, step
from .traffic_sim import IDMParams, YieldZones, idm_acceleration, same_lane_leaders


class PredictorKind(str, enum.Enum):
    CONSTANT_VELOCITY = "cv"
    ALWAYS_YIELD_IDM = "always_yield_idm"
    INTERACTIVE_IDM = "interactive_idm"
    EXTERNAL = "external"


@dataclass(frozen=True)
class TrajectoryHistory:
    """Aligned history: ``ego`` is (T, 4), ``agents`` is (T, N, 4)."""

    ego: np.ndarray
    agents: np.ndarray
    agent_ids: tuple[int, ...] = ()

    def __post_init__(self):
        ego = np.asarray(self.ego, dtype=float)
        agents = np.asarray(self.agents, dtype=float)
        if ego.ndim != 2 or ego.shape[0] < 1:
            raise InvalidInputError("history needs at least one ego state")
        if agents.ndim == 2 and agents.shape[0] == 0:
            agents = agents.reshape(ego.shape[0], 0, 4)
        if agents.ndim != 3 or agents.shape[0] != ego.shape[0]:
            raise InvalidInputError("agent and ego histories must share timestamps")
        object.__setattr__(self, "ego", ego)
        object.__setattr__(self, "agents", agents)
        if not self.agent_ids:
            object.__setattr__(self, "agent_ids", tuple(range(agents.shape[1])))

    @property
    def n_agents(self) -> int:
        return self.agents.shape[1]

    def window(self, length: int) -> "TrajectoryHistory":
        return replace(self, ego=self.ego[-length:], agents=self.agents[-length:])

    def select(self, mask) -> "TrajectoryHistory":
        mask = np.asarray(mask, dtype=bool)
        ids = tuple(i for i, keep in zip(self.agent_ids, mask) if keep)
        return TrajectoryHistory(self.ego, self.agents[:, mask], ids)

    def neighbors(self, distance: float) -> "TrajectoryHistory":
        """Keep agents currently within ``distance`` of the ego."""
        gap = np.linalg.norm(self.agents[-1, :, :2] - self.ego[-1, :2], axis=-1)
        return self.select(gap <= distance)


@dataclass(frozen=True)
class ConditionedPrediction:
    states: np.ndarray  # (..., H_pred, N, 4)
    ego_candidate: np.ndarray  # (..., H, 4)
    agent_ids: tuple[int, ...] = ()

    @property
    def horizon(self) -> int:
        return self.states.shape[-3]


class Predictor:
    """One-step predictor interface. Implementations must be stateless."""

    kind: PredictorKind
    # how many trailing context steps the model reads; None means all of them
    context_steps: int | None = None

    def predict_one_step(self, agents_ctx: np.ndarray, ego_ctx: np.ndarray) -> np.ndarray:
        """Map contexts (..., T, N, 4) and (..., T, 4) to next agent states (..., N, 4)."""
        raise NotImplementedError


class ConstantVelocityPredictor(Predictor):
    kind = PredictorKind.CONSTANT_VELOCITY
    context_steps = 1

    def __init__(self, geom: VehicleGeometry, dt: float):
        self.geom = geom
        self.dt = dt

    def predict_one_step(self, agents_ctx, ego_ctx):
        last = agents_ctx[..., -1, :, :]
        return step(last, np.zeros(last.shape[:-1] + (2,)), self.geom, self.dt)


class _IDMPredictor(Predictor):
    """Lane-locked IDM rollout with the ego as a potential leader."""

    context_steps = 1

    def __init__(self, geom: VehicleGeometry, dt: float, idm: IDMParams, zones: YieldZones,
                 lane_width: float = 3.5):
        self.geom = geom
        self.dt = dt
        self.idm = idm
        self.zones = zones
        self.lane_width = lane_width

    def _accelerations(self, agents, ego):
        length = self.geom.length
        lead = same_lane_leaders(agents, self.lane_width)
        lead_states = np.take_along_axis(agents, np.maximum(lead, 0)[..., None], axis=-2)
        has_lead = lead >= 0
        gap_nom = np.where(has_lead, lead_states[..., X] - agents[..., X] - length, np.inf)
        close_nom = np.where(has_lead, agents[..., V] - lead_states[..., V], 0.0)
        a_nom = idm_acceleration(agents[..., V], gap_nom, close_nom, self.idm)

        gap_ego = ego[..., None, X] - agents[..., X] - length
        a_ego = idm_acceleration(agents[..., V], gap_ego, agents[..., V] - ego[..., None, V], self.idm)
        ego_nearer = ego[..., None, X] < np.where(has_lead, lead_states[..., X], np.inf)
        a_yield = np.where(ego_nearer, a_ego, a_nom)
        forced, prob = self.zones.classify(ego, agents)
        return a_nom, a_yield, forced, prob

    def _advance(self, agents, accel):
        controls = np.zeros(agents.shape[:-1] + (2,))
        controls[..., 1] = accel
        return step(agents, controls, self.geom, self.dt)


class AlwaysYieldIDMPredictor(_IDMPredictor):
    """Every agent yields to the ego as soon as it enters the lane corridor ahead."""

    kind = PredictorKind.ALWAYS_YIELD_IDM

    def predict_one_step(self, agents_ctx, ego_ctx):
        agents = agents_ctx[..., -1, :, :]
        a_nom, a_yield, forced, prob = self._accelerations(agents, ego_ctx[..., -1, :])
        return self._advance(agents, np.where(forced | prob, a_yield, a_nom))


class InteractiveIDMPredictor(_IDMPredictor):
    """Forced-zone yielding plus expected (probability-weighted) yielding in the
    probabilistic zone."""

    kind = PredictorKind.INTERACTIVE_IDM

    def __init__(self, geom, dt, idm, zones, lane_width=3.5, p_yield: float = 0.5):
        super().__init__(geom, dt, idm, zones, lane_width)
        self.p_yield = p_yield

    def predict_one_step(self, agents_ctx, ego_ctx):
        agents = agents_ctx[..., -1, :, :]
        a_nom, a_yield, forced, prob = self._accelerations(agents, ego_ctx[..., -1, :])
        mixed = self.p_yield * a_yield + (1.0 - self.p_yield) * a_nom
        accel = np.where(forced, a_yield, np.where(prob, mixed, a_nom))
        return self._advance(agents, accel)


class ExternalPredictor(Predictor):
    """Adapter for a learned one-step model.

    ``model(agents_ctx, ego_ctx)`` receives the same (batched) context arrays as
    :meth:`Predictor.predict_one_step` and must return (..., N, 4) next states.
    """

    kind = PredictorKind.EXTERNAL

    def __init__(self, model: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.model = model

    def predict_one_step(self, agents_ctx, ego_ctx):
        out = np.asarray(self.model(agents_ctx, ego_ctx), dtype=float)
        expected = agents_ctx.shape[:-3] + agents_ctx.shape[-2:]
        if out.shape != expected:
            raise InvalidInputError(f"external model returned {out.shape}, expected {expected}")
        return out


def make_predictor(kind, geom: VehicleGeometry, dt: float, idm: IDMParams | None = None,
                   zones: YieldZones | None = None, lane_width: float = 3.5, p_yield: float = 0.5,
                   model=None) -> Predictor:
    kind = PredictorKind(kind)
    idm = idm or IDMParams()
    zones = zones or YieldZones.from_geometry(geom, lane_width)
    if kind is PredictorKind.CONSTANT_VELOCITY:
        return ConstantVelocityPredictor(geom, dt)
    if kind is PredictorKind.ALWAYS_YIELD_IDM:
        return AlwaysYieldIDMPredictor(geom, dt, idm, zones, lane_width)
    if kind is PredictorKind.INTERACTIVE_IDM:
        return InteractiveIDMPredictor(geom, dt, idm, zones, lane_width, p_yield)
    if model is None:
        raise InvalidInputError("external predictor needs a model callable")
    return ExternalPredictor(model)


def predict_one_step(agents_ctx, ego_ctx, predictor: Predictor) -> np.ndarray:
    return predictor.predict_one_step(np.asarray(agents_ctx, dtype=float), np.asarray(ego_ctx, dtype=float))


def predict_conditioned(history: TrajectoryHistory, ego_candidate, predictor: Predictor,
                        horizon: int) -> ConditionedPrediction:
    """Roll ``predictor`` forward ``horizon`` steps along ``ego_candidate``.

    ``ego_candidate`` holds future ego states (..., H, 4) starting one step
    after the last history entry. Prediction k only sees candidate states up
    to k - 1, mirroring a purely history-driven model.
    """
    ego_candidate = np.asarray(ego_candidate, dtype=float)
    if ego_candidate.ndim < 2 or horizon > ego_candidate.shape[-2]:
        raise InvalidInputError("prediction horizon exceeds the ego candidate length")
    batch = ego_candidate.shape[:-2]
    n = history.n_agents
    out = np.empty(batch + (horizon, n, 4))
    window = getattr(predictor, "context_steps", None)
    if window is not None and window <= 1:
        # Markov models: the context is just the latest (predicted) state
        agents = np.broadcast_to(history.agents[-1], batch + (n, 4))
        ego = np.broadcast_to(history.ego[-1], batch + (4,))
        for k in range(horizon):
            agents = predictor.predict_one_step(agents[..., None, :, :], ego[..., None, :])
            out[..., k, :, :] = agents
            ego = ego_candidate[..., k, :]
        return ConditionedPrediction(out, ego_candidate, history.agent_ids)

    t_hist = history.agents.shape[0]
    agents_ctx = np.empty(batch + (t_hist + horizon, n, 4))
    ego_ctx = np.empty(batch + (t_hist + horizon, 4))
    agents_ctx[..., :t_hist, :, :] = history.agents
    ego_ctx[..., :t_hist, :] = history.ego
    for k in range(horizon):
        end = t_hist + k
        nxt = predictor.predict_one_step(agents_ctx[..., :end, :, :], ego_ctx[..., :end, :])
        out[..., k, :, :] = nxt
        agents_ctx[..., end, :, :] = nxt
        ego_ctx[..., end, :] = ego_candidate[..., k, :]
    return ConditionedPrediction(out, ego_candidate, history.agent_ids)

"""Two-lane merge environment with IDM-driven surrounding traffic.

Agents live in the target lane and never steer. Each one follows its
same-lane predecessor with the Intelligent Driver Model, and switches to the
ego as its leader when the ego sits in one of its yield zones:

* forced zone: the ego is directly ahead in the agent's lane; every variant yields.
* probabilistic zone: the ego is ahead and edging into the lane. The
  probabilistic variant yields with probability ``p_yield`` (re-drawn every
  step), the cooperative one always, the uncooperative one never.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import V, X, Y, VehicleGeometry, step


@dataclass(frozen=True)
class IDMParams:
    v0: float = 2.5
    time_headway: float = 1.0
    s0: float = 2.0
    a_max: float = 0.5
    b: float = 0.5
    delta: float = 4.0
    a_min: float = -0.5

    def scaled_spacing(self, factor: float) -> "IDMParams":
        return replace(self, s0=self.s0 * factor, time_headway=self.time_headway * factor)

    def equilibrium_gap(self, v: float) -> float:
        """Bumper-to-bumper gap at which a follower at ``v`` = ``v0`` is in equilibrium."""
        return self.s0 + v * self.time_headway


def idm_acceleration(v, gap, closing_speed, params: IDMParams):
    """Vectorized IDM. ``gap`` may be ``inf`` (free road); non-positive gaps brake at ``a_min``."""
    v = np.asarray(v, dtype=float)
    gap = np.asarray(gap, dtype=float)
    free = 1.0 - (v / params.v0) ** params.delta
    s_star = params.s0 + v * params.time_headway + v * closing_speed / (2.0 * math.sqrt(params.a_max * params.b))
    s_star = np.maximum(s_star, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        interaction = np.where(np.isfinite(gap), (s_star / np.where(gap > 0, gap, 1.0)) ** 2, 0.0)
    accel = params.a_max * (free - interaction)
    accel = np.where(gap > 0, accel, params.a_min)
    return np.clip(accel, params.a_min, params.a_max)


def idm_accel(follower, leader, params: IDMParams, length: float = 4.5) -> float:
    """Scalar IDM for one follower; ``leader`` is a state or ``None``."""
    follower = np.asarray(follower, dtype=float)
    if leader is None:
        return float(idm_acceleration(follower[V], np.inf, 0.0, params))
    leader = np.asarray(leader, dtype=float)
    gap = leader[X] - follower[X] - length
    return float(idm_acceleration(follower[V], gap, follower[V] - leader[V], params))


class BehaviorKind(str, enum.Enum):
    PROBABILISTIC = "probabilistic"
    UNCOOPERATIVE = "uncooperative"
    COOPERATIVE = "cooperative"


@dataclass(frozen=True)
class BehaviorModel:
    kind: BehaviorKind = BehaviorKind.PROBABILISTIC
    p_yield: float = 0.5
    idm: IDMParams = field(default_factory=IDMParams)
    cooperative_spacing: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.p_yield <= 1.0:
            raise ValueError("p_yield must lie in [0, 1]")

    @property
    def effective_idm(self) -> IDMParams:
        if self.kind is BehaviorKind.COOPERATIVE:
            return self.idm.scaled_spacing(self.cooperative_spacing)
        return self.idm


@dataclass(frozen=True)
class YieldZones:
    """Zone extents measured from the agent's centre: ``ahead`` is ego-minus-agent
    longitudinal distance, ``half_width`` the lateral distance from the agent's lane centerline."""

    forced_ahead: float = 6.75
    forced_half_width: float = 1.75
    probabilistic_ahead: float = 18.0
    probabilistic_half_width: float = 2.65

    def __post_init__(self):
        if self.probabilistic_ahead < self.forced_ahead or self.probabilistic_half_width < self.forced_half_width:
            raise ValueError("probabilistic zone must contain the forced zone")

    @classmethod
    def from_geometry(cls, geom: VehicleGeometry, lane_width: float) -> "YieldZones":
        return cls(
            forced_ahead=1.5 * geom.length,
            forced_half_width=0.5 * lane_width,
            probabilistic_ahead=4.0 * geom.length,
            probabilistic_half_width=0.5 * lane_width + 0.5 * geom.width,
        )

    def classify(self, ego, agents):
        """Boolean masks (forced, probabilistic) over agents; the probabilistic mask excludes forced."""
        ego = np.asarray(ego)
        agents = np.asarray(agents)
        ahead = ego[..., None, X] - agents[..., X]
        lateral = np.abs(ego[..., None, Y] - agents[..., Y])
        forced = (ahead >= 0) & (ahead <= self.forced_ahead) & (lateral <= self.forced_half_width)
        prob = (ahead >= 0) & (ahead <= self.probabilistic_ahead) & (lateral <= self.probabilistic_half_width)
        return forced, prob & ~forced


def same_lane_leaders(agents: np.ndarray, lane_width: float):
    """Index of each agent's nearest same-lane predecessor (-1 if none).

    Works on (..., N, 4) arrays.
    """
    dx = agents[..., None, :, X] - agents[..., :, None, X]
    dy = np.abs(agents[..., None, :, Y] - agents[..., :, None, Y])
    valid = (dx > 0) & (dy < 0.5 * lane_width)
    masked = np.where(valid, dx, np.inf)
    idx = np.argmin(masked, axis=-1)
    has = np.isfinite(np.min(masked, axis=-1))
    return np.where(has, idx, -1)


def select_leader(
    agent_index: int,
    agents: np.ndarray,
    ego: np.ndarray,
    zones: YieldZones,
    behavior: BehaviorModel,
    rng: np.random.Generator,
    lane_width: float = 3.5,
):
    """Return ``(leader_state_or_None, yielded)`` for one agent."""
    agents = np.asarray(agents, dtype=float)
    ego = np.asarray(ego, dtype=float)
    me = agents[agent_index]
    lead_idx = same_lane_leaders(agents, lane_width)[agent_index]
    leader = agents[lead_idx] if lead_idx >= 0 else None

    forced, prob = zones.classify(ego, me[None, :])
    yielded = bool(forced[0])
    if not yielded and prob[0]:
        if behavior.kind is BehaviorKind.COOPERATIVE:
            yielded = True
        elif behavior.kind is BehaviorKind.PROBABILISTIC:
            yielded = bool(rng.random() < behavior.p_yield)
    if yielded and (leader is None or ego[X] < leader[X]):
        return ego, True
    return leader, yielded


@dataclass(frozen=True)
class ScenarioConfig:
    lane_width: float = 3.5
    lane_centers: tuple[float, ...] = (0.0, 3.5)
    ego_lane: int = 0
    target_lane: int = 1
    n_vehicles: int = 5
    v_ref: float = 2.5
    dv_ref: float = 1.0
    dx_init: float = 1.0
    dv_init: float = 1.0
    shared_speed_noise: bool = True  # one initial-speed perturbation for the whole platoon
    ego_offset: float = 0.0
    gap_factor: float = 1.0  # initial bumper gaps relative to the IDM equilibrium gap
    # True: traffic cruises at the ego's perturbed reference speed; False: at the
    # nominal v_ref while only the ego's reference is perturbed
    traffic_at_ego_reference: bool = True
    max_steps: int = 200
    success_tolerance: float = 0.3
    success_steps: int = 5
    behavior: BehaviorModel = field(default_factory=BehaviorModel)
    zones: YieldZones | None = None

    @property
    def road_boundaries(self) -> tuple[float, float]:
        half = 0.5 * self.lane_width
        return (min(self.lane_centers) - half, max(self.lane_centers) + half)

    @property
    def target_y(self) -> float:
        return self.lane_centers[self.target_lane]


@dataclass
class World:
    t: int
    ego: np.ndarray
    agents: np.ndarray
    v_ref: float
    yielded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    v_traffic: float | None = None  # desired speed of the agents; defaults to v_ref

    @property
    def traffic_speed(self) -> float:
        return self.v_ref if self.v_traffic is None else self.v_traffic


def initial_world(cfg: ScenarioConfig, geom: VehicleGeometry, rng: np.random.Generator) -> World:
    """Platoon of agents at IDM equilibrium spacing, ego alongside its middle."""
    v_ref = cfg.v_ref + rng.uniform(-cfg.dv_ref, cfg.dv_ref)
    v_traffic = v_ref if cfg.traffic_at_ego_reference else cfg.v_ref
    idm = cfg.behavior.effective_idm
    spacing = geom.length + cfg.gap_factor * idm.equilibrium_gap(v_traffic)
    n = cfg.n_vehicles
    slots = (np.arange(n) - (n - 1) / 2.0)[::-1] * spacing
    x = slots + cfg.ego_offset + rng.uniform(-cfg.dx_init, cfg.dx_init, n)
    dv = rng.uniform(-cfg.dv_init, cfg.dv_init, 1 if cfg.shared_speed_noise else n)
    v = np.maximum(v_traffic + dv, 0.0) * np.ones(n)
    agents = np.zeros((n, 4))
    agents[:, X] = x
    agents[:, Y] = cfg.target_y
    agents[:, V] = v
    ego = np.array([0.0, cfg.lane_centers[cfg.ego_lane], 0.0, v_ref])
    return World(t=0, ego=ego, agents=agents, v_ref=v_ref, yielded=np.zeros(n, dtype=bool), v_traffic=v_traffic)


def agent_accelerations(world: World, cfg: ScenarioConfig, geom: VehicleGeometry, rng: np.random.Generator):
    zones = cfg.zones or YieldZones.from_geometry(geom, cfg.lane_width)
    idm = replace(cfg.behavior.effective_idm, v0=world.traffic_speed)
    n = len(world.agents)
    accel = np.zeros(n)
    yielded = np.zeros(n, dtype=bool)
    for i in range(n):
        leader, yielded[i] = select_leader(i, world.agents, world.ego, zones, cfg.behavior, rng, cfg.lane_width)
        accel[i] = idm_accel(world.agents[i], leader, idm, geom.length)
    return accel, yielded


def sim_step(world: World, ego_control, cfg: ScenarioConfig, geom: VehicleGeometry, dt: float,
             rng: np.random.Generator) -> World:
    accel, yielded = agent_accelerations(world, cfg, geom, rng)
    agent_controls = np.zeros((len(world.agents), 2))
    agent_controls[:, 1] = accel
    agents = step(world.agents, agent_controls, geom, dt) if len(world.agents) else world.agents.copy()
    ego = step(world.ego, np.asarray(ego_control, dtype=float), geom, dt)
    return World(t=world.t + 1, ego=ego, agents=agents, v_ref=world.v_ref, yielded=yielded,
                 v_traffic=world.v_traffic)


def circle_centers(states, geom: VehicleGeometry) -> np.ndarray:
    """Three circle centres per vehicle along its axis, shape (..., 3, 2)."""
    states = np.asarray(states, dtype=float)
    offsets = np.array([-geom.length / 3.0, 0.0, geom.length / 3.0])
    c, s = np.cos(states[..., 2]), np.sin(states[..., 2])
    cx = states[..., None, X] + offsets * c[..., None]
    cy = states[..., None, Y] + offsets * s[..., None]
    return np.stack([cx, cy], axis=-1)


def circle_radius(geom: VehicleGeometry) -> float:
    return math.hypot(geom.length / 6.0, geom.width / 2.0)


def detect_collision(ego, agents, geom: VehicleGeometry) -> bool:
    agents = np.asarray(agents, dtype=float).reshape(-1, 4)
    if agents.size == 0:
        return False
    ce = circle_centers(ego, geom)  # (3, 2)
    ca = circle_centers(agents, geom)  # (N, 3, 2)
    d = np.linalg.norm(ca[:, :, None, :] - ce[None, None, :, :], axis=-1)
    return bool(np.any(d < 2.0 * circle_radius(geom)))


class Status(str, enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass
class EpisodeRecord:
    """Per-step log of one episode. ``steps[k]`` holds the world before the
    k-th control was applied, the control itself and planner diagnostics."""

    dt: float
    v_ref: float
    steps: list[dict] = field(default_factory=list)
    status: Status = Status.RUNNING
    merge_step: int | None = None
    meta: dict = field(default_factory=dict)

    def append(self, world: World, control=None, **extra) -> None:
        entry = {
            "t": world.t,
            "time": round(world.t * self.dt, 10),
            "ego": [float(a) for a in world.ego],
            "agents": [[float(a) for a in row] for row in world.agents],
        }
        if control is not None:
            entry["control"] = [float(c) for c in control]
        entry.update(extra)
        self.steps.append(entry)

    def header(self) -> dict:
        return {"record": "header", "dt": self.dt, "v_ref": self.v_ref, "status": self.status.value,
                "merge_step": self.merge_step, "meta": self.meta}

    def write_jsonl(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for entry in self.steps:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        tmp.replace(path)

    @classmethod
    def read_jsonl(cls, path) -> "EpisodeRecord":
        with Path(path).open() as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        head, steps = lines[0], lines[1:]
        return cls(dt=head["dt"], v_ref=head["v_ref"], steps=steps, status=Status(head["status"]),
                   merge_step=head["merge_step"], meta=head.get("meta", {}))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["status"] = self.status.value
        return out

"""Experiment configuration: nested dataclasses loaded from / dumped to YAML."""
from __future__ import annotations

import dataclasses
import enum
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynamics import ControlBounds, VehicleGeometry
from .planner import PlannerConfig, WeightRule
from .prediction import PredictorKind
from .traffic_sim import BehaviorKind, ScenarioConfig


@dataclass(frozen=True)
class Cell:
    behavior: BehaviorKind
    predictor: PredictorKind
    spline_prior: bool = True

    @property
    def name(self) -> str:
        prior = "prior" if self.spline_prior else "noprior"
        return f"{self.behavior.value}-{self.predictor.value}-{prior}"

    @classmethod
    def parse(cls, text: str) -> "Cell":
        """``behavior:predictor[:on|off]``."""
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad grid cell {text!r}")
        prior = True if len(parts) == 2 else parts[2].lower() in ("on", "true", "1", "prior")
        return cls(BehaviorKind(parts[0]), PredictorKind(parts[1]), prior)


_BEHAVIORS = tuple(BehaviorKind)
_PREDICTORS = (PredictorKind.INTERACTIVE_IDM, PredictorKind.CONSTANT_VELOCITY, PredictorKind.ALWAYS_YIELD_IDM)

GRIDS = {
    "table": tuple(Cell(b, p) for b in _BEHAVIORS for p in _PREDICTORS),
    "spline": (Cell(BehaviorKind.PROBABILISTIC, PredictorKind.INTERACTIVE_IDM, True),
               Cell(BehaviorKind.PROBABILISTIC, PredictorKind.INTERACTIVE_IDM, False)),
}
for _b in _BEHAVIORS:
    GRIDS[_b.value] = tuple(Cell(_b, p) for p in _PREDICTORS)


def parse_grid(text: str) -> tuple[Cell, ...]:
    if text in GRIDS:
        return GRIDS[text]
    return tuple(Cell.parse(part) for part in text.split(",") if part.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    predictor_p_yield: float = 0.5
    # with the prior switched off the sampling distribution is Gaussian again,
    # so the importance-sampling weights apply
    noprior_weight_rule: WeightRule = WeightRule.STANDARD
    cells: tuple[Cell, ...] = GRIDS["table"]
    runs: int = 40
    base_seed: int = 0
    workers: int = 1

    @property
    def geometry(self) -> VehicleGeometry:
        return self.planner.geometry

    @property
    def bounds(self) -> ControlBounds:
        return self.planner.bounds


def _build(tp, value):
    origin = typing.get_origin(tp)
    if value is None:
        return None
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return _build(args[0], value)
    if dataclasses.is_dataclass(tp):
        if isinstance(value, tp):
            return value
        if tp is Cell and isinstance(value, str):
            return Cell.parse(value)
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        unknown = set(value) - names
        if unknown:
            raise ValueError(f"unknown keys for {tp.__name__}: {sorted(unknown)}")
        return tp(**{k: _build(hints[k], v) for k, v in value.items()})
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(value)
    if origin is tuple:
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_build(args[0], v) for v in value)
        return tuple(_build(a, v) for a, v in zip(args, value))
    if tp is float:
        return float(value)
    if tp is int:
        return int(value)
    if tp is bool:
        return bool(value)
    return value


def from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    if isinstance(data.get("cells"), str):
        data["cells"] = parse_grid(data["cells"])
    return _build(ExperimentConfig, data)


def _plain(value):
    if dataclasses.is_dataclass(value):
        if isinstance(value, Cell):
            return f"{value.behavior.value}:{value.predictor.value}:{'on' if value.spline_prior else 'off'}"
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg)


def load_config(path) -> ExperimentConfig:
    with Path(path).open() as fh:
        return from_dict(yaml.safe_load(fh))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)

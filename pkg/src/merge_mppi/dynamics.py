"""Discrete-time kinematic bicycle model.

States are arrays whose last axis is ``[x, y, psi, v]`` and controls arrays
whose last axis is ``[delta, a]``. Every function broadcasts over leading
axes, so the same code steps one vehicle or a (K, ...) batch of samples.
Heading is never wrapped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

X, Y, PSI, V = 0, 1, 2, 3
STEER, ACCEL = 0, 1


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 0.0

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = np.asarray(arr, dtype=float)
        return cls(*(float(a) for a in arr[:4]))


@dataclass(frozen=True)
class ControlInput:
    delta: float = 0.0
    a: float = 0.0

    @property
    def array(self) -> np.ndarray:
        return np.array([self.delta, self.a], dtype=float)


@dataclass(frozen=True)
class VehicleGeometry:
    l_f: float = 1.4
    l_r: float = 1.4
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        if min(self.l_f, self.l_r, self.length, self.width) <= 0:
            raise InvalidInputError("vehicle geometry must be positive")
        if self.length < self.l_f + self.l_r:
            raise InvalidInputError("length must cover the wheelbase")


@dataclass(frozen=True)
class ControlBounds:
    steer_bounds: tuple[float, float] = (-0.1, 0.1)
    accel_bounds: tuple[float, float] = (-0.5, 0.5)

    @property
    def low(self) -> np.ndarray:
        return np.array([self.steer_bounds[0], self.accel_bounds[0]])

    @property
    def high(self) -> np.ndarray:
        return np.array([self.steer_bounds[1], self.accel_bounds[1]])

    def clamp(self, controls) -> np.ndarray:
        return np.clip(controls, self.low, self.high)


def _as_array(value, size: int) -> np.ndarray:
    if isinstance(value, (VehicleState, ControlInput)):
        return value.array
    arr = np.asarray(value, dtype=float)
    if arr.shape[-1:] != (size,):
        raise InvalidInputError(f"expected trailing dimension {size}, got shape {arr.shape}")
    return arr


def slip_angle(delta, geom: VehicleGeometry):
    return np.arctan(geom.l_r / (geom.l_f + geom.l_r) * np.tan(delta))


def _step(state: np.ndarray, control: np.ndarray, geom: VehicleGeometry, dt: float) -> np.ndarray:
    x, y, psi, v = state[..., X], state[..., Y], state[..., PSI], state[..., V]
    beta = slip_angle(control[..., STEER], geom)
    out = np.empty(np.broadcast_shapes(state.shape, control.shape[:-1] + (4,)))
    out[..., X] = x + v * np.cos(psi + beta) * dt
    out[..., Y] = y + v * np.sin(psi + beta) * dt
    out[..., PSI] = psi + v / geom.l_r * np.sin(beta) * dt
    out[..., V] = np.maximum(v + control[..., ACCEL] * dt, 0.0)
    return out


def step(state, control, geom: VehicleGeometry, dt: float) -> np.ndarray:
    """Advance ``state`` by one step of length ``dt``.

    ``control`` is assumed to be clamped already. Speed is floored at zero.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    state = _as_array(state, 4)
    control = _as_array(control, 2)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(control))):
        raise InvalidInputError("non-finite state or control")
    return _step(state, control, geom, dt)


def rollout(initial, controls, geom: VehicleGeometry, dt: float) -> np.ndarray:
    """Roll ``initial`` forward through ``controls`` (shape (..., H, 2)).

    Returns the H successor states, shape (..., H, 4); the initial state is
    not included.
    """
    initial = _as_array(initial, 4)
    controls = _as_array(controls, 2)
    if controls.ndim < 2 or controls.shape[-2] < 1:
        raise InvalidInputError("need at least one control")
    horizon = controls.shape[-2]
    batch = np.broadcast_shapes(initial.shape[:-1], controls.shape[:-2])
    states = np.empty(batch + (horizon, 4))
    current = np.broadcast_to(initial, batch + (4,))
    for k in range(horizon):
        current = step(current, controls[..., k, :], geom, dt)
        states[..., k, :] = current
    return states

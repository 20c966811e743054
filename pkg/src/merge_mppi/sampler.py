"""Control-sequence sampling with lane-change spline priors.

For every neighbouring lane a cubic Hermite curve is laid from the ego to the
lane centre and tracked in closed loop (PID on speed, Stanley on steering).
The resulting control sequence is the mean for ``M`` of the ``K`` samples;
the rest are drawn around the warm-started MPPI mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import PSI, V, X, Y, ControlBounds, VehicleGeometry, step

LEFT, RIGHT, NOMINAL = "left", "right", "nominal"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    K: int = 1500
    M: int = 150
    # over [delta, a]: the larger variance belongs to acceleration
    sigma: tuple[tuple[float, float], tuple[float, float]] = ((1e-3, 0.0), (0.0, 0.1))
    sigma_spline: tuple[tuple[float, float], tuple[float, float]] = ((5e-4, 0.0), (0.0, 0.1))
    use_spline_prior: bool = True

    def __post_init__(self):
        if self.K < 1 or self.M < 0:
            raise ConfigError("K must be positive and M non-negative")
        if self.use_spline_prior and self.K < 2 * self.M:
            raise ConfigError("K must cover the spline-prior samples")


@dataclass(frozen=True)
class TrackerGains:
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.1
    stanley_k: float = 0.5
    stanley_softening: float = 0.1


@dataclass(frozen=True)
class SplineReference:
    waypoints: np.ndarray  # (H, 2) achieved positions
    controls: np.ndarray  # (H, 2)
    target: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # (H, 2) spline points


def hermite(p0, m0, p1, m1, s):
    """Cubic Hermite curve evaluated at parameters ``s`` in [0, 1]; returns (len(s), dim)."""
    s = np.asarray(s, dtype=float)[..., None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * np.asarray(p0) + h10 * np.asarray(m0) + h01 * np.asarray(p1) + h11 * np.asarray(m1)


def build_spline(ego, target_y: float, horizon: int, dt: float, v_ref: float | None = None) -> np.ndarray:
    """Lane-change curve from the ego position to ``target_y``, sampled at H future points.

    The start tangent is the ego velocity vector, the end tangent ``(v_ref, 0)``.
    The curve spans the distance covered at the current speed (floored at
    half of ``v_ref`` so a stopped ego still gets a usable curve).
    """
    ego = np.asarray(ego, dtype=float)
    v_ref = ego[V] if v_ref is None else v_ref
    duration = horizon * dt
    speed = max(ego[V], 0.5 * v_ref)
    p0 = ego[[X, Y]]
    p1 = np.array([ego[X] + speed * duration, target_y])
    m0 = duration * speed * np.array([math.cos(ego[PSI]), math.sin(ego[PSI])])
    m1 = duration * np.array([v_ref, 0.0])
    return hermite(p0, m0, p1, m1, np.arange(1, horizon + 1) / horizon)


def _project(path: np.ndarray, point: np.ndarray):
    """Signed lateral offset of ``path`` relative to ``point`` and the path heading there."""
    seg = np.diff(path, axis=0)
    seg_len2 = np.maximum(np.sum(seg**2, axis=1), 1e-12)
    rel = point - path[:-1]
    t = np.clip(np.sum(rel * seg, axis=1) / seg_len2, 0.0, 1.0)
    foot = path[:-1] + t[:, None] * seg
    i = int(np.argmin(np.sum((foot - point) ** 2, axis=1)))
    heading = math.atan2(seg[i, 1], seg[i, 0])
    normal = np.array([-math.sin(heading), math.cos(heading)])
    # measured along the segment normal, so past the last vertex this is the
    # offset from the segment's straight extension
    return float(normal @ (foot[i] - point)), heading


def track_spline(ego, waypoints, geom: VehicleGeometry, dt: float, v_ref: float,
                 bounds: ControlBounds | None = None, gains: TrackerGains | None = None) -> SplineReference:
    bounds = bounds or ControlBounds()
    gains = gains or TrackerGains()
    state = np.asarray(ego, dtype=float)
    waypoints = np.asarray(waypoints, dtype=float)
    path = np.vstack([state[[X, Y]], waypoints])
    horizon = len(waypoints)
    controls = np.zeros((horizon, 2))
    achieved = np.zeros((horizon, 2))
    integral, prev_err = 0.0, v_ref - state[V]
    for k in range(horizon):
        err = v_ref - state[V]
        integral += err * dt
        accel = gains.kp * err + gains.ki * integral + gains.kd * (err - prev_err) / dt
        prev_err = err

        front = state[[X, Y]] + geom.l_f * np.array([math.cos(state[PSI]), math.sin(state[PSI])])
        cte, path_heading = _project(path, front)
        heading_err = math.atan2(math.sin(path_heading - state[PSI]), math.cos(path_heading - state[PSI]))
        steer = heading_err + math.atan2(gains.stanley_k * cte, state[V] + gains.stanley_softening)

        controls[k] = bounds.clamp([steer, accel])
        state = step(state, controls[k], geom, dt)
        achieved[k] = state[[X, Y]]
    return SplineReference(achieved, controls, waypoints)


def _sqrt_cov(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    w, vecs = np.linalg.eigh(cov)
    if np.any(w < -1e-12):
        raise ConfigError("sampling covariance must be positive semi-definite")
    return vecs * np.sqrt(np.maximum(w, 0.0))


def draw_samples(mean, spline_refs: Mapping[str, SplineReference | None], cfg: SamplingConfig,
                 rng: np.random.Generator, bounds: ControlBounds | None = None):
    """Draw the K control sequences.

    Returns ``(samples, tags)``: samples (K, H, 2) clamped to ``bounds`` and
    a (K,) array of provenance tags (``left``, ``right``, ``nominal``). Prior
    blocks come first; a missing lane's budget goes to the nominal block.
    """
    bounds = bounds or ControlBounds()
    mean = np.asarray(mean, dtype=float)
    horizon = mean.shape[0]
    means, tags = [], []
    if cfg.use_spline_prior:
        for side in (LEFT, RIGHT):
            ref = spline_refs.get(side) if spline_refs else None
            if ref is not None:
                means.append(np.broadcast_to(ref.controls, (cfg.M, horizon, 2)))
                tags += [side] * cfg.M
    n_prior = len(tags)
    if n_prior > cfg.K:
        raise ConfigError("K is smaller than the spline-prior sample budget")
    n_nominal = cfg.K - n_prior
    means.append(np.broadcast_to(mean, (n_nominal, horizon, 2)))
    tags += [NOMINAL] * n_nominal

    noise = rng.standard_normal((cfg.K, horizon, 2))
    perturb = np.empty_like(noise)
    perturb[:n_prior] = noise[:n_prior] @ _sqrt_cov(cfg.sigma_spline).T
    perturb[n_prior:] = noise[n_prior:] @ _sqrt_cov(cfg.sigma).T
    samples = np.concatenate(means, axis=0) + perturb
    return bounds.clamp(samples), np.array(tags)

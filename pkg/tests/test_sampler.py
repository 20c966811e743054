import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merge_mppi.dynamics import ControlBounds, VehicleGeometry
from merge_mppi.sampler import (LEFT, NOMINAL, RIGHT, ConfigError, SamplingConfig, SplineReference, build_spline,
                                draw_samples, hermite, track_spline)

GEOM = VehicleGeometry()
H, DT = 17, 0.3


def test_hermite_endpoints_and_midpoint():
    pts = hermite([0.0], [1.0], [1.0], [1.0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(pts[:, 0], [0.0, 0.5, 1.0])
    # h00(1/2) = h01(1/2) = 1/2, h10(1/2) = 1/8, h11(1/2) = -1/8
    mid = hermite([1.0], [2.0], [2.0], [0.0], [0.5])
    assert mid[0, 0] == pytest.approx(0.5 * 1 + 0.125 * 2 + 0.5 * 2)


def test_spline_shape_and_end():
    ego = np.array([0.0, 0.0, 0.0, 2.5])
    pts = build_spline(ego, 3.5, H, DT, 2.5)
    assert pts.shape == (H, 2)
    np.testing.assert_allclose(pts[-1], [2.5 * H * DT, 3.5])
    assert np.all(np.diff(pts[:, 0]) > 0)
    assert np.all(np.diff(pts[:, 1]) >= -1e-12)


def test_spline_to_own_lane_is_straight():
    pts = build_spline(np.array([0.0, 0.0, 0.0, 2.5]), 0.0, H, DT, 2.5)
    np.testing.assert_allclose(pts[:, 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(pts[:, 0], 2.5 * DT * np.arange(1, H + 1))


def test_stopped_ego_still_gets_a_curve():
    pts = build_spline(np.array([0.0, 0.0, 0.0, 0.0]), 3.5, H, DT, 2.5)
    assert pts[-1, 0] > 0


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-50, 50), y=st.floats(-1, 1), v=st.floats(0.5, 4), target=st.floats(-4, 4))
def test_spline_translation_equivariant(x, y, v, target):
    base = build_spline(np.array([0.0, 0.0, 0.0, v]), target - y, H, DT, 2.5)
    moved = build_spline(np.array([x, y, 0.0, v]), target, H, DT, 2.5)
    np.testing.assert_allclose(moved, base + [x, y], atol=1e-9)


def test_tracker_reaches_target_lane_with_wide_steering():
    ego = np.array([0.0, 0.0, 0.0, 2.5])
    bounds = ControlBounds(steer_bounds=(-0.5, 0.5))
    ref = track_spline(ego, build_spline(ego, 3.5, H, DT, 2.5), GEOM, DT, 2.5, bounds)
    assert abs(ref.waypoints[-1, 1] - 3.5) <= 0.3
    assert ref.controls.shape == (H, 2)


def test_tracker_moves_towards_target_within_default_bounds():
    ego = np.array([0.0, 0.0, 0.0, 2.5])
    bounds = ControlBounds()
    ref = track_spline(ego, build_spline(ego, 3.5, H, DT, 2.5), GEOM, DT, 2.5, bounds)
    assert np.all(ref.controls >= bounds.low) and np.all(ref.controls <= bounds.high)
    assert ref.waypoints[-1, 1] > 1.5
    assert ref.controls[0, 0] > 0


def test_tracker_holds_speed_on_straight_path():
    ego = np.array([0.0, 0.0, 0.0, 2.0])
    ref = track_spline(ego, build_spline(ego, 0.0, H, DT, 2.0), GEOM, DT, 2.0)
    np.testing.assert_allclose(ref.controls, 0.0, atol=1e-12)


def fake_ref(value):
    return SplineReference(np.zeros((H, 2)), np.full((H, 2), value))


def test_draw_samples_layout():
    cfg = SamplingConfig(K=100, M=10)
    rng = np.random.default_rng(0)
    samples, tags = draw_samples(np.zeros((H, 2)), {LEFT: fake_ref(0.05), RIGHT: fake_ref(-0.05)}, cfg, rng)
    assert samples.shape == (100, H, 2)
    assert list(tags[:10]) == [LEFT] * 10 and list(tags[10:20]) == [RIGHT] * 10
    assert np.all(tags[20:] == NOMINAL)


def test_missing_lane_budget_goes_to_nominal():
    cfg = SamplingConfig(K=100, M=10)
    _, tags = draw_samples(np.zeros((H, 2)), {LEFT: fake_ref(0.05), RIGHT: None}, cfg, np.random.default_rng(0))
    assert np.sum(tags == LEFT) == 10 and np.sum(tags == NOMINAL) == 90


def test_prior_disabled_ignores_references():
    cfg = SamplingConfig(K=50, M=10, use_spline_prior=False)
    _, tags = draw_samples(np.zeros((H, 2)), {LEFT: fake_ref(0.05)}, cfg, np.random.default_rng(0))
    assert np.all(tags == NOMINAL)


def test_samples_respect_bounds():
    cfg = SamplingConfig(K=500, M=0, sigma=((1.0, 0.0), (0.0, 1.0)))
    bounds = ControlBounds()
    samples, _ = draw_samples(np.zeros((H, 2)), {}, cfg, np.random.default_rng(0), bounds)
    assert np.all(samples >= bounds.low) and np.all(samples <= bounds.high)


def test_sample_statistics_match_covariance():
    cfg = SamplingConfig(K=1500, M=150)
    samples, tags = draw_samples(np.zeros((H, 2)), {LEFT: fake_ref(0.0)}, cfg, np.random.default_rng(1),
                                 ControlBounds(steer_bounds=(-10, 10), accel_bounds=(-10, 10)))
    nominal = samples[tags == NOMINAL].reshape(-1, 2)
    prior = samples[tags == LEFT].reshape(-1, 2)
    np.testing.assert_allclose(np.var(nominal, axis=0), np.diag(cfg.sigma), rtol=0.05)
    np.testing.assert_allclose(np.var(prior, axis=0), np.diag(cfg.sigma_spline), rtol=0.1)


def test_same_seed_same_samples():
    cfg = SamplingConfig(K=60, M=5)
    refs = {LEFT: fake_ref(0.02)}
    a, _ = draw_samples(np.zeros((H, 2)), refs, cfg, np.random.default_rng(9))
    b, _ = draw_samples(np.zeros((H, 2)), refs, cfg, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_config_validation():
    with pytest.raises(ConfigError):
        SamplingConfig(K=10, M=10)
    with pytest.raises(ConfigError):
        draw_samples(np.zeros((H, 2)), {}, SamplingConfig(K=5, M=0, sigma=((1, 2), (2, 1))),
                     np.random.default_rng(0))

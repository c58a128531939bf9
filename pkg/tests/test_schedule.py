import numpy as np
import pytest

from recfm.schedule import (
    ALPHA_FLOOR,
    build_schedule,
    lerp_state,
    sample_time_and_scale,
    target_velocity,
)


def test_lerp_endpoints():
    x0 = np.array([1.0, -2.0])
    x1 = np.array([3.0, 5.0])
    np.testing.assert_array_equal(lerp_state(x0, x1, 0.0), x0)
    np.testing.assert_array_equal(lerp_state(x0, x1, 1.0), x1)


def test_lerp_midpoint_arithmetic():
    assert lerp_state(np.array([0.0]), np.array([2.0]), 0.25)[0] == 0.5


def test_lerp_validation():
    with pytest.raises(ValueError):
        lerp_state(np.zeros(2), np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        lerp_state(np.zeros(2), np.zeros(2), 1.5)


def test_target_velocity():
    np.testing.assert_array_equal(target_velocity(np.zeros(2), np.zeros(2)), np.zeros(2))
    np.testing.assert_array_equal(
        target_velocity(np.array([0.0, 0.0]), np.array([3.0, 4.0])), [3.0, 4.0])
    with pytest.raises(ValueError):
        target_velocity(np.zeros(2), np.zeros(3))


def test_scaled_target_is_scale_times_velocity():
    v = target_velocity(np.array([1.0, 1.0]), np.array([2.0, 3.0]))
    sched = build_schedule(2, 0.5, 0.3)
    np.testing.assert_array_equal(sched.scales[1] * v, 0.5 * v)


def test_lerp_plus_remaining_velocity_identity():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=8)
    x1 = rng.normal(size=8)
    for t in (0.0, 0.3, 0.77, 1.0):
        lhs = lerp_state(x0, x1, t) + (1.0 - t) * target_velocity(x0, x1)
        np.testing.assert_allclose(lhs, x1, atol=1e-12)


def test_sample_support():
    rng = np.random.default_rng(0)
    t, alpha = sample_time_and_scale(rng, size=20000)
    assert np.all(t >= 0.0) and np.all(t <= 1.0)
    assert np.all(alpha >= np.minimum(t, 1.0) - 1e-15)
    assert np.all(alpha <= 1.0)
    tau2 = t / alpha
    assert np.all(tau2 <= 1.0 + 1e-12)
    assert np.all(tau2 >= t - 1e-12)


def test_sample_time_mean():
    rng = np.random.default_rng(123)
    t, _ = sample_time_and_scale(rng, size=100_000)
    assert abs(t.mean() - 0.5) < 0.005


def test_sample_conditional_support():
    rng = np.random.default_rng(5)
    draws = [sample_time_and_scale(rng) for _ in range(2000)]
    high = [a for t, a in draws if t > 0.9]
    assert high and all(a >= 0.9 for a in high)


def test_build_schedule_powers():
    sched = build_schedule(3, 0.5, 0.1)
    np.testing.assert_allclose(sched.scales, [1.0, 0.5, 0.25])


def test_build_schedule_degenerate_alpha_one():
    sched = build_schedule(2, 1.0, 0.37)
    assert sched.taus[1] == sched.taus[0] == 0.37


def test_build_schedule_tau_arithmetic():
    sched = build_schedule(2, 0.5, 0.2)
    assert sched.taus[1] == pytest.approx(0.4)


def test_build_schedule_clamps_deep_taus():
    # depth 3 with t > alpha^2 pushes the third aligned time past 1
    sched = build_schedule(3, 0.5, 0.3)
    assert sched.taus[2] == 1.0
    assert sched.clamped == 1


def test_build_schedule_rejects_tiny_alpha():
    with pytest.raises(ValueError):
        build_schedule(2, ALPHA_FLOOR / 2, 0.1)
    with pytest.raises(ValueError):
        build_schedule(0, 0.5, 0.1)


def test_build_schedule_pure():
    a = build_schedule(4, 0.7, 0.33)
    b = build_schedule(4, 0.7, 0.33)
    np.testing.assert_array_equal(a.scales, b.scales)
    np.testing.assert_array_equal(a.taus, b.taus)

import json

import numpy as np
import pytest

from recfm.datasets import gaussian_oracle_velocity
from recfm.verify import (
    consistency_pde_residual,
    estimate_acceleration,
    marginal_test,
    one_step_vs_secondary,
    save_report,
    shortcut_probe,
    truncation_study,
)


def oracle_field(x, t, alpha):
    return gaussian_oracle_velocity(np.asarray(x), t, alpha)


def points(n=32, d=2, seed=0, t_lo=0.1, t_hi=0.9):
    rng = np.random.default_rng(seed)
    return rng.uniform(-2, 2, size=(n, d)), rng.uniform(t_lo, t_hi, size=n)


# -- acceleration ---------------------------------------------------------------

def test_acceleration_constant_field():
    xs, ts = points()
    rep = estimate_acceleration(lambda x, t, a: np.full_like(np.asarray(x), 0.37), xs, ts)
    assert rep.stats["max_accel"] < 1e-8


def test_acceleration_advective_term():
    # v(x, t) = x gives a = (grad v) v = x
    xs = np.array([[2.0, 0.0], [0.0, -1.5]])
    ts = np.array([0.5, 0.5])
    rep = estimate_acceleration(lambda x, t, a: np.asarray(x, dtype=np.float64), xs, ts)
    table = np.array(rep.table, dtype=object)
    np.testing.assert_allclose([row[2] for row in rep.table], [2.0, 1.5], atol=1e-4)


def test_acceleration_temporal_term():
    # v(x, t) = t gives a = dv/dt = 1
    def fn(x, t, a):
        x = np.asarray(x)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64)[..., None], x.shape)
        return t.copy()

    xs, ts = points(n=8)
    rep = estimate_acceleration(fn, xs, ts)
    # per-point norm of a vector of ones is sqrt(d)
    np.testing.assert_allclose(rep.stats["mean_accel"], np.sqrt(2.0), atol=1e-4)


def test_acceleration_validation():
    xs, ts = points()
    with pytest.raises(ValueError):
        estimate_acceleration(oracle_field, xs, ts, fd_eps=1e-2)
    with pytest.raises(ValueError):
        estimate_acceleration(oracle_field, xs, np.zeros(xs.shape[0]))


# -- truncation study --------------------------------------------------------------

def test_truncation_constant_field_zero_error():
    field = lambda x, t, a: np.full_like(np.asarray(x), 0.8)
    x1 = np.random.default_rng(1).normal(size=(32, 2))
    rep = truncation_study(field, [1, 2, 4, 8], x1, reference_k=128)
    assert rep.stats["max_error"] <= 1e-12
    assert all(err <= 1e-12 for _, err in rep.table)


def test_truncation_linear_field_first_order():
    field = lambda x, t, a: np.asarray(x, dtype=np.float64)
    x1 = np.random.default_rng(2).normal(size=(64, 1))
    rep = truncation_study(field, [2, 4, 8, 16, 32], x1, reference_k=512)
    assert -1.2 <= rep.stats["slope"] <= -0.8


def test_truncation_reference_validation():
    field = lambda x, t, a: x
    with pytest.raises(ValueError):
        truncation_study(field, [2, 4], np.zeros((4, 1)), reference_k=32)


# -- marginal preservation -----------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
def test_marginal_oracle_passes(alpha):
    rep = marginal_test(oracle_field, alpha, n=20_000, steps=256, seed=3)
    assert rep.passed
    assert rep.stats["wasserstein_to_direct"] < 0.05


def test_marginal_reports_analytic_variance():
    rep = marginal_test(oracle_field, 0.5, n=5_000, steps=128, seed=4)
    assert rep.stats["analytic_var"] == pytest.approx(0.5)


# -- consistency residual ---------------------------------------------------------------

def test_consistency_exact_solutions():
    xs, ts = points(t_lo=0.1, t_hi=0.9)

    const_in_x = lambda x, t, a: np.full_like(np.asarray(x), 1.0) * np.asarray(a)
    rep = consistency_pde_residual(const_in_x, xs, ts)
    assert rep.stats["max_residual"] < 1e-9

    linear = lambda x, t, a: np.asarray(a) * np.asarray(x, dtype=np.float64)
    rep = consistency_pde_residual(linear, xs, ts)
    assert rep.stats["max_residual"] < 1e-9


def test_consistency_detects_violation():
    # v = t has t dv/dt + v - dv/dalpha = 2t - 0 != 0
    def fn(x, t, a):
        x = np.asarray(x)
        return np.broadcast_to(np.asarray(t, dtype=np.float64)[..., None], x.shape).copy()

    xs, ts = points(n=16)
    rep = consistency_pde_residual(fn, xs, ts)
    assert rep.stats["mean_residual"] > 0.1


def test_consistency_time_range_validated():
    xs, _ = points(n=4)
    with pytest.raises(ValueError):
        consistency_pde_residual(oracle_field, xs, np.full(4, 0.99))


# -- shortcut probe ----------------------------------------------------------------------

def test_shortcut_probe_straight_scaled_field():
    # straight trajectories with proper alpha scaling satisfy both constraints
    field = lambda x, t, a: np.asarray(a) * np.full_like(np.asarray(x, dtype=np.float64), 0.4)
    xs, ts = points(n=16, t_lo=0.1, t_hi=0.4)
    rep = shortcut_probe(field, [0.05, 0.1, 0.2], xs, ts)
    assert rep.stats["max_composition_residual"] < 1e-12
    assert rep.stats["scale_residual"] < 1e-9


def test_shortcut_probe_step_conditioned_mode():
    # a field constant in everything composes exactly when the slot is
    # read as the step size
    field = lambda x, t, a: np.full_like(np.asarray(x, dtype=np.float64), 0.4)
    xs, ts = points(n=8, t_lo=0.1, t_hi=0.4)
    rep = shortcut_probe(field, [0.05, 0.1], xs, ts, step_conditioned=True)
    assert rep.stats["max_composition_residual"] < 1e-12


def test_shortcut_probe_quadratic_field_order_two():
    field = lambda x, t, a: np.asarray(x, dtype=np.float64) ** 2
    xs, ts = points(n=32, t_lo=0.1, t_hi=0.4, seed=5)
    rep = shortcut_probe(field, [0.02, 0.04, 0.08, 0.16], xs, ts)
    assert 1.5 <= rep.stats["composition_order"] <= 2.5


def test_shortcut_probe_validation():
    xs, ts = points(n=4, t_lo=0.1, t_hi=0.4)
    with pytest.raises(ValueError):
        shortcut_probe(oracle_field, [0.3], xs, ts)
    with pytest.raises(ValueError):
        shortcut_probe(oracle_field, [0.25], xs, np.full(4, 0.8))


# -- one-step vs secondary law -------------------------------------------------------------

def test_one_step_and_secondary_follow_their_own_laws():
    # at the marginal-field optimum the two laws genuinely differ:
    # one Euler step of size alpha from data has variance (1-alpha)^2,
    # the integrated scaled trajectory reaches (1-alpha)^2 + alpha^2
    alpha = 0.5
    rep = one_step_vs_secondary(oracle_field, alpha, n=40_000, steps=256, seed=6)
    assert abs(rep.stats["one_step_mean"]) < 3 / np.sqrt(40_000)
    assert abs(rep.stats["secondary_mean"]) < 3 / np.sqrt(40_000)
    assert rep.stats["one_step_var"] == pytest.approx((1 - alpha) ** 2, abs=0.01)
    assert rep.stats["secondary_var"] == pytest.approx((1 - alpha) ** 2 + alpha ** 2,
                                                       abs=0.01)


def test_one_step_matches_secondary_for_straight_pair_field():
    # zero-acceleration regime: for a fixed endpoint pair the conditional
    # field is constant and one step of size alpha is exact
    x0 = np.array([[0.3]])
    x1 = np.array([[-1.2]])
    field = lambda x, t, a: np.broadcast_to(x1 - x0, np.asarray(x).shape)
    one = x0 + 0.5 * field(x0, 0.0, 1.0)
    from recfm.sampling import integrate_secondary

    # the pairwise secondary field is alpha * (x1 - x0)
    scaled = lambda x, t, a: a * field(x, t, a)
    end = integrate_secondary(scaled, x0, 0.5, 64)
    np.testing.assert_allclose(one, end, atol=1e-12)
    np.testing.assert_allclose(one, 0.5 * (x0 + x1), atol=1e-12)


# -- report I/O ------------------------------------------------------------------------------

def test_save_report_writes_json_and_csv(tmp_path):
    rep = marginal_test(oracle_field, 0.5, n=2000, steps=64, seed=7)
    save_report(rep, tmp_path)
    payload = json.loads((tmp_path / "marginal.json").read_text())
    assert payload["check"] == "marginal"
    assert payload["passed"] is True
    lines = (tmp_path / "marginal.csv").read_text().splitlines()
    assert lines[0].startswith("alpha,")
    assert len(lines) == 2


def test_reports_reproducible():
    a = marginal_test(oracle_field, 0.25, n=5000, steps=64, seed=8)
    b = marginal_test(oracle_field, 0.25, n=5000, steps=64, seed=8)
    assert a.stats == b.stats

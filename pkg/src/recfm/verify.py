"""Empirical checks of the method's structural claims: trajectory
acceleration, first-order Euler truncation decay, marginal preservation
of the scaled trajectories, the cross-scale coherence condition
t dv/dt + v = dv/dalpha at scale 1, and the step-composition probe.

Every check is a pure function of (field, seed, config) and reports a
stats dict plus a CSV-ready table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from .sampling import integrate_secondary
from .util import write_csv

__all__ = [
    "VerifyReport",
    "estimate_acceleration",
    "truncation_study",
    "marginal_test",
    "consistency_pde_residual",
    "shortcut_probe",
    "one_step_vs_secondary",
    "random_composite_gradcheck",
    "save_report",
]


@dataclass
class VerifyReport:
    check: str
    stats: dict
    table_header: list[str] = field(default_factory=list)
    table: list[list] = field(default_factory=list)
    passed: bool | None = None
    config: dict = field(default_factory=dict)


def save_report(report: VerifyReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"check": report.check, "stats": report.stats,
               "passed": report.passed, "config": report.config}
    with open(out / f"{report.check}.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    if report.table:
        write_csv(out / f"{report.check}.csv", report.table_header, report.table)


def _points(xs, ts):
    xs = np.asarray(xs, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    if ts.shape != (xs.shape[0],):
        raise ValueError(f"ts must be ({xs.shape[0]},), got {ts.shape}")
    return xs, ts


def estimate_acceleration(fn, xs, ts, fd_eps: float = 1e-4) -> VerifyReport:
    """Finite-difference estimate of a = dv/dt + (grad_x v) v at scale 1.

    The advective term is the directional derivative of v along its own
    unit direction, scaled back by |v|. Requires t in [fd_eps, 1-fd_eps].
    """
    if not 1e-6 <= fd_eps <= 1e-3:
        raise ValueError(f"fd_eps must lie in [1e-6, 1e-3], got {fd_eps}")
    xs, ts = _points(xs, ts)
    if np.any(ts < fd_eps) or np.any(ts > 1.0 - fd_eps):
        raise ValueError("points must satisfy fd_eps <= t <= 1 - fd_eps")

    v = np.asarray(fn(xs, ts, 1.0))
    dt_v = (np.asarray(fn(xs, ts + fd_eps, 1.0))
            - np.asarray(fn(xs, ts - fd_eps, 1.0))) / (2.0 * fd_eps)
    speed = np.linalg.norm(v, axis=1)
    unit = np.where(speed[:, None] > 0.0, v / np.maximum(speed, 1e-300)[:, None], 0.0)
    adv = (np.asarray(fn(xs + fd_eps * unit, ts, 1.0))
           - np.asarray(fn(xs - fd_eps * unit, ts, 1.0))) / (2.0 * fd_eps)
    adv = adv * speed[:, None]
    accel = dt_v + adv

    a_norm = np.linalg.norm(accel, axis=1)
    dt_norm = np.linalg.norm(dt_v, axis=1)
    adv_norm = np.linalg.norm(adv, axis=1)
    stats = {
        "mean_accel": float(a_norm.mean()),
        "max_accel": float(a_norm.max()),
        "mean_dt_term": float(dt_norm.mean()),
        "mean_advective_term": float(adv_norm.mean()),
    }
    table = [[i, float(ts[i]), float(a_norm[i]), float(dt_norm[i]), float(adv_norm[i])]
             for i in range(xs.shape[0])]
    return VerifyReport(check="acceleration", stats=stats,
                        table_header=["point", "t", "accel", "dt_term", "advective_term"],
                        table=table, config={"fd_eps": fd_eps, "n_points": xs.shape[0]})


def truncation_study(fn, k_list, x1_samples, reference_k: int) -> VerifyReport:
    """Generation error against a fine reference grid, with log-log slope.

    error(K) is the mean Euclidean distance between K-step and
    reference-K-step endpoints over the given noise samples; a fitted
    slope near -1 reflects first-order Euler decay.
    """
    k_list = sorted(int(k) for k in k_list)
    if not k_list or k_list[0] < 1:
        raise ValueError(f"bad k_list {k_list}")
    if reference_k < 16 * k_list[-1]:
        raise ValueError(f"reference_k must be >= 16 * max(k_list) = {16 * k_list[-1]}")
    x1 = np.asarray(x1_samples, dtype=np.float64)
    if x1.ndim == 1:
        x1 = x1[:, None]

    from .sampling import euler_k_step

    reference = euler_k_step(fn, x1, reference_k)
    errors = []
    for k in k_list:
        endpoint = euler_k_step(fn, x1, k)
        errors.append(float(np.mean(np.linalg.norm(endpoint - reference, axis=1))))

    positive = [e for e in errors if e > 0.0]
    if len(positive) == len(errors) and len(errors) >= 2:
        slope = float(np.polyfit(np.log(k_list), np.log(errors), 1)[0])
    else:
        slope = float("nan")
    stats = {"slope": slope, "reference_k": reference_k,
             "max_error": max(errors), "min_error": min(errors)}
    table = [[k, e] for k, e in zip(k_list, errors)]
    return VerifyReport(check="truncation", stats=stats,
                        table_header=["k", "error"], table=table,
                        config={"k_list": k_list, "reference_k": reference_k,
                                "n_samples": x1.shape[0]})


def marginal_test(fn, alpha: float, n: int, steps: int, seed: int = 0) -> VerifyReport:
    """Endpoint law of the scale-alpha trajectory vs the partial interpolant.

    Integrates the 1-D scaled field from n standard-normal data samples
    and compares the endpoint's mean/variance with the analytic law of
    (1 - alpha) x0 + alpha x1 (mean 0, variance (1-alpha)^2 + alpha^2),
    plus the 1-D Wasserstein distance to fresh direct interpolant draws.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n, 1))
    endpoint = integrate_secondary(fn, x0, alpha, steps)[:, 0]

    direct = (1.0 - alpha) * rng.standard_normal(n) + alpha * rng.standard_normal(n)
    var_analytic = (1.0 - alpha) ** 2 + alpha ** 2
    mean_bound = 3.0 / np.sqrt(n)
    var_bound = 5.0 / np.sqrt(n)
    mean_gap = abs(float(endpoint.mean()))
    var_gap = abs(float(endpoint.var()) - var_analytic)
    stats = {
        "alpha": alpha,
        "endpoint_mean": float(endpoint.mean()),
        "endpoint_var": float(endpoint.var()),
        "analytic_mean": 0.0,
        "analytic_var": var_analytic,
        "mean_gap": mean_gap,
        "var_gap": var_gap,
        "mean_bound": mean_bound,
        "var_bound": var_bound,
        "wasserstein_to_direct": float(wasserstein_distance(endpoint, direct)),
    }
    passed = bool(mean_gap < mean_bound and var_gap < var_bound)
    table = [[alpha, stats["endpoint_mean"], stats["endpoint_var"], var_analytic,
              mean_gap, var_gap, stats["wasserstein_to_direct"]]]
    return VerifyReport(check="marginal", stats=stats,
                        table_header=["alpha", "mean", "var", "analytic_var",
                                      "mean_gap", "var_gap", "wasserstein"],
                        table=table, passed=passed,
                        config={"n": n, "steps": steps, "seed": seed})


def consistency_pde_residual(fn, xs, ts, fd_eps: float = 1e-4,
                             alpha_eps: float = 1e-3) -> VerifyReport:
    """Mean |t dv/dt + v - dv/dalpha| at scale 1.

    dv/dt uses a central difference; dv/dalpha uses a one-sided backward
    difference since scales above 1 are outside the conditioning domain.
    Points must keep t in [0.05, 0.95].
    """
    xs, ts = _points(xs, ts)
    if np.any(ts < 0.05) or np.any(ts > 0.95):
        raise ValueError("points must satisfy 0.05 <= t <= 0.95")
    v = np.asarray(fn(xs, ts, 1.0))
    dt_v = (np.asarray(fn(xs, ts + fd_eps, 1.0))
            - np.asarray(fn(xs, ts - fd_eps, 1.0))) / (2.0 * fd_eps)
    da_v = (v - np.asarray(fn(xs, ts, 1.0 - alpha_eps))) / alpha_eps
    residual = np.mean(np.abs(ts[:, None] * dt_v + v - da_v), axis=1)
    stats = {"mean_residual": float(residual.mean()),
             "max_residual": float(residual.max())}
    table = [[i, float(ts[i]), float(residual[i])] for i in range(xs.shape[0])]
    return VerifyReport(check="consistency_pde", stats=stats,
                        table_header=["point", "t", "residual"], table=table,
                        config={"fd_eps": fd_eps, "alpha_eps": alpha_eps,
                                "n_points": xs.shape[0]})


def shortcut_probe(fn, d_list, xs, ts, step_conditioned: bool = False) -> VerifyReport:
    """Step-composition residual vs d, next to the infinitesimal residual.

    For each d, measures how far one step of size 2d lands from two
    chained steps of size d, and reports the scale-coherence residual of
    the same field for comparison. By default the third field slot stays
    pinned at 1 (the inference condition), so the composition residual
    reads off trajectory curvature and both residuals vanish for the
    straight scaled field; ``step_conditioned=True`` feeds 2d / d into
    the slot instead, matching step-size-parameterized networks.
    """
    d_list = sorted(float(d) for d in d_list)
    if not d_list or d_list[0] <= 0.0 or d_list[-1] > 0.25:
        raise ValueError(f"d values must lie in (0, 0.25], got {d_list}")
    xs, ts = _points(xs, ts)
    if np.any(ts > 1.0 - 2.0 * d_list[-1]):
        raise ValueError("points must satisfy t <= 1 - 2 * max(d)")

    ts_safe = np.clip(ts, 0.05, 0.95)
    h3 = consistency_pde_residual(fn, xs, ts_safe).stats["mean_residual"]

    rows = []
    residuals = []
    for d in d_list:
        big_slot, small_slot = (2.0 * d, d) if step_conditioned else (1.0, 1.0)
        big = xs + 2.0 * d * np.asarray(fn(xs, ts, big_slot))
        mid = xs + d * np.asarray(fn(xs, ts, small_slot))
        two = mid + d * np.asarray(fn(mid, ts + d, small_slot))
        r = float(np.mean(np.linalg.norm(big - two, axis=1)))
        residuals.append(r)
        rows.append([d, r, h3])

    if all(r > 0.0 for r in residuals) and len(residuals) >= 2:
        order = float(np.polyfit(np.log(d_list), np.log(residuals), 1)[0])
    else:
        order = float("nan")
    stats = {"composition_order": order, "scale_residual": h3,
             "max_composition_residual": max(residuals)}
    return VerifyReport(check="shortcut_probe", stats=stats,
                        table_header=["d", "composition_residual", "scale_residual"],
                        table=rows, config={"d_list": d_list, "n_points": xs.shape[0]})


def random_composite_gradcheck(n_graphs: int = 50, seed: int = 0,
                               eps: float = 1e-6) -> VerifyReport:
    """Tape gradients vs central differences on random composite graphs.

    Each graph chains a random selection of primitives (add, mul, tanh,
    gelu, square, rowscale, affine, concat, matmul) over leaves with
    entries in [-2, 2] and reduces to a scalar; reports the max relative
    error per graph and overall.
    """
    from . import autodiff as ad

    rng = np.random.default_rng(seed)
    rows = []
    worst_overall = 0.0
    for g in range(n_graphs):
        r = int(rng.integers(2, 5))
        c = int(rng.integers(2, 6))
        k = int(rng.integers(2, 5))
        leaves = {
            "a": rng.uniform(-2, 2, size=(r, c)),
            "b": rng.uniform(-2, 2, size=(r, c)),
            "w": rng.uniform(-2, 2, size=(c, k)),
            "bias": rng.uniform(-2, 2, size=k),
            "s": rng.uniform(-2, 2, size=r),
        }
        elem_ops = rng.integers(0, 6, size=int(rng.integers(1, 5)))
        use_affine = bool(rng.integers(0, 2))
        use_concat = bool(rng.integers(0, 2))
        reduce_mean = bool(rng.integers(0, 2))

        def build(t, elem_ops=elem_ops, use_affine=use_affine,
                  use_concat=use_concat, reduce_mean=reduce_mean):
            h = t["a"]
            for op in elem_ops:
                if op == 0:
                    h = ad.add(h, t["b"])
                elif op == 1:
                    h = ad.mul(h, t["b"])
                elif op == 2:
                    h = ad.tanh(h)
                elif op == 3:
                    h = ad.gelu(ad.mul(h, 0.5))
                elif op == 4:
                    h = ad.square(ad.mul(h, 0.25))
                else:
                    h = ad.rowscale(h, t["s"])
            if use_concat:
                h = ad.mul(ad.concat([h, t["a"]], axis=1), 0.5)
                h = ad.matmul(h, ad.concat([t["w"], t["w"]], axis=0))
            elif use_affine:
                h = ad.affine(h, t["w"], t["bias"])
            return ad.mean(h) if reduce_mean else ad.total(ad.tanh(h))

        report = ad.grad_check(build, leaves, eps=eps)
        worst = max(report.values())
        worst_overall = max(worst_overall, worst)
        rows.append([g, worst])

    stats = {"max_rel_error": float(worst_overall), "n_graphs": n_graphs}
    return VerifyReport(check="gradcheck", stats=stats,
                        table_header=["graph", "max_rel_error"], table=rows,
                        passed=bool(worst_overall <= 1e-5),
                        config={"seed": seed, "eps": eps})


def one_step_vs_secondary(fn, alpha: float, n: int, steps: int, seed: int = 0) -> VerifyReport:
    """Laws of one primary Euler step of size alpha vs the scaled-trajectory endpoint.

    For the Gaussian-pair oracle these genuinely differ: the one-step
    law from data has variance (1 - alpha)^2 while the integrated
    endpoint follows the partial interpolant with variance
    (1 - alpha)^2 + alpha^2; both are reported so the gap is explicit.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n, 1))
    one_step = x0 + alpha * np.asarray(fn(x0, 0.0, 1.0))
    endpoint = integrate_secondary(fn, x0, alpha, steps)
    stats = {
        "alpha": alpha,
        "one_step_mean": float(one_step.mean()),
        "one_step_var": float(one_step.var()),
        "secondary_mean": float(endpoint.mean()),
        "secondary_var": float(endpoint.var()),
        "var_gap": float(endpoint.var() - one_step.var()),
    }
    table = [[alpha, stats["one_step_mean"], stats["one_step_var"],
              stats["secondary_mean"], stats["secondary_var"]]]
    return VerifyReport(check="one_step_vs_secondary", stats=stats,
                        table_header=["alpha", "one_step_mean", "one_step_var",
                                      "secondary_mean", "secondary_var"],
                        table=table, config={"n": n, "steps": steps, "seed": seed})

"""Linear interpolant and the recursive scale/time schedule.

A trajectory family is indexed by a base scale ``alpha``: trajectory i
runs at scale ``alpha**(i-1)`` and visits the shared spatial point
``x_t`` at the aligned time ``tau_i = t / alpha**(i-1)``. Trajectory 1
is the ordinary noise-to-data path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ALPHA_FLOOR",
    "ScaleSchedule",
    "lerp_state",
    "target_velocity",
    "sample_time_and_scale",
    "build_schedule",
]

# Aligned time t/alpha is only evaluated for alpha above this floor, to
# avoid blow-up; the sampler makes tiny alpha possible only when t is
# itself tiny, where tau ~ 0 anyway.
ALPHA_FLOOR = 1e-3


@dataclass(frozen=True)
class ScaleSchedule:
    """Per-trajectory scales and aligned times for one (t, alpha) draw."""

    depth: int
    alpha: float
    t: float
    scales: np.ndarray  # alpha**(i-1), i = 1..depth
    taus: np.ndarray    # t / scales, clamped to [0, 1]
    clamped: int        # number of taus that hit the upper clamp


def lerp_state(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    """Convex combination (1 - t) * x0 + t * x1."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"lerp_state shape mismatch: {x0.shape} vs {x1.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return (1.0 - t) * x0 + t * x1


def target_velocity(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Constant conditional velocity x1 - x0 of the linear path."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"target_velocity shape mismatch: {x0.shape} vs {x1.shape}")
    return x1 - x0


def sample_time_and_scale(rng: np.random.Generator, size: int | None = None):
    """Draw t ~ U(0,1) and alpha ~ U(t,1), so t/alpha stays in [0, 1].

    With ``size`` given, returns two arrays of per-element draws;
    otherwise a pair of floats. alpha is floored at ALPHA_FLOOR.
    """
    if size is None:
        t = float(rng.uniform(0.0, 1.0))
        alpha = float(rng.uniform(t, 1.0))
        return t, max(alpha, ALPHA_FLOOR)
    t = rng.uniform(0.0, 1.0, size=size)
    alpha = rng.uniform(t, 1.0)
    return t, np.maximum(alpha, ALPHA_FLOOR)


def build_schedule(depth: int, alpha: float, t: float) -> ScaleSchedule:
    """All per-trajectory scales alpha**(i-1) and aligned times t/scale.

    For depth >= 3 the aligned time can exceed 1 (the sampler only
    guarantees t/alpha <= 1); such entries are clamped to 1 and counted.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not alpha > ALPHA_FLOOR or alpha > 1.0:
        raise ValueError(f"alpha must lie in ({ALPHA_FLOOR}, 1], got {alpha}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    scales = np.ones(depth, dtype=np.float64)
    for i in range(1, depth):
        scales[i] = scales[i - 1] * alpha
    raw = t / np.maximum(scales, ALPHA_FLOOR)
    clamped = int(np.sum(raw > 1.0))
    taus = np.minimum(raw, 1.0)
    return ScaleSchedule(depth=depth, alpha=float(alpha), t=float(t),
                         scales=scales, taus=taus, clamped=clamped)

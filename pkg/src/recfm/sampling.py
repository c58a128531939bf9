"""ODE inference: one-step and K-step Euler generation, secondary-scale
integration, noise ensembles, and chunked autoregressive rollouts.

A velocity field is any callable ``f(x, t, alpha) -> array`` acting on a
(B, d) batch. Generation integrates from t = 1 (noise) down to t = 0 on
a uniform grid; sampling always conditions the scale slot with 1, the
scaled velocities being a training device only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import ALPHA_FLOOR
from .util import split_seed

__all__ = [
    "SampleConfig",
    "ForecastEnsemble",
    "CountingField",
    "euler_one_step",
    "euler_k_step",
    "integrate_secondary",
    "generate_ensemble",
    "autoregressive_rollout",
    "rollout_ensemble",
]


@dataclass(frozen=True)
class SampleConfig:
    steps: int = 1
    members: int = 1
    seed: int = 0
    chunk: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.members < 1:
            raise ValueError(f"members must be >= 1, got {self.members}")
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")


@dataclass
class ForecastEnsemble:
    """Generated members stacked on axis 0 plus the metadata to redo them."""

    members: np.ndarray
    member_seeds: list[int] = field(default_factory=list)
    steps: int = 1
    cond: np.ndarray | None = None


class CountingField:
    """Wraps a field and counts evaluations (one per batched call)."""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, x, t, alpha):
        self.count += 1
        return self.fn(x, t, alpha)


def _check_state(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ArithmeticError(f"non-finite state during {where}")


def euler_one_step(fn, x1):
    """Single full-horizon Euler step: x0 ~= x1 - f(x1, 1, 1)."""
    x1 = np.asarray(x1, dtype=np.float64)
    out = x1 - np.asarray(fn(x1, 1.0, 1.0))
    _check_state(out, "euler_one_step")
    return out


def euler_k_step(fn, x1, steps: int):
    """K uniform Euler steps from t = 1 down to t = 0 (exactly K evaluations)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = np.array(x1, dtype=np.float64)
    h = 1.0 / steps
    for k in range(steps):
        t_prev = 1.0 - k / steps
        x = x - h * np.asarray(fn(x, t_prev, 1.0))
        _check_state(x, f"euler_k_step (k={k + 1}/{steps})")
    return x


def integrate_secondary(fn, x0, alpha: float, steps: int):
    """Integrate the scale-alpha trajectory forward from tau = 0 to 1.

    Starting from data samples, the endpoint approximates the partial
    interpolant law of (1 - alpha) x0 + alpha x1.
    """
    if not ALPHA_FLOOR < alpha <= 1.0:
        raise ValueError(f"alpha must lie in ({ALPHA_FLOOR}, 1], got {alpha}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = np.array(x0, dtype=np.float64)
    h = 1.0 / steps
    for k in range(steps):
        tau = k / steps
        x = x + h * np.asarray(fn(x, tau, alpha))
        _check_state(x, f"integrate_secondary (k={k + 1}/{steps})")
    return x


def generate_ensemble(fn, state_dim: int, cfg: SampleConfig,
                      cond=None) -> ForecastEnsemble:
    """Integrate M independent noise draws to data space.

    Member noise comes from per-member derived seeds, so the ensemble is
    reproducible and member order never couples draws. Members are
    batched through the field together.
    """
    seeds = [split_seed(cfg.seed, m) for m in range(cfg.members)]
    noise = np.stack([np.random.default_rng(s).standard_normal(state_dim) for s in seeds])
    members = euler_k_step(fn, noise, cfg.steps)
    return ForecastEnsemble(members=members, member_seeds=seeds, steps=cfg.steps,
                            cond=None if cond is None else np.asarray(cond))


def _flat(frames: np.ndarray) -> np.ndarray:
    return np.asarray(frames, dtype=np.float64).reshape(-1)


def autoregressive_rollout(model, init_frames: np.ndarray, horizon: int,
                           cfg: SampleConfig, member_seed: int | None = None) -> np.ndarray:
    """Forecast ``horizon`` frames by repeatedly generating chunk-length blocks.

    ``init_frames`` is [context, C, H, W] in the model's normalized
    space; each generation call conditions on the latest context frames,
    so exactly ceil(horizon / chunk) calls run and any overgeneration at
    the tail is truncated.
    """
    init_frames = np.asarray(init_frames, dtype=np.float64)
    if init_frames.ndim != 4:
        raise ValueError(f"init_frames must be [context, C, H, W], got {init_frames.shape}")
    context = init_frames.shape[0]
    frame_shape = init_frames.shape[1:]
    frame_size = int(np.prod(frame_shape))
    if model.cfg.cond_dim != context * frame_size:
        raise ValueError(f"model expects cond_dim {model.cfg.cond_dim}, context frames "
                         f"give {context * frame_size}")
    if model.cfg.state_dim != cfg.chunk * frame_size:
        raise ValueError(f"model generates state_dim {model.cfg.state_dim}, chunk "
                         f"gives {cfg.chunk * frame_size}")
    if horizon < cfg.chunk:
        raise ValueError(f"horizon {horizon} shorter than chunk {cfg.chunk}")

    root = cfg.seed if member_seed is None else member_seed
    history = list(init_frames)
    produced: list[np.ndarray] = []
    n_calls = math.ceil(horizon / cfg.chunk)
    for call in range(n_calls):
        cond = _flat(np.stack(history[-context:]))
        noise = np.random.default_rng(split_seed(root, call)).standard_normal(
            model.cfg.state_dim)
        block = euler_k_step(model.field(cond), noise, cfg.steps)
        frames = block.reshape(cfg.chunk, *frame_shape)
        for f in frames:
            history.append(f)
            produced.append(f)
    return np.stack(produced[:horizon])


def rollout_ensemble(model, init_frames: np.ndarray, horizon: int,
                     cfg: SampleConfig) -> ForecastEnsemble:
    """Ensemble of autoregressive rollouts, one derived seed per member.

    All members share the observed initial context; chunks are batched
    across members so each chunk costs ``steps`` field evaluations.
    """
    init_frames = np.asarray(init_frames, dtype=np.float64)
    context = init_frames.shape[0]
    frame_shape = init_frames.shape[1:]
    frame_size = int(np.prod(frame_shape))
    seeds = [split_seed(cfg.seed, m) for m in range(cfg.members)]

    history = [np.broadcast_to(f, (cfg.members, *frame_shape)).copy()
               for f in init_frames]
    produced: list[np.ndarray] = []
    n_calls = math.ceil(horizon / cfg.chunk)
    for call in range(n_calls):
        cond = np.stack(history[-context:], axis=1).reshape(cfg.members, context * frame_size)
        noise = np.stack([np.random.default_rng(split_seed(s, call)).standard_normal(
            model.cfg.state_dim) for s in seeds])
        block = euler_k_step(model.field(cond), noise, cfg.steps)
        frames = block.reshape(cfg.members, cfg.chunk, *frame_shape)
        for j in range(cfg.chunk):
            history.append(frames[:, j])
            produced.append(frames[:, j])
    members = np.stack(produced[:horizon], axis=1)  # [M, horizon, C, H, W]
    return ForecastEnsemble(members=members, member_seeds=seeds, steps=cfg.steps,
                            cond=init_frames)

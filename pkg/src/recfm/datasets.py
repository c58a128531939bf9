"""Synthetic data: bouncing-pendulum traces, Gaussian endpoint pairs with a
closed-form oracle velocity, and two periodic field rollouts (an
advection-diffusion flow and an analytic standing wave) used as
desk-scale forecasting benchmarks.

All generators are pure functions of (parameters, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor_io import read_tensor, write_tensor

__all__ = [
    "PendulumTrace",
    "EndpointPairSet",
    "FieldRollout",
    "ForecastDataset",
    "UnstableTimestepError",
    "simulate_pendulum",
    "make_gaussian_pairs",
    "gaussian_oracle_coefficient",
    "gaussian_oracle_velocity",
    "make_advection_diffusion_rollout",
    "make_standing_wave_rollout",
    "build_forecast_dataset",
    "windows",
    "save_dataset",
    "load_dataset",
]


class UnstableTimestepError(ValueError):
    """The requested dt violates the stepping scheme's stability bound."""


# ---------------------------------------------------------------------------
# Wall-bouncing pendulum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PendulumTrace:
    """Piecewise-linear bouncing trajectory with geometrically damped speed.

    ``bounce_speeds[i]`` is the speed during excursion i (i = 0 is the
    launch speed); each wall collision multiplies the speed by the
    retention coefficient, so a fraction 1 - retention**2 of the kinetic
    energy is lost per bounce.
    """

    times: np.ndarray
    positions: np.ndarray
    bounce_speeds: np.ndarray
    retention: float
    dt: float
    half_cycle: float


def simulate_pendulum(v0: float, alpha: float, n_bounces: int, dt: float,
                      half_cycle: float = 1.0) -> PendulumTrace:
    """Simulate a wall-bouncing pendulum at constant speed between bounces.

    The half-cycle duration (wall -> turning point -> wall) is the same
    for every excursion, so the amplitude shrinks proportionally with
    the speed.
    """
    if v0 <= 0:
        raise ValueError(f"v0 must be positive, got {v0}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if n_bounces < 1:
        raise ValueError(f"n_bounces must be >= 1, got {n_bounces}")

    n_segments = n_bounces + 1
    speeds = np.empty(n_segments, dtype=np.float64)
    speeds[0] = v0
    for i in range(1, n_segments):
        speeds[i] = alpha * speeds[i - 1]

    total = n_segments * half_cycle
    times = np.arange(0.0, total + 0.5 * dt, dt)
    times = times[times <= total + 1e-12]
    seg = np.minimum((times / half_cycle).astype(int), n_segments - 1)
    local = times - seg * half_cycle
    ascent = np.minimum(local, half_cycle - local)
    positions = speeds[seg] * ascent
    return PendulumTrace(times=times, positions=positions, bounce_speeds=speeds,
                         retention=float(alpha), dt=float(dt), half_cycle=float(half_cycle))


# ---------------------------------------------------------------------------
# Gaussian endpoint pairs with oracle velocity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EndpointPairSet:
    """Independent draws x0 ~ N(0, I) and x1 ~ N(0, I)."""

    x0: np.ndarray
    x1: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def dim(self) -> int:
        return self.x0.shape[1]


def make_gaussian_pairs(n: int, dim: int, seed: int) -> EndpointPairSet:
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n, dim))
    x1 = rng.standard_normal((n, dim))
    return EndpointPairSet(x0=x0, x1=x1, seed=int(seed))


def gaussian_oracle_coefficient(t):
    """Slope of the conditional-mean velocity for standard-normal endpoints.

    For independent x0, x1 ~ N(0, I) and x_t = (1-t) x0 + t x1, the
    conditional expectation of x1 - x0 given x_t = x is linear in x with
    slope (2t - 1) / ((1-t)^2 + t^2).
    """
    t = np.asarray(t, dtype=np.float64)
    return (2.0 * t - 1.0) / ((1.0 - t) ** 2 + t ** 2)


def gaussian_oracle_velocity(x, t, alpha: float = 1.0):
    """Optimal velocity field for the Gaussian pair family.

    At scale ``alpha`` and aligned time ``t`` this is
    alpha * coefficient(alpha * t) * x, which reduces to the plain
    conditional-mean field at alpha = 1.
    """
    return alpha * gaussian_oracle_coefficient(alpha * np.asarray(t)) * np.asarray(x)


# ---------------------------------------------------------------------------
# Periodic field rollouts
# ---------------------------------------------------------------------------

@dataclass
class FieldRollout:
    """A single trajectory of 2-D fields, shaped [T, C, H, W]."""

    frames: np.ndarray
    channels: tuple[str, ...]
    dt: float
    params: dict = field(default_factory=dict)


def _random_periodic_field(rng: np.random.Generator, h: int, w: int,
                           max_freq: int = 3, n_modes: int = 6) -> np.ndarray:
    """Band-limited random field: a constant plus a few random cosines."""
    ys = np.arange(h) / h
    xs = np.arange(w) / w
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    out = np.full((h, w), rng.normal(scale=0.5))
    for _ in range(n_modes):
        fx = int(rng.integers(-max_freq, max_freq + 1))
        fy = int(rng.integers(-max_freq, max_freq + 1))
        if fx == 0 and fy == 0:
            fx = 1
        amp = rng.normal(scale=1.0 / np.hypot(fx, fy))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += amp * np.cos(2.0 * np.pi * (fx * X + fy * Y) + phase)
    return out


def _wavenumbers(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ky = 2.0 * np.pi * np.fft.fftfreq(h, d=1.0 / h)
    kx = 2.0 * np.pi * np.fft.fftfreq(w, d=1.0 / w)
    KY, KX = np.meshgrid(ky, kx, indexing="ij")
    return KX, KY


def make_advection_diffusion_rollout(h: int, w: int, nu: float, c, n_frames: int,
                                     dt: float, seed: int,
                                     channels: tuple[str, ...] = ("u", "v"),
                                     scheme: str = "spectral") -> FieldRollout:
    """Advect and diffuse random initial fields on the periodic unit square.

    ``scheme='spectral'`` applies the exact per-mode propagator
    exp(-(nu |k|^2 + i c.k) dt) each step, which is unconditionally
    stable and conserves total mass to FFT roundoff. ``scheme='ftcs'``
    is the explicit central-difference stepper and enforces its
    stability bounds on dt.
    """
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if nu < 0:
        raise ValueError(f"nu must be >= 0, got {nu}")
    cx, cy = float(c[0]), float(c[1])
    rng = np.random.default_rng(seed)
    init = np.stack([_random_periodic_field(rng, h, w) for _ in channels])

    frames = np.empty((n_frames, len(channels), h, w), dtype=np.float64)
    frames[0] = init

    if scheme == "spectral":
        KX, KY = _wavenumbers(h, w)
        mult = np.exp(-(nu * (KX ** 2 + KY ** 2) + 1j * (cx * KX + cy * KY)) * dt)
        spectra = [np.fft.fft2(init[ci]) for ci in range(len(channels))]
        for n in range(1, n_frames):
            for ci in range(len(channels)):
                spectra[ci] = spectra[ci] * mult
                frames[n, ci] = np.real(np.fft.ifft2(spectra[ci]))
    elif scheme == "ftcs":
        hx, hy = 1.0 / w, 1.0 / h
        if nu == 0.0 and (cx != 0.0 or cy != 0.0):
            raise UnstableTimestepError("ftcs with central advection is unstable at nu = 0")
        if nu > 0.0:
            diff_limit = 0.5 / (nu * (1.0 / hx ** 2 + 1.0 / hy ** 2))
            if dt > diff_limit:
                raise UnstableTimestepError(f"dt={dt} exceeds diffusion bound {diff_limit:.3g}")
            if (cx != 0.0 or cy != 0.0) and dt > 2.0 * nu / (cx ** 2 + cy ** 2):
                raise UnstableTimestepError(
                    f"dt={dt} exceeds advection bound {2.0 * nu / (cx ** 2 + cy ** 2):.3g}")
        cur = init.copy()
        for n in range(1, n_frames):
            lap = ((np.roll(cur, -1, axis=2) - 2.0 * cur + np.roll(cur, 1, axis=2)) / hx ** 2
                   + (np.roll(cur, -1, axis=1) - 2.0 * cur + np.roll(cur, 1, axis=1)) / hy ** 2)
            ddx = (np.roll(cur, -1, axis=2) - np.roll(cur, 1, axis=2)) / (2.0 * hx)
            ddy = (np.roll(cur, -1, axis=1) - np.roll(cur, 1, axis=1)) / (2.0 * hy)
            cur = cur + dt * (nu * lap - cx * ddx - cy * ddy)
            frames[n] = cur
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    return FieldRollout(frames=frames, channels=tuple(channels), dt=float(dt),
                        params={"nu": float(nu), "c": [cx, cy], "seed": int(seed),
                                "scheme": scheme})


def make_standing_wave_rollout(h: int, w: int, omega: float, n_frames: int,
                               dt: float, seed: int, n_waves: int = 4) -> FieldRollout:
    """Analytic standing wave: a random spatial field rotating as exp(-i omega t).

    The two channels are the real and imaginary parts, so every frame
    satisfies d^2 U / dt^2 + omega^2 U = 0 exactly at generator level.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    rng = np.random.default_rng(seed)
    ys = np.arange(h) / h
    xs = np.arange(w) / w
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    u = np.zeros((h, w), dtype=np.complex128)
    for _ in range(n_waves):
        fx = int(rng.integers(-3, 4))
        fy = int(rng.integers(-3, 4))
        if fx == 0 and fy == 0:
            fx = 1
        amp = rng.normal(scale=1.0 / np.hypot(fx, fy))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        u += amp * np.exp(1j * (2.0 * np.pi * (fx * X + fy * Y) + phase))

    frames = np.empty((n_frames, 2, h, w), dtype=np.float64)
    for n in range(n_frames):
        full = u * np.exp(-1j * omega * n * dt)
        frames[n, 0] = full.real
        frames[n, 1] = full.imag
    return FieldRollout(frames=frames, channels=("re", "im"), dt=float(dt),
                        params={"omega": float(omega), "seed": int(seed)})


# ---------------------------------------------------------------------------
# Forecast dataset assembly
# ---------------------------------------------------------------------------

@dataclass
class ForecastDataset:
    """Normalized rollout splits plus the stats and parameters that made them.

    Normalization stats come from the training split only; frames in
    every split are stored z-scored per channel.
    """

    kind: str
    splits: dict[str, np.ndarray]          # split -> [N, T, C, H, W]
    channels: tuple[str, ...]
    dt: float
    params: dict
    norm_mean: np.ndarray                  # per channel
    norm_std: np.ndarray
    seed: int
    per_traj: dict[str, list[dict]] = field(default_factory=dict)

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        return frames * self.norm_std[:, None, None] + self.norm_mean[:, None, None]


def _split_counts(n_traj: int) -> tuple[int, int, int]:
    n_val = max(1, round(0.1 * n_traj))
    n_test = max(1, round(0.1 * n_traj))
    n_train = n_traj - n_val - n_test
    if n_train < 1:
        raise ValueError(f"n_traj={n_traj} too small for an 80/10/10 split")
    return n_train, n_val, n_test


def build_forecast_dataset(kind: str, n_traj: int, h: int, w: int, n_frames: int,
                           dt: float, seed: int, **params) -> ForecastDataset:
    """Generate, split 80/10/10 by trajectory, and z-score a field dataset.

    kind='advection' takes nu and c (shared by every trajectory);
    kind='wave' samples omega per trajectory from ``omega_range``.
    """
    rng = np.random.default_rng(seed)
    rollouts: list[FieldRollout] = []
    per_traj: list[dict] = []
    for i in range(n_traj):
        traj_seed = int(rng.integers(0, 2 ** 31))
        if kind == "advection":
            nu = float(params.get("nu", 0.02))
            c = params.get("c", (0.4, -0.25))
            roll = make_advection_diffusion_rollout(h, w, nu, c, n_frames, dt, traj_seed)
        elif kind == "wave":
            lo, hi = params.get("omega_range", (2.0, 4.0))
            omega = float(rng.uniform(lo, hi))
            roll = make_standing_wave_rollout(h, w, omega, n_frames, dt, traj_seed)
        else:
            raise ValueError(f"unknown dataset kind {kind!r}")
        rollouts.append(roll)
        per_traj.append(dict(roll.params))

    n_train, n_val, n_test = _split_counts(n_traj)
    order = rng.permutation(n_traj)
    idx = {
        "train": order[:n_train],
        "val": order[n_train:n_train + n_val],
        "test": order[n_train + n_val:],
    }
    all_frames = np.stack([r.frames for r in rollouts])  # [N, T, C, H, W]

    train = all_frames[idx["train"]]
    mean = train.mean(axis=(0, 1, 3, 4))
    std = train.std(axis=(0, 1, 3, 4))
    if np.any(std == 0):
        raise ValueError("degenerate channel with zero variance in training split")

    splits = {}
    traj_params: dict[str, list[dict]] = {}
    for name, ids in idx.items():
        arr = (all_frames[ids] - mean[:, None, None]) / std[:, None, None]
        splits[name] = arr
        traj_params[name] = [per_traj[i] for i in ids]

    gen_params = dict(params)
    gen_params.update({"h": h, "w": w, "n_frames": n_frames, "n_traj": n_traj})
    return ForecastDataset(kind=kind, splits=splits, channels=rollouts[0].channels,
                           dt=float(dt), params=gen_params, norm_mean=mean,
                           norm_std=std, seed=int(seed), per_traj=traj_params)


def windows(frames: np.ndarray, context: int = 1, chunk: int = 1):
    """Slice rollouts into flattened (conditioning, target) training pairs.

    ``frames`` is [N, T, C, H, W]; each window pairs ``context`` past
    frames with the following ``chunk`` future frames, both flattened
    row-major.
    """
    n, t, c, h, w = frames.shape
    if context < 1 or chunk < 1 or context + chunk > t:
        raise ValueError(f"invalid window: context={context}, chunk={chunk}, T={t}")
    conds, targets = [], []
    for start in range(context, t - chunk + 1):
        conds.append(frames[:, start - context:start].reshape(n, -1))
        targets.append(frames[:, start:start + chunk].reshape(n, -1))
    return np.concatenate(conds, axis=0), np.concatenate(targets, axis=0)


def save_dataset(ds: ForecastDataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "kind": ds.kind,
        "channels": list(ds.channels),
        "dt": ds.dt,
        "params": ds.params,
        "norm_mean": ds.norm_mean.tolist(),
        "norm_std": ds.norm_std.tolist(),
        "seed": ds.seed,
        "per_traj": ds.per_traj,
        "splits": {name: list(arr.shape) for name, arr in ds.splits.items()},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for name, arr in ds.splits.items():
        write_tensor(out / f"split_{name}.rft1", arr)


def load_dataset(in_dir) -> ForecastDataset:
    src = Path(in_dir)
    with open(src / "manifest.json") as fh:
        manifest = json.load(fh)
    splits = {name: read_tensor(src / f"split_{name}.rft1")
              for name in manifest["splits"]}
    return ForecastDataset(kind=manifest["kind"], splits=splits,
                           channels=tuple(manifest["channels"]), dt=manifest["dt"],
                           params=manifest["params"],
                           norm_mean=np.asarray(manifest["norm_mean"]),
                           norm_std=np.asarray(manifest["norm_std"]),
                           seed=manifest["seed"], per_traj=manifest["per_traj"])

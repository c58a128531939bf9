"""Probabilistic forecast verification.

Point-level scores are averaged per point, then per frame, then per
rollout, then over the dataset (flat means with equal weights, so the
nesting order is immaterial except for SSR, whose spread/skill ratio is
formed once per rollout).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricRecord",
    "crps_fair",
    "ensemble_mse",
    "ssr",
    "kinetic_energy_accuracy",
    "wave_residual",
    "forecast_scores",
    "METRICS_CSV_HEADER",
]

METRICS_CSV_HEADER = ["dataset", "split", "model", "K", "M", "crps", "mse", "ssr",
                      "ke_accuracy", "wave_residual", "seed"]


@dataclass(frozen=True)
class MetricRecord:
    name: str
    value: float
    scope: str = "dataset"   # per-frame / per-rollout / dataset
    members: int = 0
    notes: str = ""


def _members_obs(members, obs, min_members: int):
    members = np.asarray(members, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if members.ndim < 1 or members.shape[1:] != obs.shape:
        raise ValueError(f"members {members.shape} incompatible with obs {obs.shape}")
    if members.shape[0] < min_members:
        raise ValueError(f"need at least {min_members} members, got {members.shape[0]}")
    return members, obs


def crps_fair(members, obs, fair: bool = True) -> float:
    """Ensemble CRPS averaged over all points.

    The fair estimator subtracts half the mean pairwise member distance
    with an M(M-1) denominator, making it unbiased in the ensemble
    size; ``fair=False`` uses the plain empirical-CDF M^2 denominator.
    The pairwise sum is evaluated with the sorted-member identity.
    """
    members, obs = _members_obs(members, obs, 2 if fair else 1)
    m = members.shape[0]
    flat = members.reshape(m, -1)
    y = obs.reshape(-1)

    term_obs = np.mean(np.abs(flat - y[None, :]), axis=0)

    srt = np.sort(flat, axis=0)
    weights = 2.0 * np.arange(1, m + 1) - m - 1.0
    pair_sum = 2.0 * np.einsum("i,ij->j", weights, srt)  # sum over ordered pairs
    denom = 2.0 * m * (m - 1.0) if fair else 2.0 * m * m
    return float(np.mean(term_obs - pair_sum / denom))


def ensemble_mse(members, obs) -> float:
    """Squared error of the ensemble mean, averaged over all points."""
    members, obs = _members_obs(members, obs, 1)
    return float(np.mean((members.mean(axis=0) - obs) ** 2))


def ssr(members, obs) -> float:
    """Spread-skill ratio: 1.0 is calibrated, < 1 underdispersed.

    Spread is the root mean (over points) unbiased ensemble variance;
    skill is the RMSE of the ensemble mean over the same points.
    """
    members, obs = _members_obs(members, obs, 2)
    spread = float(np.sqrt(np.mean(np.var(members, axis=0, ddof=1))))
    skill = float(np.sqrt(ensemble_mse(members, obs)))
    if skill == 0.0:
        raise ZeroDivisionError("SSR undefined: ensemble mean matches obs exactly")
    return spread / skill


def kinetic_energy_accuracy(pred_frames, true_frames, velocity_channels):
    """Agreement of mean kinetic energy over time, in [0, 1].

    Per frame, E(t) is the pixel mean of half the squared velocity
    magnitude over the given channel indices; both curves are reported
    normalized by the true initial energy, and the per-frame accuracy is
    the clamped ratio min(E_pred, E_true) / max(E_pred, E_true).
    Returns (per_frame_accuracy, summary_mean).
    """
    pred = np.asarray(pred_frames, dtype=np.float64)
    true = np.asarray(true_frames, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 4:
        raise ValueError(f"rollouts must share [T, C, H, W] shape, got "
                         f"{pred.shape} vs {true.shape}")
    vc = list(velocity_channels)
    if not vc or max(vc) >= pred.shape[1]:
        raise ValueError(f"bad velocity channel indices {vc} for C={pred.shape[1]}")
    e_pred = 0.5 * np.mean(np.sum(pred[:, vc] ** 2, axis=1), axis=(1, 2))
    e_true = 0.5 * np.mean(np.sum(true[:, vc] ** 2, axis=1), axis=(1, 2))
    if e_true[0] == 0.0:
        raise ZeroDivisionError("true initial kinetic energy is zero")
    hi = np.maximum(e_pred, e_true)
    lo = np.minimum(e_pred, e_true)
    per_frame = np.where(hi == 0.0, 1.0, lo / np.where(hi == 0.0, 1.0, hi))
    return per_frame, float(np.mean(per_frame))


def wave_residual(frames, omega: float, dt: float) -> float:
    """Mean |centered second time difference / dt^2 + omega^2 U| over interior frames."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[0] < 3:
        raise ValueError(f"need [T >= 3, C, H, W] frames, got {arr.shape}")
    second = (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dt ** 2
    return float(np.mean(np.abs(second + omega ** 2 * arr[1:-1])))


def forecast_scores(member_rollouts, true_rollouts, fair: bool = True) -> dict[str, float]:
    """CRPS / MSE / SSR aggregated over a list of test rollouts.

    ``member_rollouts[i]`` is [M, T, C, H, W] against truth [T, C, H, W];
    CRPS and MSE average over rollouts of flat point means, SSR averages
    the per-rollout ratios.
    """
    if len(member_rollouts) != len(true_rollouts) or not member_rollouts:
        raise ValueError("need matching, non-empty rollout lists")
    crps_vals, mse_vals, ssr_vals = [], [], []
    for members, truth in zip(member_rollouts, true_rollouts):
        crps_vals.append(crps_fair(members, truth, fair=fair))
        mse_vals.append(ensemble_mse(members, truth))
        ssr_vals.append(ssr(members, truth))
    return {
        "crps": float(np.mean(crps_vals)),
        "mse": float(np.mean(mse_vals)),
        "ssr": float(np.mean(ssr_vals)),
    }

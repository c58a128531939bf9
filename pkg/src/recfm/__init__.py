"""Recursive flow matching: few-step generative forecasting for
dynamical systems, with training, sampling, probabilistic verification
metrics, and empirical checks of the method's structural claims."""

from .autodiff import Tensor, grad_check
from .datasets import (
    build_forecast_dataset,
    gaussian_oracle_coefficient,
    gaussian_oracle_velocity,
    make_advection_diffusion_rollout,
    make_gaussian_pairs,
    make_standing_wave_rollout,
    simulate_pendulum,
)
from .estimator import RecursiveFlowMatcher
from .metrics import crps_fair, ensemble_mse, kinetic_energy_accuracy, ssr, wave_residual
from .model import MLPVelocityModel, ModelConfig
from .sampling import SampleConfig, euler_k_step, euler_one_step, integrate_secondary
from .schedule import build_schedule, lerp_state, sample_time_and_scale, target_velocity
from .training import TrainConfig, TrainData, recfm_loss, shortcut_loss, train, vanilla_fm_loss

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "grad_check",
    "simulate_pendulum",
    "make_gaussian_pairs",
    "gaussian_oracle_coefficient",
    "gaussian_oracle_velocity",
    "make_advection_diffusion_rollout",
    "make_standing_wave_rollout",
    "build_forecast_dataset",
    "RecursiveFlowMatcher",
    "MLPVelocityModel",
    "ModelConfig",
    "TrainConfig",
    "TrainData",
    "train",
    "recfm_loss",
    "vanilla_fm_loss",
    "shortcut_loss",
    "SampleConfig",
    "euler_one_step",
    "euler_k_step",
    "integrate_secondary",
    "lerp_state",
    "target_velocity",
    "sample_time_and_scale",
    "build_schedule",
    "crps_fair",
    "ensemble_mse",
    "ssr",
    "kinetic_energy_accuracy",
    "wave_residual",
    "__version__",
]

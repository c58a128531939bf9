"""Scikit-learn style front end: fit a velocity field on samples of a
data distribution, then sample new points by integrating the learned ODE
from noise. Composes with sklearn tooling (``get_params`` /
``set_params`` / ``clone``); hyperparameters are stored verbatim at
construction and validated in ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import MLPVelocityModel, ModelConfig
from .sampling import euler_k_step
from .training import TrainConfig, TrainData, train
from .util import split_seed

__all__ = ["RecursiveFlowMatcher"]


class RecursiveFlowMatcher(BaseEstimator):
    """Few-step generative model trained with recursive flow matching.

    Parameters
    ----------
    mode : {'recfm', 'fm', 'shortcut'}
        Training objective. 'fm' is plain flow matching (depth 1);
        'recfm' adds scaled secondary trajectories and the cross-scale
        consistency penalty.
    depth : int
        Number of trajectory scales supervised per sample.
    consistency_weight : float
        Weight of the cross-scale consistency penalty.
    hidden_widths : tuple of int
        MLP hidden layer widths.
    iterations, batch_size, learning_rate, beta1, beta2, weight_decay
        AdamW training schedule.
    sample_steps : int
        Default number of Euler steps used by :meth:`sample`.
    random_state : int
        Seed for initialization, batching, and sampling.
    """

    def __init__(self, mode="recfm", depth=2, consistency_weight=1.0,
                 hidden_widths=(256, 256, 256), activation="tanh", embed_dim=16,
                 iterations=2000, batch_size=64, learning_rate=1e-3,
                 beta1=0.9, beta2=0.95, weight_decay=1e-2,
                 sample_steps=1, random_state=0):
        self.mode = mode
        self.depth = depth
        self.consistency_weight = consistency_weight
        self.hidden_widths = hidden_widths
        self.activation = activation
        self.embed_dim = embed_dim
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.sample_steps = sample_steps
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(mode=self.mode, depth=self.depth,
                           consistency_weight=self.consistency_weight,
                           batch_size=self.batch_size, iterations=self.iterations,
                           learning_rate=self.learning_rate, beta1=self.beta1,
                           beta2=self.beta2, weight_decay=self.weight_decay,
                           seed=self.random_state)

    def fit(self, X, y=None, cond=None, validation=None):
        """Learn the velocity field transporting noise to the rows of X.

        ``cond`` optionally conditions each sample on a feature row of
        the same length everywhere; ``validation`` is an optional
        (X_val, cond_val) pair used only for curve logging.
        """
        X = check_array(X, dtype=np.float64)
        cond_arr = None
        if cond is not None:
            cond_arr = check_array(cond, dtype=np.float64)
            if cond_arr.shape[0] != X.shape[0]:
                raise ValueError("cond and X row counts differ")

        cfg = ModelConfig(state_dim=X.shape[1],
                          cond_dim=0 if cond_arr is None else cond_arr.shape[1],
                          hidden_widths=tuple(self.hidden_widths),
                          activation=self.activation, embed_dim=self.embed_dim,
                          seed=self.random_state)
        model = MLPVelocityModel(cfg)
        val_data = None
        if validation is not None:
            vx, vc = validation
            val_data = TrainData(np.asarray(vx, dtype=np.float64),
                                 None if vc is None else np.asarray(vc, dtype=np.float64))
        result = train(self._train_config(), model, TrainData(X, cond_arr), val_data)
        self.model_ = result.model
        self.nfe_ = result.nfe
        self.history_ = result.curve
        self.aborted_ = result.aborted
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples=1, cond=None, steps=None, random_state=None):
        """Generate samples by K-step Euler integration from fresh noise.

        With a conditioned model, ``cond`` must supply one feature row
        per requested sample (a single row is tiled).
        """
        check_is_fitted(self, "model_")
        steps = int(steps if steps is not None else self.sample_steps)
        seed = self.random_state if random_state is None else random_state

        cond_arr = None
        if self.model_.cfg.cond_dim:
            if cond is None:
                raise ValueError("conditioned model requires cond to sample")
            cond_arr = np.asarray(cond, dtype=np.float64)
            if cond_arr.ndim == 1:
                cond_arr = np.broadcast_to(cond_arr, (n_samples, cond_arr.size))
            if cond_arr.shape != (n_samples, self.model_.cfg.cond_dim):
                raise ValueError(f"cond must be ({n_samples}, {self.model_.cfg.cond_dim}), "
                                 f"got {cond_arr.shape}")
        elif cond is not None:
            raise ValueError("model was fit without conditioning")

        noise = np.stack([
            np.random.default_rng(split_seed(seed, i)).standard_normal(self.n_features_in_)
            for i in range(n_samples)])
        return euler_k_step(self.model_.field(cond_arr), noise, steps)

    def velocity(self, X, t=1.0, alpha=1.0, cond=None):
        """Evaluate the learned velocity field at the given states."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return self.model_.field(cond)(X, t, alpha)

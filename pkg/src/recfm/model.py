"""MLP velocity field conditioned on time and trajectory scale.

One network represents the whole family of trajectories: the state (and
any conditioning frames) is flattened and concatenated with sinusoidal
embeddings of the two scalar conditions before the first layer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .tensor_io import read_tensor, write_tensor

__all__ = [
    "ModelConfig",
    "ParamSet",
    "MLPVelocityModel",
    "init_params",
    "embed_scalar",
    "predict_velocity",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class ModelConfig:
    state_dim: int
    cond_dim: int = 0
    hidden_widths: tuple[int, ...] = (256, 256, 256)
    activation: str = "tanh"
    embed_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError(f"state_dim must be >= 1, got {self.state_dim}")
        if self.cond_dim < 0:
            raise ValueError(f"cond_dim must be >= 0, got {self.cond_dim}")
        if not self.hidden_widths:
            raise ValueError("at least one hidden layer is required")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ValueError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        if self.activation not in ("tanh", "gelu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.cond_dim + 2 * self.embed_dim


@dataclass
class ParamSet:
    """Named trainable tensors plus optimizer moment buffers."""

    tensors: dict[str, ad.Tensor]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, arr in arrays.items():
            if self.tensors[k].data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {k}")
            self.tensors[k] = ad.parameter(arr.copy(), name=k)


def init_params(cfg: ModelConfig) -> ParamSet:
    """Uniform fan-in-scaled weights (std 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(cfg.seed)
    dims = [cfg.input_dim, *cfg.hidden_widths, cfg.state_dim]
    tensors: dict[str, ad.Tensor] = {}
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        bound = np.sqrt(3.0) / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1]))
        tensors[f"w{i}"] = ad.parameter(w, name=f"w{i}")
        tensors[f"b{i}"] = ad.parameter(np.zeros(dims[i + 1]), name=f"b{i}")
    m = {k: np.zeros_like(t.data) for k, t in tensors.items()}
    v = {k: np.zeros_like(t.data) for k, t in tensors.items()}
    return ParamSet(tensors=tensors, m=m, v=v, step=0)


def embed_scalar(s, dim: int) -> np.ndarray:
    """Sinusoidal features at geometrically spaced frequencies pi * 2^j.

    Accepts a scalar or a vector of scalars; output has ``dim`` columns
    (sines then cosines), all in [-1, 1], and is injective on [0, 1]
    because the base-frequency cosine is strictly monotone there.
    """
    if dim < 2 or dim % 2:
        raise ValueError(f"dim must be even and >= 2, got {dim}")
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    freqs = np.pi * (2.0 ** np.arange(dim // 2))
    angles = s[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def _as_batch(x, dim: int, batch: int | None, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{what} must have {dim} columns, got shape {arr.shape}")
    if batch is not None and arr.shape[0] != batch:
        raise ValueError(f"{what} batch {arr.shape[0]} != {batch}")
    return arr


def _scalar_column(s, batch: int, what: str) -> np.ndarray:
    arr = np.asarray(s, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(batch, float(arr))
    if arr.shape != (batch,):
        raise ValueError(f"{what} must be scalar or shape ({batch},), got {arr.shape}")
    if np.any(arr < -1e-9) or np.any(arr > 1.0 + 1e-9):
        raise ValueError(f"{what} must lie in [0, 1], got range "
                         f"[{arr.min():.4g}, {arr.max():.4g}]")
    return np.clip(arr, 0.0, 1.0)


def predict_velocity(params: ParamSet, cfg: ModelConfig, x, cond, t, alpha) -> ad.Tensor:
    """Forward pass; returns a Tensor of the same shape as the state batch.

    ``x`` may be a Tensor (to differentiate through the state) or a
    plain array; ``t`` and ``alpha`` may be scalars or per-row vectors.
    """
    if isinstance(x, ad.Tensor):
        batch = x.data.shape[0]
        if x.data.ndim != 2 or x.data.shape[1] != cfg.state_dim:
            raise ValueError(f"state must be (B, {cfg.state_dim}), got {x.data.shape}")
        x_t = x
    else:
        arr = _as_batch(x, cfg.state_dim, None, "state")
        batch = arr.shape[0]
        x_t = ad.constant(arr, name="state")

    parts = [x_t]
    if cfg.cond_dim:
        if cond is None:
            raise ValueError("model expects conditioning frames but cond is None")
        cond_t = cond if isinstance(cond, ad.Tensor) else ad.constant(
            _as_batch(cond, cfg.cond_dim, batch, "cond"), name="cond")
        parts.append(cond_t)
    elif cond is not None:
        raise ValueError("model takes no conditioning but cond was given")

    t_col = _scalar_column(t, batch, "t")
    a_col = _scalar_column(alpha, batch, "alpha")
    parts.append(ad.constant(embed_scalar(t_col, cfg.embed_dim), name="t_embed"))
    parts.append(ad.constant(embed_scalar(a_col, cfg.embed_dim), name="alpha_embed"))

    h = ad.concat(parts, axis=1)
    act = ad.tanh if cfg.activation == "tanh" else ad.gelu
    n_layers = len(cfg.hidden_widths) + 1
    for i in range(n_layers):
        h = ad.affine(h, params.tensors[f"w{i}"], params.tensors[f"b{i}"])
        if i < n_layers - 1:
            h = act(h)
    return h


class MLPVelocityModel:
    """Bundles a config with its parameters; the trainer's duck type."""

    def __init__(self, cfg: ModelConfig, params: ParamSet | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg)

    def predict(self, x, cond, t, alpha) -> ad.Tensor:
        return predict_velocity(self.params, self.cfg, x, cond, t, alpha)

    def field(self, cond=None):
        """No-grad velocity field callable ``f(x, t, alpha) -> array``.

        ``cond`` is bound once: a single conditioning row is tiled
        across the batch, while a (B, cond_dim) matrix conditions each
        row of ``x`` separately.
        """
        bound = None
        if self.cfg.cond_dim:
            if cond is None:
                raise ValueError("conditioned model needs cond to build a field")
            bound = np.asarray(cond, dtype=np.float64)
            if bound.ndim == 1 and bound.size == self.cfg.cond_dim:
                bound = bound[None, :]
            if bound.ndim != 2 or bound.shape[1] != self.cfg.cond_dim:
                raise ValueError(f"cond must have {self.cfg.cond_dim} columns, got "
                                 f"shape {bound.shape}")

        def f(x, t, alpha):
            arr = np.asarray(x, dtype=np.float64)
            squeeze = arr.ndim == 1
            if squeeze:
                arr = arr[None, :]
            c = None
            if bound is not None:
                c = np.broadcast_to(bound, (arr.shape[0], bound.shape[1])) \
                    if bound.shape[0] == 1 else bound
            out = self.predict(arr, c, t, alpha).data
            return out[0] if squeeze else out

        return f


def save_checkpoint(model: MLPVelocityModel, out_dir, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = asdict(model.cfg)
    cfg["hidden_widths"] = list(model.cfg.hidden_widths)
    manifest = {"config": cfg, "step": model.params.step,
                "tensors": sorted(model.params.tensors)}
    if extra:
        manifest.update(extra)
    with open(out / "checkpoint.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for name, tensor in model.params.tensors.items():
        write_tensor(out / f"param_{name}.rft1", tensor.data)


def load_checkpoint(in_dir) -> MLPVelocityModel:
    src = Path(in_dir)
    with open(src / "checkpoint.json") as fh:
        manifest = json.load(fh)
    cfg_dict = dict(manifest["config"])
    cfg_dict["hidden_widths"] = tuple(cfg_dict["hidden_widths"])
    cfg = ModelConfig(**cfg_dict)
    params = init_params(cfg)
    arrays = {name: read_tensor(src / f"param_{name}.rft1") for name in manifest["tensors"]}
    params.load_arrays(arrays)
    params.step = int(manifest["step"])
    return MLPVelocityModel(cfg, params)

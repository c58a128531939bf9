"""Training loops: recursive flow matching, the plain flow-matching
baseline, and a shortcut (step-size self-consistency) baseline, all
optimized with AdamW.

Every iteration draws fresh endpoint pairs: data targets are sampled
from the provided set and the noise endpoint is drawn i.i.d. standard
normal. The recursive objective supervises D trajectory scales through
the shared interpolated state and adds a cross-scale consistency
penalty tying each secondary prediction to the scaled primary one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .model import MLPVelocityModel
from .schedule import ALPHA_FLOOR, sample_time_and_scale
from .util import split_seed, write_csv

__all__ = [
    "TrainConfig",
    "TrainData",
    "LossBreakdown",
    "TrainResult",
    "AdamW",
    "recfm_loss",
    "vanilla_fm_loss",
    "shortcut_loss",
    "train",
    "curve_header",
]

MODES = ("recfm", "fm", "shortcut")


@dataclass
class TrainConfig:
    mode: str = "recfm"
    depth: int = 2
    consistency_weight: float = 1.0
    batch_size: int = 64
    iterations: int = 2000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-2
    seed: int = 0
    stop_gradient: bool = False
    per_batch_scale: bool = False
    shortcut_fraction: float = 0.25
    shortcut_steps: tuple[float, ...] = (0.25, 0.125, 0.0625, 0.03125)
    eval_every: int = 0          # 0 -> iterations // 25
    val_members: int = 4
    val_max: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "fm":
            # plain flow matching is the depth-1, zero-weight special case
            self.depth = 1
            self.consistency_weight = 0.0
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.consistency_weight < 0:
            raise ValueError(f"consistency_weight must be >= 0, got {self.consistency_weight}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainData:
    """Flattened target states (rows of p0 samples) plus optional conditioning."""

    x0: np.ndarray
    cond: np.ndarray | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if self.x0.ndim != 2 or self.x0.shape[0] < 1:
            raise ValueError(f"x0 must be a non-empty (N, d) array, got {self.x0.shape}")
        if self.cond is not None:
            self.cond = np.asarray(self.cond, dtype=np.float64)
            if self.cond.shape[0] != self.x0.shape[0]:
                raise ValueError("cond and x0 row counts differ")

    @property
    def n(self) -> int:
        return self.x0.shape[0]


@dataclass
class LossBreakdown:
    """Scalar loss terms for one batch; ``node`` is the tape output."""

    total: float
    traj: list[float]
    cons: list[float]
    mode: str
    nfe: int = 0
    clamped: int = 0
    node: ad.Tensor | None = None


def _draw_time_scale(rng, batch, depth, per_batch, t_override, alpha_override):
    if t_override is not None:
        t = np.broadcast_to(np.asarray(t_override, dtype=np.float64), (batch,)).copy()
        if alpha_override is None:
            alpha = np.ones(batch)
        else:
            alpha = np.broadcast_to(np.asarray(alpha_override, dtype=np.float64), (batch,)).copy()
        return t, np.maximum(alpha, ALPHA_FLOOR)
    if per_batch:
        if depth >= 2:
            t_s, a_s = sample_time_and_scale(rng)
        else:
            t_s, a_s = float(rng.uniform(0.0, 1.0)), 1.0
        return np.full(batch, t_s), np.full(batch, a_s)
    if depth >= 2:
        return sample_time_and_scale(rng, size=batch)
    # depth 1 consumes only the time draw, so fm and depth-1 recursive
    # runs see identical rng streams
    return rng.uniform(0.0, 1.0, size=batch), np.ones(batch)


def recfm_loss(model, batch, rng, cfg: TrainConfig,
               t_override=None, alpha_override=None) -> LossBreakdown:
    """Recursive trajectory loss over one batch.

    ``batch`` is (x0, x1, cond). Per element: draw t ~ U(0,1) and
    alpha ~ U(t,1), build the shared state x_t, then for every scale
    alpha**(i-1) regress the prediction at the aligned time onto the
    scaled target and (for i >= 2) penalize the gap to the scaled
    primary prediction. Terms are summed over state dims and averaged
    over the batch.
    """
    x0, x1, cond = batch
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape or x0.ndim != 2 or x0.shape[0] < 1:
        raise ValueError(f"batch endpoints must be matching (B, d) arrays, got "
                         f"{x0.shape} and {x1.shape}")
    b = x0.shape[0]
    depth = cfg.depth

    t, alpha = _draw_time_scale(rng, b, depth, cfg.per_batch_scale,
                                t_override, alpha_override)
    vstar = x1 - x0
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1

    traj_nodes: list[ad.Tensor] = []
    cons_nodes: list[ad.Tensor] = []
    preds: list[ad.Tensor] = []
    clamped = 0
    scale = np.ones(b)
    for i in range(depth):
        if i > 0:
            scale = scale * alpha
        raw_tau = t / np.maximum(scale, ALPHA_FLOOR)
        clamped += int(np.sum(raw_tau > 1.0))
        tau = np.minimum(raw_tau, 1.0)
        v_hat = model.predict(x_t, cond, tau, scale)
        preds.append(v_hat)
        target = scale[:, None] * vstar
        traj_nodes.append(ad.total(ad.square(v_hat - ad.constant(target))) * (1.0 / b))
        if i > 0:
            primary = preds[0]
            if cfg.stop_gradient:
                primary = ad.constant(primary.data)
            gap = v_hat - ad.rowscale(primary, scale)
            cons_nodes.append(ad.total(ad.square(gap)) * (1.0 / b))

    node = traj_nodes[0]
    for tn in traj_nodes[1:]:
        node = node + tn
    for cn in cons_nodes:
        node = node + cn * cfg.consistency_weight

    return LossBreakdown(total=node.item(), traj=[n.item() for n in traj_nodes],
                         cons=[n.item() for n in cons_nodes], mode=cfg.mode,
                         nfe=depth * b, clamped=clamped, node=node)


def vanilla_fm_loss(model, batch, rng, cfg: TrainConfig | None = None) -> LossBreakdown:
    """Plain flow-matching regression; shares the recursive code path at depth 1."""
    fm_cfg = replace(cfg, mode="fm") if cfg is not None else TrainConfig(mode="fm")
    return recfm_loss(model, batch, rng, fm_cfg)


def shortcut_loss(model, batch, d: float, rng, cfg: TrainConfig) -> LossBreakdown:
    """Step-size self-consistency baseline.

    Most of the batch gets the plain regression with the step-size
    condition at 0; the remaining fraction enforces that one step of
    size 2d matches two chained steps of size d, with the two-step
    target frozen (no gradient flows through the composed branch).
    """
    if not 0.0 < d <= 0.5:
        raise ValueError(f"step size d must lie in (0, 0.5], got {d}")
    x0, x1, cond = batch
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    b = x0.shape[0]
    n_cons = int(round(cfg.shortcut_fraction * b))
    n_fm = b - n_cons
    vstar = x1 - x0

    nodes = []
    nfe = 0
    fm_val = 0.0
    cons_val = 0.0

    if n_fm:
        t_fm = rng.uniform(0.0, 1.0, size=n_fm)
        x_t = (1.0 - t_fm)[:, None] * x0[:n_fm] + t_fm[:, None] * x1[:n_fm]
        c = cond[:n_fm] if cond is not None else None
        v_hat = model.predict(x_t, c, t_fm, np.zeros(n_fm))
        fm_node = ad.total(ad.square(v_hat - ad.constant(vstar[:n_fm]))) * (1.0 / b)
        nodes.append(fm_node)
        fm_val = fm_node.item()
        nfe += n_fm

    if n_cons:
        t_c = rng.uniform(0.0, 1.0 - 2.0 * d, size=n_cons)
        xs = x0[n_fm:]
        x1s = x1[n_fm:]
        x_t = (1.0 - t_c)[:, None] * xs + t_c[:, None] * x1s
        c = cond[n_fm:] if cond is not None else None
        v_big = model.predict(x_t, c, t_c, np.full(n_cons, 2.0 * d))
        big = ad.constant(x_t) + v_big * (2.0 * d)
        v1 = model.predict(x_t, c, t_c, np.full(n_cons, d)).data
        mid = x_t + d * v1
        v2 = model.predict(mid, c, t_c + d, np.full(n_cons, d)).data
        target = x_t + d * v1 + d * v2
        cons_node = ad.total(ad.square(big - ad.constant(target))) * (1.0 / b)
        nodes.append(cons_node)
        cons_val = cons_node.item()
        nfe += 3 * n_cons

    node = nodes[0]
    for extra in nodes[1:]:
        node = node + extra
    return LossBreakdown(total=node.item(), traj=[fm_val], cons=[cons_val],
                         mode="shortcut", nfe=nfe, node=node)


class AdamW:
    """Adam with decoupled weight decay; moments live in the ParamSet."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.95, eps=1e-8, weight_decay=1e-2):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay

    def step(self, params) -> None:
        params.step += 1
        bc1 = 1.0 - self.beta1 ** params.step
        bc2 = 1.0 - self.beta2 ** params.step
        for name in sorted(params.tensors):
            tensor = params.tensors[name]
            g = ad.grad_or_zero(tensor)
            m = params.m[name]
            v = params.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            new_data = tensor.data - self.lr * (update + self.weight_decay * tensor.data)
            params.tensors[name] = ad.parameter(new_data, name=name)


@dataclass
class TrainResult:
    model: MLPVelocityModel
    curve: list[list] = field(default_factory=list)
    nfe: int = 0
    aborted: bool = False
    final_val_mse: float = float("nan")


def curve_header(depth: int, mode: str) -> list[str]:
    header = ["iteration", "nfe", "loss_total"]
    header += [f"loss_traj_{i}" for i in range(1, depth + 1)]
    if mode != "fm":
        header += [f"loss_cons_{i}" for i in range(2, depth + 1)]
    if mode == "shortcut":
        header = ["iteration", "nfe", "loss_total", "loss_traj_1", "loss_cons_2"]
    header.append("val_mse")
    return header


def _one_step_val_mse(model, val: TrainData, noise: np.ndarray) -> float:
    """MSE of the mean over fixed noise draws of one-step generations."""
    n_val, members = noise.shape[0], noise.shape[1]
    d = val.x0.shape[1]
    flat_noise = noise.reshape(n_val * members, d)
    cond = None
    if val.cond is not None:
        cond = np.repeat(val.cond[:n_val], members, axis=0)
    v = model.predict(flat_noise, cond, 1.0, 1.0).data
    gen = (flat_noise - v).reshape(n_val, members, d)
    return float(np.mean((gen.mean(axis=1) - val.x0[:n_val]) ** 2))


def train(cfg: TrainConfig, model: MLPVelocityModel, data: TrainData,
          val: TrainData | None = None, out_dir=None) -> TrainResult:
    """Run the configured objective for ``cfg.iterations`` AdamW steps.

    Deterministic per seed. If the loss goes non-finite the run aborts
    and the parameters roll back to the last iterate that produced a
    finite loss. With ``out_dir`` set, writes train_curve.csv and a
    checkpoint.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    eval_every = cfg.eval_every or max(1, cfg.iterations // 25)

    val_noise = None
    if val is not None:
        n_val = min(cfg.val_max, val.n)
        val_rng = np.random.default_rng(split_seed(cfg.seed, 0x5EED))
        val_noise = val_rng.standard_normal((n_val, cfg.val_members, data.x0.shape[1]))

    result = TrainResult(model=model)
    last_good = model.params.copy_arrays()
    last_val = float("nan")

    for it in range(1, cfg.iterations + 1):
        idx = rng.integers(0, data.n, size=cfg.batch_size)
        x0 = data.x0[idx]
        cond = data.cond[idx] if data.cond is not None else None
        x1 = rng.standard_normal(x0.shape)
        try:
            if cfg.mode == "shortcut":
                d = float(cfg.shortcut_steps[rng.integers(0, len(cfg.shortcut_steps))])
                breakdown = shortcut_loss(model, (x0, x1, cond), d, rng, cfg)
            else:
                breakdown = recfm_loss(model, (x0, x1, cond), rng, cfg)
            last_good = model.params.copy_arrays()
            breakdown.node.backward()
            opt.step(model.params)
        except ad.NonFiniteError:
            model.params.load_arrays(last_good)
            result.aborted = True
            break
        result.nfe += breakdown.nfe

        val_mse = None
        if val_noise is not None and (it % eval_every == 0 or it == cfg.iterations):
            try:
                val_mse = _one_step_val_mse(model, val, val_noise)
            except ad.NonFiniteError:
                val_mse = float("nan")
            last_val = val_mse
        row = [it, result.nfe, breakdown.total, *breakdown.traj]
        if cfg.mode != "fm":
            row += breakdown.cons if breakdown.cons else [0.0] * (cfg.depth - 1)
        row.append(val_mse)
        result.curve.append(row)

    result.final_val_mse = last_val
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "train_curve.csv", curve_header(cfg.depth, cfg.mode), result.curve)
        from .model import save_checkpoint

        save_checkpoint(model, out, extra={"seed": cfg.seed, "mode": cfg.mode,
                                           "nfe": result.nfe, "aborted": result.aborted})
    return result

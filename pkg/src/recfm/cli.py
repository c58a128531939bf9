"""Command-line entry point: data generation, training, sampling,
evaluation, theory verification, and ablation sweeps.

Every run owns one output directory guarded by a lock file and writes a
manifest.json (echoed config, seed, versions, timings) next to its CSV
results. Exit codes: 0 success, 1 validation error (bad flags, malformed
config, missing inputs), 2 runtime failure (including failed
verification checks).
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    build_forecast_dataset,
    load_dataset,
    make_gaussian_pairs,
    save_dataset,
    simulate_pendulum,
    windows,
)
from .metrics import METRICS_CSV_HEADER, forecast_scores, kinetic_energy_accuracy, wave_residual
from .model import MLPVelocityModel, ModelConfig, load_checkpoint
from .sampling import SampleConfig, generate_ensemble, rollout_ensemble
from .tensor_io import write_tensor
from .training import TrainConfig, TrainData, train
from .util import split_seed, write_csv
from .verify import (
    consistency_pde_residual,
    estimate_acceleration,
    marginal_test,
    random_composite_gradcheck,
    save_report,
    shortcut_probe,
    truncation_study,
)


class CliError(Exception):
    """Validation failure: bad flags, config, or inputs (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "data": {"path": "", "context": 1, "chunk": 1, "val_fraction": 0.1},
    "model": {"hidden_widths": [256, 256, 256], "activation": "tanh", "embed_dim": 16},
    "train": {"mode": "recfm", "depth": 2, "consistency_weight": 1.0,
              "batch_size": 64, "iterations": 2000, "learning_rate": 1e-3,
              "beta1": 0.9, "beta2": 0.95, "weight_decay": 1e-2,
              "stop_gradient": False, "per_batch_scale": False},
    "seed": 0,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _load_config(defaults: dict, config_path, overrides) -> dict:
    cfg = json.loads(json.dumps(defaults))
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"malformed config {path}: {exc}") from exc
        flat = {k: v for k, v in loaded.items() if "." in k}
        nested = {k: v for k, v in loaded.items() if "." not in k}
        _deep_update(cfg, nested)
        for key, value in flat.items():
            _set_dotted(cfg, key, value)
    for pair in overrides or []:
        if "=" not in pair:
            raise CliError(f"override must look like key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        _set_dotted(cfg, key, _parse_value(raw))
    return cfg


def _resolve_seed(flag_seed, cfg_seed=None) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    if cfg_seed is not None:
        return int(cfg_seed)
    env = os.environ.get("RECFM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliError(f"RECFM_SEED must be an integer, got {env!r}") from exc
    return 0


class _Run:
    """Locked output directory plus manifest bookkeeping."""

    def __init__(self, out_dir, command: str, config: dict, seed: int):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.lock = self.out / "lock"
        try:
            self.lock.touch(exist_ok=False)
        except FileExistsError:
            raise CliError(f"{self.out} is locked by another run (remove 'lock' to force)")
        self.command = command
        self.config = config
        self.seed = seed
        self.started = time.time()

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "recfm": __version__,
            },
            "timings": {"wall_s": round(time.time() - self.started, 3)},
        }
        path = self.out / "manifest.json"
        if path.exists():
            # gen-data writes the dataset manifest first; keep its fields
            existing = json.loads(path.read_text())
            existing.update(manifest)
            manifest = existing
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        self.lock.unlink(missing_ok=True)

    def abandon(self) -> None:
        self.lock.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# data loading shared by train / sample / eval
# ---------------------------------------------------------------------------

def _load_any_dataset(path):
    path = Path(path)
    if not path.exists():
        raise CliError(f"data path not found: {path}")
    manifest = path / "manifest.json"
    if not manifest.exists():
        raise CliError(f"{path} has no manifest.json")
    kind = json.loads(manifest.read_text()).get("kind")
    if kind == "gaussian":
        from .tensor_io import read_tensor

        x0 = read_tensor(path / "x0.rft1")
        return "gaussian", x0
    if kind in ("advection", "wave"):
        return kind, load_dataset(path)
    raise CliError(f"unsupported dataset kind {kind!r} in {manifest}")


def _train_arrays(kind, data, context, chunk, val_fraction):
    if kind == "gaussian":
        n = data.shape[0]
        n_val = max(1, int(round(val_fraction * n)))
        return (TrainData(data[:-n_val]), TrainData(data[-n_val:]), 0)
    cond, target = windows(data.splits["train"], context=context, chunk=chunk)
    cond_v, target_v = windows(data.splits["val"], context=context, chunk=chunk)
    return (TrainData(target, cond), TrainData(target_v, cond_v), cond.shape[1])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    seed = _resolve_seed(args.seed)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    config["seed"] = seed
    run = _Run(args.out, "gen-data", config, seed)
    try:
        if args.dataset == "pendulum":
            trace = simulate_pendulum(args.v0, args.alpha, args.bounces, args.dt)
            write_tensor(run.out / "positions.rft1", trace.positions)
            write_csv(run.out / "trace.csv", ["time", "position"],
                      [[t, x] for t, x in zip(trace.times, trace.positions)])
            write_csv(run.out / "speeds.csv", ["bounce", "speed"],
                      [[i, v] for i, v in enumerate(trace.bounce_speeds)])
            extra = {"kind": "pendulum", "v0": args.v0, "alpha": args.alpha,
                     "bounces": args.bounces, "dt": args.dt}
        elif args.dataset == "gaussian":
            pairs = make_gaussian_pairs(args.n, args.dim, seed)
            write_tensor(run.out / "x0.rft1", pairs.x0)
            write_tensor(run.out / "x1.rft1", pairs.x1)
            write_csv(run.out / "summary.csv", ["n", "dim", "seed"],
                      [[pairs.n, pairs.dim, seed]])
            extra = {"kind": "gaussian", "n": args.n, "dim": args.dim}
        else:
            if args.dataset == "advection":
                params = {"nu": args.nu, "c": [args.cx, args.cy]}
            else:
                params = {"omega_range": [args.omega_lo, args.omega_hi]}
            ds = build_forecast_dataset(args.dataset, n_traj=args.trajectories,
                                        h=args.size, w=args.size, n_frames=args.frames,
                                        dt=args.dt, seed=seed, **params)
            save_dataset(ds, run.out)
            write_csv(run.out / "summary.csv", ["split", "trajectories", "frames"],
                      [[name, arr.shape[0], arr.shape[1]]
                       for name, arr in sorted(ds.splits.items())])
            extra = None  # save_dataset wrote the dataset manifest fields
        if extra is not None:
            with open(run.out / "manifest.json", "w") as fh:
                json.dump(extra, fh, indent=2, sort_keys=True)
        run.finish()
    except Exception:
        run.abandon()
        raise
    print(f"gen-data[{args.dataset}] -> {run.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(TRAIN_DEFAULTS, args.config, args.set)
    if args.data:
        cfg["data"]["path"] = args.data
    if not cfg["data"]["path"]:
        raise CliError("no dataset: pass --data or set data.path in the config")
    seed = _resolve_seed(args.seed, cfg.get("seed"))
    cfg["seed"] = seed
    run = _Run(args.out, "train", cfg, seed)
    try:
        kind, data = _load_any_dataset(cfg["data"]["path"])
        train_data, val_data, cond_dim = _train_arrays(
            kind, data, cfg["data"]["context"], cfg["data"]["chunk"],
            cfg["data"]["val_fraction"])
        model_cfg = ModelConfig(state_dim=train_data.x0.shape[1], cond_dim=cond_dim,
                                hidden_widths=tuple(cfg["model"]["hidden_widths"]),
                                activation=cfg["model"]["activation"],
                                embed_dim=cfg["model"]["embed_dim"], seed=seed)
        train_cfg = TrainConfig(seed=seed, **cfg["train"])
        model = MLPVelocityModel(model_cfg)
        result = train(train_cfg, model, train_data, val_data, out_dir=run.out)

        from .plots import plot_loss_curve

        plot_loss_curve(result.curve, run.out / "loss_curve.svg")
        with open(run.out / "checkpoint.json") as fh:
            ckpt = json.load(fh)
        ckpt["data"] = {"path": str(cfg["data"]["path"]), "kind": kind,
                        "context": cfg["data"]["context"], "chunk": cfg["data"]["chunk"]}
        with open(run.out / "checkpoint.json", "w") as fh:
            json.dump(ckpt, fh, indent=2, sort_keys=True)
        run.finish()
    except Exception:
        run.abandon()
        raise
    status = "aborted (non-finite loss)" if result.aborted else "ok"
    print(f"train[{train_cfg.mode}] {status}: {result.nfe} NFE, "
          f"final val MSE {result.final_val_mse:.6g} -> {run.out}")
    return 0


def _load_run_model(ckpt_dir):
    path = Path(ckpt_dir)
    if not (path / "checkpoint.json").exists():
        raise CliError(f"no checkpoint.json under {path}")
    model = load_checkpoint(path)
    meta = json.loads((path / "checkpoint.json").read_text())
    return model, meta


def _ensemble_rollouts(model, meta, dataset, split, steps, members, seed):
    context = meta["data"]["context"]
    chunk = meta["data"]["chunk"]
    rollouts, truths = [], []
    frames = dataset.splits[split]
    for idx in range(frames.shape[0]):
        init = frames[idx, :context]
        horizon = frames.shape[1] - context
        cfg = SampleConfig(steps=steps, members=members,
                           seed=split_seed(seed, 1000 + idx), chunk=chunk)
        ens = rollout_ensemble(model, init, horizon, cfg)
        rollouts.append(ens.members)
        truths.append(frames[idx, context:])
    return rollouts, truths


def cmd_sample(args) -> int:
    seed = _resolve_seed(args.seed)
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    config["seed"] = seed
    run = _Run(args.out, "sample", config, seed)
    try:
        model, meta = _load_run_model(args.ckpt)
        if meta["data"]["kind"] == "gaussian":
            ens = generate_ensemble(model.field(), model.cfg.state_dim,
                                    SampleConfig(steps=args.steps, members=args.members,
                                                 seed=seed))
            write_tensor(run.out / "samples.rft1", ens.members)
            write_csv(run.out / "samples.csv",
                      ["member", "steps", "mean", "std"],
                      [[m, args.steps, float(ens.members[m].mean()),
                        float(ens.members[m].std())] for m in range(args.members)])
        else:
            _, dataset = _load_any_dataset(meta["data"]["path"])
            rollouts, _ = _ensemble_rollouts(model, meta, dataset, args.split,
                                             args.steps, args.members, seed)
            rows = []
            for idx, members in enumerate(rollouts):
                write_tensor(run.out / f"ensemble_{idx:03d}.rft1", members)
                rows.append([idx, args.members, args.steps, members.shape[1],
                             float(np.mean(np.abs(members)))])
            write_csv(run.out / "ensembles.csv",
                      ["trajectory", "members", "steps", "horizon", "mean_abs"], rows)
        run.finish()
    except Exception:
        run.abandon()
        raise
    print(f"sample -> {run.out}")
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    config["seed"] = seed
    run = _Run(args.out, "eval", config, seed)
    try:
        model, meta = _load_run_model(args.ckpt)
        if meta["data"]["kind"] == "gaussian":
            raise CliError("eval needs a field-forecast checkpoint; for gaussian "
                           "models use `recfm verify`")
        kind, dataset = _load_any_dataset(meta["data"]["path"])
        rollouts, truths = _ensemble_rollouts(model, meta, dataset, args.split,
                                              args.steps, args.members, seed)
        scores = forecast_scores(rollouts, truths)
        ke_val, wave_val = None, None
        if kind == "advection":
            accs = []
            for members, truth in zip(rollouts, truths):
                pred = dataset.denormalize(members.mean(axis=0))
                real = dataset.denormalize(truth)
                accs.append(kinetic_energy_accuracy(pred, real, [0, 1])[1])
            ke_val = float(np.mean(accs))
        if kind == "wave":
            residuals = []
            for idx, members in enumerate(rollouts):
                omega = dataset.per_traj[args.split][idx]["omega"]
                pred = dataset.denormalize(members.mean(axis=0))
                residuals.append(wave_residual(pred, omega, dataset.dt))
            wave_val = float(np.mean(residuals))
        row = [kind, args.split, meta.get("mode", "unknown"), args.steps, args.members,
               scores["crps"], scores["mse"], scores["ssr"], ke_val, wave_val, seed]
        write_csv(run.out / "metrics.csv", METRICS_CSV_HEADER, [row])
        run.finish()
    except Exception:
        run.abandon()
        raise
    print(f"eval crps={scores['crps']:.6g} mse={scores['mse']:.6g} "
          f"ssr={scores['ssr']:.6g} -> {run.out}")
    return 0


def _verify_points(model, meta, n, seed):
    """States and times in the data region of a trained model."""
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.05, 0.95, size=n)
    if meta["data"]["kind"] == "gaussian":
        xs = rng.standard_normal((n, model.cfg.state_dim))
        return model.field(), xs, ts
    _, dataset = _load_any_dataset(meta["data"]["path"])
    cond, target = windows(dataset.splits["val"], context=meta["data"]["context"],
                           chunk=meta["data"]["chunk"])
    idx = rng.integers(0, cond.shape[0], size=n)
    noise = rng.standard_normal((n, model.cfg.state_dim))
    xs = (1.0 - ts)[:, None] * target[idx] + ts[:, None] * noise
    return model.field(cond[idx]), xs, ts


def cmd_verify(args) -> int:
    seed = _resolve_seed(args.seed)
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    config["seed"] = seed
    run = _Run(args.out, "verify", config, seed)
    try:
        from .datasets import gaussian_oracle_velocity

        reports = []
        if args.check == "gradcheck":
            reports.append(random_composite_gradcheck(args.graphs, seed))
        elif args.check == "marginal":
            fn = lambda x, t, a: gaussian_oracle_velocity(np.asarray(x), t, a)
            for alpha in (0.25, 0.5, 1.0):
                rep = marginal_test(fn, alpha, n=args.n, steps=args.steps, seed=seed)
                rep.check = f"marginal_alpha_{alpha}"
                reports.append(rep)
        elif args.check in ("truncation", "consistency", "acceleration", "shortcut"):
            if args.ckpt:
                model, meta = _load_run_model(args.ckpt)
                fn, xs, ts = _verify_points(model, meta, args.n, seed)
                x1 = np.random.default_rng(seed).standard_normal(
                    (min(args.n, 64), model.cfg.state_dim))
            else:
                # analytic fallback: curved linear field v = x
                fn = lambda x, t, a: np.asarray(x, dtype=np.float64)
                rng = np.random.default_rng(seed)
                xs = rng.uniform(-2, 2, size=(args.n, 2))
                ts = rng.uniform(0.1, 0.4, size=args.n)
                x1 = rng.standard_normal((64, 2))
            if args.check == "truncation":
                reports.append(truncation_study(fn, [2, 4, 8, 16, 32], x1, 512))
            elif args.check == "consistency":
                ts_mid = np.clip(ts, 0.05, 0.95)
                reports.append(consistency_pde_residual(fn, xs, ts_mid))
            elif args.check == "acceleration":
                ts_mid = np.clip(ts, 0.05, 0.95)
                reports.append(estimate_acceleration(fn, xs, ts_mid))
            else:
                ts_lo = np.clip(ts, 0.05, 0.5)
                reports.append(shortcut_probe(fn, [0.05, 0.1, 0.2, 0.25], xs, ts_lo))
        else:
            raise CliError(f"unknown check {args.check!r}")

        failed = [r.check for r in reports if r.passed is False]
        for rep in reports:
            save_report(rep, run.out)
        write_csv(run.out / "verify_summary.csv", ["check", "passed"],
                  [[r.check, "" if r.passed is None else str(r.passed)] for r in reports])
        run.finish()
    except Exception:
        run.abandon()
        raise
    for rep in reports:
        gist = ", ".join(f"{k}={v:.4g}" for k, v in rep.stats.items()
                         if isinstance(v, (int, float)) and not isinstance(v, bool))
        print(f"verify[{rep.check}] passed={rep.passed}: {gist}")
    if failed:
        print(f"verification FAILED: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(TRAIN_DEFAULTS, args.config, args.set)
    if args.data:
        cfg["data"]["path"] = args.data
    if not cfg["data"]["path"]:
        raise CliError("no dataset: pass --data or set data.path in the config")
    seed = _resolve_seed(args.seed, cfg.get("seed"))
    cfg["seed"] = seed
    values = [_parse_value(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise CliError("no ablation values given")
    if args.param not in ("lambda", "depth"):
        raise CliError(f"unsupported ablation parameter {args.param!r}")
    run = _Run(args.out, "ablate", cfg, seed)
    try:
        kind, data = _load_any_dataset(cfg["data"]["path"])
        train_data, val_data, cond_dim = _train_arrays(
            kind, data, cfg["data"]["context"], cfg["data"]["chunk"],
            cfg["data"]["val_fraction"])
        base_iters = cfg["train"]["iterations"]
        rows = []
        for value in values:
            t_cfg = json.loads(json.dumps(cfg["train"]))
            if args.param == "lambda":
                t_cfg["consistency_weight"] = float(value)
            else:
                t_cfg["depth"] = int(value)
                t_cfg["mode"] = "fm" if int(value) == 1 else "recfm"
            depth = t_cfg["depth"]
            # keep the NFE budget matched across depths
            t_cfg["iterations"] = max(1, base_iters // max(depth, 1))
            model_cfg = ModelConfig(state_dim=train_data.x0.shape[1], cond_dim=cond_dim,
                                    hidden_widths=tuple(cfg["model"]["hidden_widths"]),
                                    activation=cfg["model"]["activation"],
                                    embed_dim=cfg["model"]["embed_dim"], seed=seed)
            model = MLPVelocityModel(model_cfg)
            result = train(TrainConfig(seed=seed, **t_cfg), model, train_data, val_data)
            if kind == "gaussian":
                rows.append([args.param, value, seed, t_cfg["iterations"], result.nfe,
                             None, None, None, result.final_val_mse])
            else:
                meta = {"data": {"context": cfg["data"]["context"],
                                 "chunk": cfg["data"]["chunk"], "kind": kind,
                                 "path": str(cfg["data"]["path"])}}
                rollouts, truths = _ensemble_rollouts(model, meta, data, "test",
                                                      args.steps, args.members, seed)
                scores = forecast_scores(rollouts, truths)
                rows.append([args.param, value, seed, t_cfg["iterations"], result.nfe,
                             scores["crps"], scores["mse"], scores["ssr"],
                             result.final_val_mse])
        write_csv(run.out / "ablation.csv",
                  ["param", "value", "seed", "iterations", "nfe", "crps", "mse",
                   "ssr", "val_mse"], rows)

        from .plots import plot_metric_vs_param

        metric_col = 6 if kind != "gaussian" else 8
        plot_metric_vs_param(values, [r[metric_col] for r in rows], args.param,
                             "mse" if kind != "gaussian" else "val_mse",
                             run.out / "ablation.svg")
        run.finish()
    except Exception:
        run.abandon()
        raise
    print(f"ablate[{args.param}] over {values} -> {run.out}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="recfm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"recfm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset", prog="recfm gen-data")
    p.add_argument("--dataset", required=True,
                   choices=["pendulum", "gaussian", "advection", "wave"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--v0", type=float, default=1.0, help="pendulum launch speed")
    p.add_argument("--alpha", type=float, default=0.8, help="pendulum velocity retention")
    p.add_argument("--bounces", type=int, default=5, help="pendulum wall bounces")
    p.add_argument("--dt", type=float, default=0.05, help="time step")
    p.add_argument("--n", type=int, default=4096, help="gaussian pair count")
    p.add_argument("--dim", type=int, default=1, help="gaussian pair dimension")
    p.add_argument("--trajectories", type=int, default=24, help="field trajectories")
    p.add_argument("--size", type=int, default=32, help="grid size per side")
    p.add_argument("--frames", type=int, default=64, help="frames per trajectory")
    p.add_argument("--nu", type=float, default=0.02, help="advection diffusivity")
    p.add_argument("--cx", type=float, default=0.4, help="advection velocity x")
    p.add_argument("--cy", type=float, default=-0.25, help="advection velocity y")
    p.add_argument("--omega-lo", type=float, default=2.0, help="wave omega lower bound")
    p.add_argument("--omega-hi", type=float, default=4.0, help="wave omega upper bound")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a velocity model", prog="recfm train")
    p.add_argument("--data", default=None, help="dataset directory (overrides config)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted-key config override (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples or forecast ensembles",
                       prog="recfm sample")
    p.add_argument("--ckpt", required=True, help="training run directory")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--members", type=int, default=8)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="score forecast ensembles", prog="recfm eval")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--members", type=int, default=8)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run an empirical theory check", prog="recfm verify")
    p.add_argument("--check", required=True,
                   choices=["gradcheck", "truncation", "marginal", "consistency",
                            "acceleration", "shortcut"])
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", default=None, help="optional training run to probe")
    p.add_argument("--n", type=int, default=256, help="points / samples")
    p.add_argument("--steps", type=int, default=256, help="integration steps (marginal)")
    p.add_argument("--graphs", type=int, default=50, help="random graphs (gradcheck)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ablate", help="sweep a training parameter", prog="recfm ablate")
    p.add_argument("--param", required=True, help="lambda or depth")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--steps", type=int, default=1, help="inference steps for eval")
    p.add_argument("--members", type=int, default=8, help="ensemble members for eval")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""SVG convenience plots for run directories. Never acceptance-bearing."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "recfm"

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_loss_curve", "plot_error_vs_k", "plot_metric_vs_param"]


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_loss_curve(curve_rows, out_path, val_column: int = -1) -> None:
    """Training loss (and validation MSE where logged) vs iteration."""
    iters = [row[0] for row in curve_rows]
    losses = [row[2] for row in curve_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, losses, lw=1.0, label="train loss")
    val = [(row[0], row[val_column]) for row in curve_rows if row[val_column] is not None]
    if val:
        ax.plot(*zip(*val), lw=1.2, marker="o", ms=3, label="val 1-step MSE")
    ax.set_xlabel("iteration")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def plot_error_vs_k(ks, errors, out_path, title="generation error vs steps") -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(ks, errors, marker="o")
    ax.set_xlabel("Euler steps K")
    ax.set_ylabel("error")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, out_path)


def plot_metric_vs_param(values, metrics, param_name, metric_name, out_path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(range(len(values)), metrics, marker="s")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels([str(v) for v in values])
    ax.set_xlabel(param_name)
    ax.set_ylabel(metric_name)
    fig.tight_layout()
    _save(fig, out_path)

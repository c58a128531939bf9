"""Shared helpers: seeding, deterministic CSV writing."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["split_seed", "rng_from", "format_value", "write_csv"]

_MASK64 = (1 << 64) - 1


def split_seed(root_seed: int, index: int) -> int:
    """Derive the ``index``-th child seed from a root seed (splitmix64 step).

    Children are decoupled from each other and from the root stream, so
    ensemble members stay reproducible independent of generation order.
    """
    z = (int(root_seed) + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def rng_from(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def format_value(v) -> str:
    """Canonical CSV cell: shortest round-trip repr for floats."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])

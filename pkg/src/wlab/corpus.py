"""Deterministic random field corpora shared by the test suites."""

from __future__ import annotations

import numpy as np

from .dyadic import CellField

__all__ = ["random_cellfield", "lipschitz_sample", "cell_centers"]


def cell_centers(n_max: int, lo, shape):
    """Center coordinates (t, x1, ..., xd) of every cell in the window."""
    ts = 4.0 ** (-n_max)
    xs = 2.0 ** (-n_max)
    axes = [(np.arange(lo[0], lo[0] + shape[0]) + 0.5) * ts]
    for ax in range(1, len(lo)):
        axes.append((np.arange(lo[ax], lo[ax] + shape[ax]) + 0.5) * xs)
    return np.meshgrid(*axes, indexing="ij")


def random_cellfield(
    rng: np.random.Generator,
    d: int = 1,
    d1: int = 1,
    n_max: int = 3,
    shape=None,
    lo=None,
    alpha: float = 0.0,
    kind: str = "trig",
    nonneg: bool = False,
) -> CellField:
    """A reproducible CellField: 'trig' samples a random low-frequency trig
    polynomial at cell centers, 'cells' draws independent cell values,
    'spike' puts mass on a few cells."""
    if shape is None:
        shape = (8,) + (8,) * d
    if lo is None:
        lo = (0,) * (d + 1)
    if kind == "trig":
        grids = cell_centers(n_max, lo, shape)
        vals = np.zeros(tuple(shape) + (d1,))
        for k in range(d1):
            acc = np.zeros(shape)
            for _ in range(3):
                amp = rng.uniform(0.2, 1.0)
                om = rng.integers(-3, 4, size=d + 1)
                ph = rng.uniform(0.0, 2.0 * np.pi)
                arg = ph + 2.0 * np.pi * sum(om[j] * grids[j] for j in range(d + 1))
                acc += amp * np.cos(arg)
            vals[..., k] = acc
    elif kind == "cells":
        vals = rng.uniform(-1.0, 1.0, size=tuple(shape) + (d1,))
    elif kind == "spike":
        vals = np.zeros(tuple(shape) + (d1,))
        n_spikes = max(1, int(np.prod(shape)) // 16)
        flat = rng.choice(int(np.prod(shape)), size=n_spikes, replace=False)
        for fidx in flat:
            idx = np.unravel_index(fidx, shape)
            vals[idx] = rng.uniform(1.0, 8.0, size=d1)
    else:
        raise ValueError(f"unknown corpus kind {kind!r}")
    if nonneg:
        vals = np.abs(vals)
    return CellField(vals, n_max, tuple(lo), alpha)


def lipschitz_sample(rng: np.random.Generator, d: int, n_max: int, lo, shape, alpha: float):
    """CellField of center samples of A*sin(w0 t + w.x + phase) together
    with its Lipschitz constant for the metric |dt| + sum |dx_k|."""
    amp = rng.uniform(0.5, 2.0)
    om = rng.uniform(-3.0, 3.0, size=d + 1)
    ph = rng.uniform(0.0, 2.0 * np.pi)
    grids = cell_centers(n_max, lo, shape)
    arg = ph + sum(om[j] * grids[j] for j in range(d + 1))
    vals = (amp * np.sin(arg))[..., None]
    lip = amp * float(np.max(np.abs(om)))
    return CellField(vals, n_max, tuple(lo), alpha), lip

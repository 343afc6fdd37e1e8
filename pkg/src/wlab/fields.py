"""Node-sampled fields on uniform space-time grids.

These are the substrate for finite differences, weighted norms and the
solvers.  Smooth compactly supported test fields vanish on a declared
margin near x1 = 0 and near all outer faces, so the weight degeneracy at
the boundary is integrated in closed form but never sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import CellField

__all__ = [
    "GridSpec",
    "NodeField",
    "sample",
    "derivative",
    "dilate",
    "to_cellfield",
    "m_multiply",
    "margin_max",
    "save_nodefield",
    "load_nodefield",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: nt time nodes from t0 with step dt, nx[k] spatial
    nodes from x_lo[k] with step dx[k]."""

    t0: float
    dt: float
    nt: int
    x_lo: tuple
    dx: tuple
    nx: tuple

    def __post_init__(self):
        if self.nt < 1 or any(n < 2 for n in self.nx):
            raise ValueError("grid needs at least one time node and two nodes per axis")
        if self.dt <= 0 or any(h <= 0 for h in self.dx):
            raise ValueError("grid steps must be positive")
        if self.x_lo[0] < 0:
            raise ValueError("grid must lie in the closed half space")

    @property
    def d(self):
        return len(self.nx)

    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def axis(self, k):
        return self.x_lo[k] + self.dx[k] * np.arange(self.nx[k])


@dataclass(frozen=True)
class NodeField:
    """R^{d1}-valued node samples, shape (nt, nx1, ..., nxd, d1)."""

    values: np.ndarray
    t0: float
    dt: float
    x_lo: tuple
    dx: tuple

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.values.ndim != len(self.dx) + 2:
            raise ValueError("values must be (time, space..., components)")

    @property
    def d(self):
        return len(self.dx)

    @property
    def d1(self):
        return self.values.shape[-1]

    @property
    def nt(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1:-1]

    @property
    def T(self):
        return self.dt * (self.nt - 1)

    def grid(self) -> GridSpec:
        return GridSpec(self.t0, self.dt, self.nt, self.x_lo, self.dx, self.nx)

    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def axis(self, k):
        return self.x_lo[k] + self.dx[k] * np.arange(self.nx[k])

    def at_time(self, i: int) -> "NodeField":
        """Single-slice spatial field at time node i."""
        return NodeField(self.values[i : i + 1], float(self.times()[i]), self.dt, self.x_lo, self.dx)


def sample(fn, grid: GridSpec, d1: int = 1) -> NodeField:
    """Evaluate fn on the grid.  fn receives broadcast coordinate arrays
    (t, x1, ..., xd) and returns values of shape grid-shape or
    grid-shape + (d1,)."""
    mesh = np.meshgrid(grid.times(), *[grid.axis(k) for k in range(grid.d)], indexing="ij")
    out = np.asarray(fn(*mesh), dtype=float)
    shape = (grid.nt,) + tuple(grid.nx)
    if out.shape == shape:
        out = out[..., None]
    if out.shape != shape + (d1,):
        raise ValueError(f"sampled values have shape {out.shape}, expected {shape + (d1,)}")
    return NodeField(out, grid.t0, grid.dt, grid.x_lo, grid.dx)


def _diff1(arr, axis, h):
    out = np.empty_like(arr)
    c = [slice(None)] * arr.ndim

    def sl(i):
        c2 = list(c)
        c2[axis] = i
        return tuple(c2)

    out[sl(slice(1, -1))] = (arr[sl(slice(2, None))] - arr[sl(slice(0, -2))]) / (2 * h)
    out[sl(0)] = (-3 * arr[sl(0)] + 4 * arr[sl(1)] - arr[sl(2)]) / (2 * h)
    out[sl(-1)] = (3 * arr[sl(-1)] - 4 * arr[sl(-2)] + arr[sl(-3)]) / (2 * h)
    return out


def _diff2(arr, axis, h):
    out = np.empty_like(arr)
    c = [slice(None)] * arr.ndim

    def sl(i):
        c2 = list(c)
        c2[axis] = i
        return tuple(c2)

    out[sl(slice(1, -1))] = (
        arr[sl(slice(2, None))] - 2 * arr[sl(slice(1, -1))] + arr[sl(slice(0, -2))]
    ) / (h * h)
    out[sl(0)] = (2 * arr[sl(0)] - 5 * arr[sl(1)] + 4 * arr[sl(2)] - arr[sl(3)]) / (h * h)
    out[sl(-1)] = (2 * arr[sl(-1)] - 5 * arr[sl(-2)] + 4 * arr[sl(-3)] - arr[sl(-4)]) / (h * h)
    return out


def derivative(u: NodeField, beta, t_order: int = 0) -> NodeField:
    """Finite-difference D^beta (d/dt)^t_order u: second-order central
    stencils inside, second-order one-sided at faces; higher orders by
    composing first and second stencils per axis."""
    beta = tuple(beta)
    if len(beta) != u.d:
        raise ValueError("multi-index length must match dimension")
    if sum(beta) > 4 or t_order not in (0, 1):
        raise ValueError("derivative order too large for the stencil set")
    for b, n in zip(beta, u.nx):
        if b > 0 and n < 4:
            raise ValueError("grid too small for the requested derivative")
    out = u.values
    for ax, b in enumerate(beta):
        h = u.dx[ax]
        for _ in range(b // 2):
            out = _diff2(out, ax + 1, h)
        if b % 2:
            out = _diff1(out, ax + 1, h)
    for _ in range(t_order):
        if u.nt < 3:
            raise ValueError("need at least three time nodes for a time derivative")
        out = _diff1(out, 0, u.dt)
    return NodeField(out, u.t0, u.dt, u.x_lo, u.dx)


def dilate(u: NodeField, c: float) -> NodeField:
    """u(c^2 t, c x) represented on the rescaled grid: values are re-indexed
    as-is with steps (dt/c^2, dx/c)."""
    if c <= 0:
        raise ValueError("dilation factor must be positive")
    return NodeField(
        u.values,
        u.t0 / (c * c),
        u.dt / (c * c),
        tuple(v / c for v in u.x_lo),
        tuple(h / c for h in u.dx),
    )


def to_cellfield(u: NodeField, n_max: int, alpha: float) -> CellField:
    """Cell values as arithmetic node means over the half-open node block
    of each dyadic cell (a quadrature choice; exact for constants)."""
    tc = 4.0 ** (-n_max)
    xc = 2.0 ** (-n_max)
    # nodes per cell along each axis
    mt = tc / u.dt
    if abs(mt - round(mt)) > 1e-9 or round(mt) < 1:
        raise ValueError("time step does not resolve the dyadic time cell")
    mt = int(round(mt))
    ms = []
    for h in u.dx:
        m = xc / h
        if abs(m - round(m)) > 1e-9 or round(m) < 1:
            raise ValueError("spatial step does not resolve the dyadic cell")
        ms.append(int(round(m)))
    lo = [u.t0 / tc] + [v / xc for v in u.x_lo]
    for v in lo:
        if abs(v - round(v)) > 1e-6:
            raise ValueError("grid origin is not on the dyadic lattice")
    lo = tuple(int(round(v)) for v in lo)
    counts = [(u.nt - 1) // mt] + [(n - 1) // m for n, m in zip(u.nx, ms)]
    if u.nt == 1:
        raise ValueError("cell conversion needs a positive time extent")
    if (u.nt - 1) % mt or any((n - 1) % m for n, m in zip(u.nx, ms)):
        raise ValueError("grid extent is not a whole number of cells")
    blocks = [mt] + ms
    arr = u.values[tuple(slice(0, c * b) for c, b in zip(counts, blocks))]
    shape = []
    for cnt, b in zip(counts, blocks):
        shape.extend([cnt, b])
    shape.append(u.d1)
    arr = arr.reshape(shape)
    vals = arr.mean(axis=tuple(range(1, 2 * (u.d + 1), 2)))
    return CellField(vals, n_max, lo, alpha)


def m_multiply(u: NodeField, m: float) -> NodeField:
    """Multiply nodewise by (x1)^m.  For negative m the x1 = 0 column is
    set to zero; fields obeying the margin convention vanish there."""
    x1 = u.axis(0)
    shape = [1] * u.values.ndim
    shape[1] = len(x1)
    if m >= 0:
        fac = x1 ** m
    else:
        with np.errstate(divide="ignore"):
            fac = np.where(x1 > 0.0, x1 ** m, 0.0)
    return NodeField(u.values * fac.reshape(shape), u.t0, u.dt, u.x_lo, u.dx)


def margin_max(u: NodeField, width: int) -> float:
    """Largest |value| on the spatial margin of the given node width."""
    worst = 0.0
    for ax in range(1, u.d + 1):
        sl = [slice(None)] * u.values.ndim
        sl[ax] = slice(0, width)
        worst = max(worst, float(np.max(np.abs(u.values[tuple(sl)]), initial=0.0)))
        sl[ax] = slice(-width, None)
        worst = max(worst, float(np.max(np.abs(u.values[tuple(sl)]), initial=0.0)))
    return worst


def save_nodefield(u: NodeField, path) -> None:
    header = {
        "d": u.d,
        "d1": u.d1,
        "steps": {"dt": u.dt, "dx": list(u.dx)},
        "domain": {"t0": u.t0, "x_lo": list(u.x_lo), "nx": list(u.nx), "nt": u.nt},
        "T": u.T,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for idx in np.ndindex((u.nt,) + tuple(u.nx)):
            row = [str(i) for i in idx] + [repr(float(v)) for v in u.values[idx]]
            fh.write(",".join(row) + "\n")


def load_nodefield(path) -> NodeField:
    with open(path) as fh:
        header = json.loads(fh.readline())
        shape = (header["domain"]["nt"],) + tuple(header["domain"]["nx"])
        values = np.zeros(shape + (header["d1"],))
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            idx = tuple(int(v) for v in parts[: header["d"] + 1])
            values[idx] = [float(v) for v in parts[header["d"] + 1 :]]
    return NodeField(
        values,
        header["domain"]["t0"],
        header["steps"]["dt"],
        tuple(header["domain"]["x_lo"]),
        tuple(header["steps"]["dx"]),
    )

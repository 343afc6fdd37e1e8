"""Dyadic filtrations on the weighted half space.

Space-time cubes live at level n with time side 4^-n and spatial side 2^-n;
the first spatial index stays >= 0 so cubes tile the closed half space.
Fields are piecewise constant on level-n_max cells, which makes every
conditional average, stopping time, maximal value and sharp value a finite
sum of closed-form cell masses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .measure import WeightParams, _interval_weight

__all__ = [
    "ParabolicCube",
    "SpatialCell",
    "CellField",
    "StoppingTimeMap",
    "locate_cube",
    "parent",
    "parent_cell",
    "cube_measure",
    "cell_measure",
    "parent_ratio",
    "parent_ratio_bound",
    "cell_masses",
    "integral",
    "lp_norm",
    "embed",
    "conditional_average",
    "build_stopping_time",
    "stopped_field",
    "cz_decompose",
    "dyadic_maximal",
    "dyadic_sharp",
    "save_cellfield",
    "load_cellfield",
]

TAU_INF = np.iinfo(np.int64).max


@dataclass(frozen=True)
class ParabolicCube:
    """Member of the level-n partition: time [i0/4^n,(i0+1)/4^n) and
    coordinate k in [i_k/2^n,(i_k+1)/2^n); i[0] is the half-space index."""

    n: int
    i0: int
    i: tuple

    def __post_init__(self):
        if self.i[0] < 0:
            raise ValueError("first spatial index must be >= 0")

    @property
    def d(self):
        return len(self.i)

    def extent(self):
        ts = 4.0 ** (-self.n)
        xs = 2.0 ** (-self.n)
        time = (self.i0 * ts, (self.i0 + 1) * ts)
        space = [(k * xs, (k + 1) * xs) for k in self.i]
        return time, space


@dataclass(frozen=True)
class SpatialCell:
    """Member of the purely spatial level-n partition."""

    n: int
    i: tuple

    def __post_init__(self):
        if self.i[0] < 0:
            raise ValueError("first spatial index must be >= 0")

    @property
    def d(self):
        return len(self.i)


def locate_cube(n: int, t: float, x) -> ParabolicCube:
    """The unique level-n cube containing (t, x); cubes are half-open so
    faces resolve by floor division."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x[0] < 0.0:
        raise ValueError("point lies outside the closed half space")
    i0 = math.floor(t * 4.0 ** n)
    i = tuple(int(math.floor(v * 2.0 ** n)) for v in x)
    return ParabolicCube(n=n, i0=i0, i=i)


def parent(c: ParabolicCube) -> ParabolicCube:
    return ParabolicCube(n=c.n - 1, i0=c.i0 // 4, i=tuple(k // 2 for k in c.i))


def parent_cell(c: SpatialCell) -> SpatialCell:
    return SpatialCell(n=c.n - 1, i=tuple(k // 2 for k in c.i))


def cube_measure(c: ParabolicCube, params: WeightParams) -> float:
    """Exact mu_alpha-mass of the cube."""
    s = 2.0 ** (-c.n)
    w1 = float(_interval_weight(c.i[0] * s, (c.i[0] + 1) * s, params.alpha))
    return 4.0 ** (-c.n) * w1 * s ** (c.d - 1)


def cell_measure(c: SpatialCell, params: WeightParams) -> float:
    """Exact nu_alpha-mass of the spatial cell."""
    s = 2.0 ** (-c.n)
    w1 = float(_interval_weight(c.i[0] * s, (c.i[0] + 1) * s, params.alpha))
    return w1 * s ** (c.d - 1)


def parent_ratio(c: ParabolicCube, params: WeightParams) -> float:
    return cube_measure(parent(c), params) / cube_measure(c, params)


def parent_ratio_array(i1, d: int, alpha: float):
    """parent_ratio over an array of first-coordinate indices.

    The ratio is scale invariant, so it depends only on i1 (and on d through
    the 4 * 2^(d-1) Lebesgue factor); suites sweep n and i0 through the
    scalar route to exercise the full code path.
    """
    i1 = np.asarray(i1, dtype=float)
    child = _interval_weight(i1, i1 + 1.0, alpha)
    par = _interval_weight(2.0 * (i1 // 2), 2.0 * (i1 // 2) + 2.0, alpha)
    return 4.0 * 2.0 ** (d - 1) * par / child


def parent_ratio_bound(alpha: float, d: int) -> float:
    """Certified ceiling for |parent|/|cube|: 2^(alpha+d+2) for alpha >= 0,
    and the concave-case split bound for alpha in (-1, 0)."""
    if alpha >= 0.0:
        return 2.0 ** (alpha + d + 2.0)
    a1 = 2.0 ** (alpha + 1.0)
    return 2.0 ** (d + 1) * max(3.0, 1.0 + a1 / (a1 - 1.0), 1.0 + 2.0 ** (1.0 - alpha))


# ---------------------------------------------------------------------------
# CellField: piecewise-constant fields on level-n_max cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellField:
    """R^{d1}-valued field, constant on each level-n_max cell of a bounded
    index window.  values has shape (m0, m1, ..., md, d1) and lo holds the
    (i0, i1, ..., id) index of values[0, ..., 0]; the field is zero outside
    the window."""

    values: np.ndarray
    n_max: int
    lo: tuple
    alpha: float

    def __post_init__(self):
        if self.lo[1] < 0:
            raise ValueError("window must lie in the half space (i1 >= 0)")
        if self.values.ndim != len(self.lo) + 1:
            raise ValueError("values must have one axis per index plus components")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def d(self):
        return len(self.lo) - 1

    @property
    def d1(self):
        return self.values.shape[-1]

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def hi(self):
        return tuple(l + s for l, s in zip(self.lo, self.shape))


def cell_masses(f: CellField) -> np.ndarray:
    """mu_alpha-mass of every window cell, shape f.shape."""
    n = f.n_max
    s = 2.0 ** (-n)
    i1 = np.arange(f.lo[1], f.hi[1], dtype=float)
    w1 = _interval_weight(i1 * s, (i1 + 1.0) * s, f.alpha)
    m = np.full(f.shape, 4.0 ** (-n) * s ** (f.d - 1))
    shape = [1] * f.d
    shape[0] = len(i1)
    return m * w1.reshape([1] + shape)


def integral(f: CellField) -> np.ndarray:
    """Componentwise integral of f over Omega (exact)."""
    w = cell_masses(f)
    return np.tensordot(w, f.values, axes=(tuple(range(w.ndim)), tuple(range(w.ndim))))


def lp_norm(f: CellField, p: float) -> float:
    """L_p(Omega, mu) norm with components summed inside, per the paper's
    vector-norm convention."""
    w = cell_masses(f)
    return float(np.sum(np.abs(f.values) ** p * w[..., None]) ** (1.0 / p))


def embed(f: CellField, lo, shape) -> CellField:
    """Zero-extend f onto a larger window."""
    lo = tuple(lo)
    shape = tuple(shape)
    sl = []
    for fl, fs, nl, ns in zip(f.lo, f.shape, lo, shape):
        if fl < nl or fl + fs > nl + ns:
            raise ValueError("target window does not contain the field window")
        sl.append(slice(fl - nl, fl - nl + fs))
    out = np.zeros(shape + (f.d1,))
    out[tuple(sl)] = f.values
    return CellField(out, f.n_max, lo, f.alpha)


def _blocks(n_max, n, d):
    bt = 4 ** (n_max - n)
    bs = 2 ** (n_max - n)
    return (bt,) + (bs,) * d


def _block_sum(arr, lo, n_max, n):
    """Sum arr over the level-n cube blocks covering its index window.

    Returns (sums, level_lo, pads) where sums has one entry per covering
    cube (trailing axes of arr beyond the window axes are preserved),
    level_lo indexes the first cube, and pads gives the offset of the
    window inside the padded aligned box.
    """
    d = len(lo) - 1
    blocks = _blocks(n_max, n, d)
    pads, reps = [], []
    for ax, b in enumerate(blocks):
        a = lo[ax] - (lo[ax] // b) * b
        hi = lo[ax] + arr.shape[ax]
        post = (-hi) % b
        pads.append((a, post))
        reps.append((lo[ax] + arr.shape[ax] + post - (lo[ax] - a)) // b)
    extra = arr.ndim - (d + 1)
    padded = np.pad(arr, pads + [(0, 0)] * extra)
    shape = []
    for q, b in zip(reps, blocks):
        shape.extend([q, b])
    shape.extend(padded.shape[d + 1:])
    sums = padded.reshape(shape).sum(axis=tuple(range(1, 2 * (d + 1), 2)))
    level_lo = tuple(lo[ax] // blocks[ax] for ax in range(d + 1))
    return sums, level_lo, [p[0] for p in pads]


def _expand(level_arr, pads, blocks, window_shape):
    """Replicate per-cube values back onto window cells."""
    out = level_arr
    for ax, b in enumerate(blocks):
        out = np.repeat(out, b, axis=ax)
    sl = tuple(slice(p, p + s) for p, s in zip(pads, window_shape))
    return out[sl]


def _full_cube_masses(level_lo, level_shape, n, alpha, d):
    """Closed-form mu-mass of each level-n cube in an index box."""
    s = 2.0 ** (-n)
    j1 = np.arange(level_lo[1], level_lo[1] + level_shape[1], dtype=float)
    w1 = _interval_weight(j1 * s, (j1 + 1.0) * s, alpha)
    m = np.full(level_shape, 4.0 ** (-n) * s ** (d - 1))
    shape = [1] * (d + 1)
    shape[1] = len(j1)
    return m * w1.reshape(shape)


def _level_average(weighted, f, n):
    """Per-cube averages of a mass-weighted value array (zero extension
    outside the window), plus the bookkeeping needed to expand back."""
    sums, level_lo, pads = _block_sum(weighted, f.lo, f.n_max, n)
    mu = _full_cube_masses(level_lo, sums.shape[:-1], n, f.alpha, f.d)
    return sums / mu[..., None], sums, mu, level_lo, pads


def conditional_average(f: CellField, n: int) -> CellField:
    """The level-n conditional average f_{|n}, replicated onto base cells.

    Exact for cell fields: each cube average is the mass-weighted cell sum
    divided by the full closed-form cube mass (the field vanishes outside
    its window).
    """
    if n > f.n_max:
        raise ValueError("cannot average below the base resolution")
    w = cell_masses(f)
    avg, _, _, _, pads = _level_average(f.values * w[..., None], f, n)
    out = _expand(avg, pads, _blocks(f.n_max, n, f.d), f.shape)
    return CellField(out, f.n_max, f.lo, f.alpha)


def _containment_level(f: CellField) -> int:
    """Coarsest level at which a single cube covers the window."""
    n = f.n_max
    while True:
        blocks = _blocks(f.n_max, n, f.d)
        ok = all(
            lo // b == (lo + s - 1) // b
            for lo, s, b in zip(f.lo, f.shape, blocks)
        )
        if ok:
            return n
        n -= 1
        if f.n_max - n > 62:
            raise RuntimeError("containment search ran away")


@dataclass(frozen=True)
class StoppingTimeMap:
    """Entry-time map tau on base cells of a window; level sets {tau = n}
    are unions of level-n cubes by construction.  TAU_INF encodes infinity
    and n_floor is the coarsest level the scan had to visit."""

    n_max: int
    lo: tuple
    tau: np.ndarray
    n_floor: int

    @property
    def shape(self):
        return self.tau.shape

    @property
    def hi(self):
        return tuple(l + s for l, s in zip(self.lo, self.shape))

    def levels(self):
        u = np.unique(self.tau)
        return [int(v) for v in u if v != TAU_INF]


def build_stopping_time(g: CellField, lam: float, max_extra_levels: int = 40) -> StoppingTimeMap:
    """tau(t,x) = inf{n : g_{|n}(t,x) > lam} for a nonnegative scalar field.

    The scan walks levels from a floor upward.  The floor starts at the
    level whose single cube covers the window and is pushed coarser while
    that covering chain still averages above lam, so the computed tau is
    the true entry time over all integer levels (the chain average decays
    monotonically once the support is contained).
    """
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    if g.d1 != 1:
        raise ValueError("stopping times act on scalar fields")
    if np.any(g.values < 0.0):
        raise ValueError("stopping times act on nonnegative fields")

    w = cell_masses(g)
    total = float(np.sum(g.values[..., 0] * w))
    n_cov = _containment_level(g)
    if total == 0.0:
        tau = np.full(g.shape, TAU_INF, dtype=np.int64)
        return StoppingTimeMap(g.n_max, g.lo, tau, n_cov)

    # push the floor coarser while the covering chain cube still fires
    n_floor = n_cov
    while True:
        blocks = _blocks(g.n_max, n_floor, g.d)
        idx = tuple(l // b for l, b in zip(g.lo, blocks))
        mu = float(
            _full_cube_masses(idx, (1,) * (g.d + 1), n_floor, g.alpha, g.d)[
                (0,) * (g.d + 1)
            ]
        )
        if total / mu <= lam:
            break
        n_floor -= 1
        if n_cov - n_floor > max_extra_levels:
            raise ValueError("lambda too small: stopping scan exceeded the level budget")

    weighted = g.values * w[..., None]

    # pass 1: find fired cubes and the bounding box their cells need
    bb_lo = list(g.lo)
    bb_hi = list(g.hi)
    for n in range(n_floor + 1, g.n_max + 1):
        avg, _, _, level_lo, _ = _level_average(weighted, g, n)
        fired = avg[..., 0] > lam
        if not np.any(fired):
            continue
        blocks = _blocks(g.n_max, n, g.d)
        idx = np.argwhere(fired)
        for ax in range(g.d + 1):
            j_lo = (level_lo[ax] + idx[:, ax].min()) * blocks[ax]
            j_hi = (level_lo[ax] + idx[:, ax].max() + 1) * blocks[ax]
            bb_lo[ax] = min(bb_lo[ax], int(j_lo))
            bb_hi[ax] = max(bb_hi[ax], int(j_hi))

    gg = embed(g, tuple(bb_lo), tuple(h - l for l, h in zip(bb_lo, bb_hi)))
    ww = cell_masses(gg)
    weighted = gg.values * ww[..., None]

    # pass 2: assign entry times coarse to fine, first assignment wins
    tau = np.full(gg.shape, TAU_INF, dtype=np.int64)
    for n in range(n_floor + 1, g.n_max + 1):
        avg, _, _, _, pads = _level_average(weighted, gg, n)
        fired = avg[..., 0] > lam
        if not np.any(fired):
            continue
        fired_cells = _expand(fired, pads, _blocks(g.n_max, n, g.d), gg.shape)
        tau = np.where((tau == TAU_INF) & fired_cells, np.int64(n), tau)

    return StoppingTimeMap(g.n_max, gg.lo, tau, n_floor)


def stopped_field(g: CellField, tau: StoppingTimeMap) -> CellField:
    """g_{|tau}: the level-tau conditional average where tau is finite and
    g itself where tau is infinite.  Defined on tau's window, which must
    contain g's window."""
    if g.n_max != tau.n_max:
        raise ValueError("field and stopping time use different base resolutions")
    gg = embed(g, tau.lo, tau.shape)
    w = cell_masses(gg)
    weighted = gg.values * w[..., None]
    out = gg.values.copy()
    for n in tau.levels():
        avg, _, _, _, pads = _level_average(weighted, gg, n)
        exp = _expand(avg, pads, _blocks(g.n_max, n, g.d), gg.shape)
        out = np.where((tau.tau == n)[..., None], exp, out)
    return CellField(out, g.n_max, tau.lo, g.alpha)


def cz_decompose(g: CellField, lam: float):
    """Calderon-Zygmund split g = xi + eta with eta = g_{|tau}.

    Postconditions (all cell-exact): xi + eta = g, eta <= N0 * lam with N0
    the certified parent-ratio bound, xi_{|tau} = 0, and the xi-support
    mass is at most integral(g)/lam.
    """
    tau = build_stopping_time(g, lam)
    eta = stopped_field(g, tau)
    gg = embed(g, tau.lo, tau.shape)
    xi = CellField(gg.values - eta.values, g.n_max, tau.lo, g.alpha)
    return xi, eta, tau


def _sup_scan(f: CellField, include_oscillation: bool):
    """Shared level scan for the dyadic maximal and sharp operators.

    Scans n = n_max down past the containment level, keeps extending while
    any coarser level still improves some cell, and insists the last three
    visited levels were non-improving before stopping.
    """
    w = cell_masses(f)
    absvals = np.abs(f.values)
    abs_weighted = absvals * w[..., None]
    weighted = f.values * w[..., None]

    if include_oscillation:
        running = np.zeros_like(f.values)
    else:
        running = absvals.copy()

    n_cont = _containment_level(f)
    n = f.n_max - 1
    quiet = 0
    while True:
        blocks = _blocks(f.n_max, n, f.d)
        if include_oscillation:
            avg, _, mu, _, pads = _level_average(weighted, f, n)
            exp_avg = _expand(avg, pads, blocks, f.shape)
            dev = np.abs(f.values - exp_avg) * w[..., None]
            osc_in, _, _ = _block_sum(dev, f.lo, f.n_max, n)
            m_in, _, _ = _block_sum(w, f.lo, f.n_max, n)
            term = (osc_in + (mu - m_in)[..., None] * np.abs(avg)) / mu[..., None]
        else:
            term, _, _, _, pads = _level_average(abs_weighted, f, n)
        exp = _expand(term, pads, blocks, f.shape)
        improved = bool(np.any(exp > running))
        running = np.maximum(running, exp)
        quiet = 0 if improved else quiet + 1
        if n <= n_cont - 3 and quiet >= 3:
            break
        if n_cont - n > n_cont - f.n_max + 80:
            raise RuntimeError("sup scan failed to stabilize")
        n -= 1
    return CellField(running, f.n_max, f.lo, f.alpha)


def dyadic_maximal(f: CellField) -> CellField:
    """Componentwise dyadic maximal field sup_n |f^i|_{|n}; exact because
    coarse averages of the zero-extended field decay once a single cube
    contains the support."""
    return _sup_scan(f, include_oscillation=False)


def dyadic_sharp(f: CellField) -> CellField:
    """Componentwise dyadic sharp field: sup_n of the level-n mean
    oscillation, with the out-of-window part of each cube contributing
    |0 - average| exactly."""
    return _sup_scan(f, include_oscillation=True)


# ---------------------------------------------------------------------------
# serialization: one JSON header line then CSV rows "i0,...,id,v1,...,vd1"
# ---------------------------------------------------------------------------


def save_cellfield(f: CellField, path) -> None:
    header = {
        "d": f.d,
        "d1": f.d1,
        "alpha": f.alpha,
        "n_max": f.n_max,
        "window": {"lo": list(f.lo), "hi": list(f.hi)},
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for idx in np.ndindex(f.shape):
            cell = [str(l + k) for l, k in zip(f.lo, idx)]
            vals = [repr(float(v)) for v in f.values[idx]]
            fh.write(",".join(cell + vals) + "\n")


def load_cellfield(path) -> CellField:
    with open(path) as fh:
        header = json.loads(fh.readline())
        lo = tuple(header["window"]["lo"])
        hi = tuple(header["window"]["hi"])
        shape = tuple(h - l for l, h in zip(lo, hi))
        values = np.zeros(shape + (header["d1"],))
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            idx = tuple(int(v) - l for v, l in zip(parts, lo))
            values[idx] = [float(v) for v in parts[header["d"] + 1:]]
    return CellField(values, header["n_max"], lo, header["alpha"])

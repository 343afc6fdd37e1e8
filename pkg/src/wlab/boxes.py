"""Parabolic boxes Q_r(t,x), the declared-family maximal and sharp
operators over them, the dyadic-to-box comparison construction, and the
clipped triple expansion used by the weighted covering argument.

The uncountable box family is replaced by a declared dyadic radius ladder
with grid-aligned anchors (time stride r^2/4, spatial stride r/2, floored
at the cell size).  That family under-approximates the true suprema, which
is the logically safe side for every inequality verified against it; it
does contain the comparison boxes of the pointwise sharp domination for
d in {1, 2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .dyadic import CellField, ParabolicCube, cell_masses, cube_measure
from .measure import WeightParams, _interval_weight

__all__ = [
    "ParabolicBox",
    "ClippedBox",
    "box_mass",
    "box_average",
    "box_oscillation_q",
    "maximal_family",
    "sharp_family",
    "comparison_box",
    "expand_clip",
    "dyadic_radii",
]


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2.0) / math.gamma(k / 2.0 + 1.0)


@dataclass(frozen=True)
class ParabolicBox:
    """Q_r(t, x) = (t, t+r^2) x (x1-r, x1+r) x B'_r(x'); the box is clipped
    to the half space only where explicitly stated."""

    t: float
    x1: float
    xprime: tuple
    r: float

    def __post_init__(self):
        if self.r <= 0.0:
            raise ValueError("radius must be positive")

    @property
    def d(self):
        return len(self.xprime) + 1

    def time_interval(self):
        return self.t, self.t + self.r * self.r

    def x1_interval(self):
        return self.x1 - self.r, self.x1 + self.r


def box_mass(Q: ParabolicBox, params: WeightParams) -> float:
    """Closed-form mu-mass of Q intersected with the half space."""
    lo = max(0.0, Q.x1 - Q.r)
    hi = Q.x1 + Q.r
    if hi <= 0.0:
        return 0.0
    w1 = float(_interval_weight(lo, hi, params.alpha))
    dm1 = len(Q.xprime)
    return Q.r * Q.r * w1 * unit_ball_volume(dm1) * Q.r ** dm1


def _overlap_weights(f: CellField, t_iv, x1_iv, xp_ivs):
    """Per-cell mu-mass of the cell intersected with a product box.
    Transverse factors must be intervals, so d <= 2."""
    if f.d > 2:
        raise NotImplementedError("cell overlaps with ball cross-sections (d >= 3)")
    n = f.n_max
    ts, xs = 4.0 ** (-n), 2.0 ** (-n)
    t_edges = (np.arange(f.lo[0], f.hi[0] + 1)) * ts
    t_ov = np.clip(np.minimum(t_edges[1:], t_iv[1]) - np.maximum(t_edges[:-1], t_iv[0]), 0.0, None)
    x_edges = (np.arange(f.lo[1], f.hi[1] + 1)) * xs
    lo1 = np.maximum(x_edges[:-1], max(x1_iv[0], 0.0))
    hi1 = np.minimum(x_edges[1:], x1_iv[1])
    x_ov = np.where(hi1 > lo1, _interval_weight(lo1, np.maximum(hi1, lo1 + 1e-300), f.alpha), 0.0)
    parts = [t_ov, x_ov]
    for ax, iv in enumerate(xp_ivs):
        e = (np.arange(f.lo[2 + ax], f.hi[2 + ax] + 1)) * xs
        parts.append(np.clip(np.minimum(e[1:], iv[1]) - np.maximum(e[:-1], iv[0]), 0.0, None))
    w = parts[0]
    for p in parts[1:]:
        w = w[..., None] * p
    return w


def box_average(f: CellField, Q: ParabolicBox) -> np.ndarray:
    """Componentwise mu-average of the zero-extended field over Q cap Omega.

    Exact for grid-aligned boxes; boundary cells are split by closed-form
    sub-box masses otherwise.
    """
    mu = box_mass(Q, WeightParams(f.alpha))
    if mu <= 0.0:
        raise ValueError("box has zero mass in the half space")
    xp = [(c - Q.r, c + Q.r) for c in Q.xprime]
    w = _overlap_weights(f, Q.time_interval(), Q.x1_interval(), xp)
    sums = np.tensordot(w, f.values, axes=(tuple(range(w.ndim)), tuple(range(w.ndim))))
    return sums / mu


def box_oscillation_q(f: CellField, Q: ParabolicBox, q: float, euclidean: bool = True):
    """Mean q-oscillation of f over Q cap Omega, with the part of the box
    outside the window contributing |0 - average| exactly."""
    mu = box_mass(Q, WeightParams(f.alpha))
    if mu <= 0.0:
        raise ValueError("box has zero mass in the half space")
    xp = [(c - Q.r, c + Q.r) for c in Q.xprime]
    w = _overlap_weights(f, Q.time_interval(), Q.x1_interval(), xp)
    avg = np.tensordot(w, f.values, axes=(tuple(range(w.ndim)), tuple(range(w.ndim)))) / mu
    dev = f.values - avg
    if euclidean:
        inside = np.sum(np.sqrt(np.sum(dev * dev, axis=-1)) ** q * w)
        out = np.linalg.norm(avg) ** q * (mu - float(np.sum(w)))
        return (inside + out) / mu
    inside = np.tensordot(w, np.abs(dev) ** q, axes=(tuple(range(w.ndim)), tuple(range(w.ndim))))
    out = np.abs(avg) ** q * (mu - float(np.sum(w)))
    return (inside + out) / mu


# ---------------------------------------------------------------------------
# declared-family maximal and sharp operators
# ---------------------------------------------------------------------------


def dyadic_radii(f: CellField, n_top: int = 0):
    """The radius ladder {2^-(n_max+1), ..., 2^-n_top}.

    The sub-cell radius is included so the family sup dominates the cell
    value itself: boxes inside one cell of a piecewise-constant field
    average to that cell's value and oscillate by zero.
    """
    return [2.0 ** (-m) for m in range(f.n_max + 1, n_top - 1, -1)]


def _level_exponent(r: float) -> int:
    m = round(-math.log2(r))
    if abs(2.0 ** (-m) - r) > 1e-12 * r:
        raise ValueError(f"radius {r} is not on the dyadic ladder")
    return m


def _axis_blocksum(arr, axis, block):
    sh = list(arr.shape)
    q = sh[axis] // block
    sh[axis : axis + 1] = [q, block]
    return arr.reshape(sh).sum(axis=axis + 1)


def _family_level(f, m, w, absw, fw):
    """Box sums, averages and per-cell gather data for radius 2^-m.

    Returns None when no admissible box of this radius meets the window.
    """
    d = f.d
    n_max = f.n_max
    r = 2.0 ** (-m)
    mt = min(m + 1, n_max)
    ms = min(m + 1, n_max)
    Bt, Bs = 4 ** (n_max - mt), 2 ** (n_max - ms)
    kt, ks = 4 ** (mt - m), 2 ** (ms - m) * 2
    blocks = (Bt,) + (Bs,) * d
    ks_all = (kt,) + (ks,) * d

    # pad the window to block alignment and form per-block sums
    pads, lo_blk, nb = [], [], []
    for ax, b in enumerate(blocks):
        a = f.lo[ax] - (f.lo[ax] // b) * b
        post = (-(f.lo[ax] + f.shape[ax])) % b
        pads.append((a, post))
        lo_blk.append(f.lo[ax] // b)
        nb.append((a + f.shape[ax] + post) // b)

    def blocksum(arr):
        extra = arr.ndim - (d + 1)
        p = np.pad(arr, pads + [(0, 0)] * extra)
        for ax, b in enumerate(blocks):
            p = _axis_blocksum(p, ax, b)
        return p

    Sw = blocksum(w)
    Sabs = blocksum(absw)
    Sf = blocksum(fw)

    # sliding-window box sums over k consecutive blocks per axis; start
    # index s runs over [-(k-1), nb-1] relative to the block grid
    def boxsum(S):
        out = S
        for ax, k in enumerate(ks_all):
            pad = [(0, 0)] * out.ndim
            pad[ax] = (k - 1, k - 1)
            p = np.pad(out, pad)
            c = np.cumsum(p, axis=ax)
            lead = [slice(None)] * out.ndim
            lead[ax] = slice(0, 1)
            c = np.concatenate([np.zeros_like(c[tuple(lead)]), c], axis=ax)
            hi = [slice(None)] * out.ndim
            lo_ = [slice(None)] * out.ndim
            hi[ax] = slice(k, c.shape[ax])
            lo_[ax] = slice(0, c.shape[ax] - k)
            out = c[tuple(hi)] - c[tuple(lo_)]
        return out

    m_in = boxsum(Sw)
    absf_in = boxsum(Sabs)
    f_in = boxsum(Sf)

    # closed-form full masses per start; starts with a negative x1 face are
    # outside the half space and masked out of the family
    s1 = np.arange(lo_blk[1] - (ks - 1), lo_blk[1] + nb[1]) * (Bs * 2.0 ** (-n_max))
    valid1 = s1 >= -1e-12
    w1 = np.where(valid1, _interval_weight(np.maximum(s1, 0.0), np.maximum(s1, 0.0) + 2.0 * r, f.alpha), np.nan)
    mu_full = r * r * (2.0 * r) ** (d - 1) * w1
    shape = [1] * (d + 1)
    shape[1] = len(s1)
    mu_full = np.broadcast_to(mu_full.reshape(shape), m_in.shape).copy()
    valid = np.broadcast_to(valid1.reshape(shape), m_in.shape)

    return {
        "r": r,
        "blocks": blocks,
        "ks": ks_all,
        "pads": [p[0] for p in pads],
        "nb": nb,
        "valid": valid,
        "mu": mu_full,
        "m_in": m_in,
        "absf_in": absf_in,
        "f_in": f_in,
        "blocksum": blocksum,
    }


def _gather_max(level, per_box, window_shape):
    """Per-cell max of a per-box-start quantity over the boxes containing
    the cell; per_box has the start-grid shape plus component axes."""
    ks = level["ks"]
    pads = level["pads"]
    blocks = level["blocks"]
    d1 = per_box.shape[len(ks):]
    out = np.full(tuple(window_shape) + d1, -np.inf)
    masked = np.where(level["valid"][(...,) + (None,) * len(d1)], per_box, -np.inf)
    for sigma in product(*[range(k) for k in ks]):
        view = masked
        for ax, (k, s) in enumerate(zip(ks, sigma)):
            # start = block - sigma; start-array index = block + (k-1) - sigma
            idx = slice(k - 1 - s, k - 1 - s + level["nb"][ax])
            view = view[(slice(None),) * ax + (idx,)]
        cells = view
        for ax, b in enumerate(blocks):
            cells = np.repeat(cells, b, axis=ax)
        sl = tuple(slice(p, p + s) for p, s in zip(pads, window_shape))
        out = np.maximum(out, cells[sl])
    return out


def _expand_to_cells(level, per_box, sigma, window_shape):
    ks, pads, blocks = level["ks"], level["pads"], level["blocks"]
    trail = per_box.shape[len(ks):]
    view = per_box
    for ax, (k, s) in enumerate(zip(ks, sigma)):
        idx = slice(k - 1 - s, k - 1 - s + level["nb"][ax])
        view = view[(slice(None),) * ax + (idx,)]
    cells = view
    for ax, b in enumerate(blocks):
        cells = np.repeat(cells, b, axis=ax)
    sl = tuple(slice(p, p + s) for p, s in zip(pads, window_shape))
    return cells[sl]


def maximal_family(f: CellField, radii) -> CellField:
    """Componentwise sup of box averages of |f| over the declared family;
    a lower bound for the full maximal operator, exact on the family."""
    if not radii:
        raise ValueError("empty radius family")
    w = cell_masses(f)
    absw = np.abs(f.values) * w[..., None]
    fw = f.values * w[..., None]
    out = np.full(f.values.shape, -np.inf)
    for r in radii:
        m = _level_exponent(r)
        if m > f.n_max:
            # cell-interior boxes of a piecewise-constant field average to
            # the cell value; straddling anchors are omitted (safe side)
            out = np.maximum(out, np.abs(f.values))
            continue
        lv = _family_level(f, m, w, absw, fw)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = lv["absf_in"] / lv["mu"][..., None]
        out = np.maximum(out, _gather_max(lv, avg, f.shape))
    return CellField(out, f.n_max, f.lo, f.alpha)


def sharp_family(f: CellField, radii) -> CellField:
    """Componentwise sup of box mean oscillations over the declared family."""
    if not radii:
        raise ValueError("empty radius family")
    w = cell_masses(f)
    absw = np.abs(f.values) * w[..., None]
    fw = f.values * w[..., None]
    out = np.full(f.values.shape, -np.inf)
    for r in radii:
        m = _level_exponent(r)
        if m > f.n_max:
            out = np.maximum(out, 0.0)
            continue
        lv = _family_level(f, m, w, absw, fw)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = lv["f_in"] / lv["mu"][..., None]
        osc_in = np.zeros_like(lv["f_in"])
        for sigma in product(*[range(k) for k in lv["ks"]]):
            acell = _expand_to_cells(lv, np.nan_to_num(avg), sigma, f.shape)
            dev = np.abs(f.values - acell) * w[..., None]
            T = lv["blocksum"](dev)
            # T[b] belongs to the box starting at s = b - sigma
            sl_t = []
            sl_s = []
            for ax, (k, s, n) in enumerate(zip(lv["ks"], sigma, lv["nb"])):
                lo = k - 1 - s
                sl_s.append(slice(lo, lo + n))
                sl_t.append(slice(0, n))
            osc_in[tuple(sl_s)] += T[tuple(sl_t)]
        with np.errstate(invalid="ignore"):
            term = (osc_in + (lv["mu"] - lv["m_in"])[..., None] * np.abs(avg)) / lv["mu"][..., None]
        out = np.maximum(out, _gather_max(lv, term, f.shape))
    return CellField(out, f.n_max, f.lo, f.alpha)


# ---------------------------------------------------------------------------
# comparison box of the dyadic-to-family domination and the clipped triple
# ---------------------------------------------------------------------------


def comparison_box(c: ParabolicCube) -> ParabolicBox:
    """The box Q_{d/2^n}(t*, x*) built over a dyadic cube; containment of
    the cube in the box closure is asserted numerically at construction."""
    d = c.d
    scale = 2.0 ** (-c.n)
    box = ParabolicBox(
        t=c.i0 * 4.0 ** (-c.n),
        x1=(c.i[0] + d) * scale,
        xprime=tuple(k * scale for k in c.i[1:]),
        r=d * scale,
    )
    (t0, t1), space = c.extent()
    bt = box.time_interval()
    eps = 1e-12 * max(1.0, scale)
    if not (bt[0] <= t0 + eps and t1 <= bt[1] + eps):
        raise AssertionError("comparison box fails time containment")
    b1 = box.x1_interval()
    if not (b1[0] <= space[0][0] + eps and space[0][1] <= b1[1] + eps):
        raise AssertionError("comparison box fails x1 containment")
    if d > 1:
        corners = np.array(list(product(*[(lo, hi) for lo, hi in space[1:]])))
        dist = np.linalg.norm(corners - np.asarray(box.xprime), axis=1)
        if not np.all(dist <= box.r + eps):
            raise AssertionError("comparison box fails transverse containment")
    return box


def comparison_ratio(c: ParabolicCube, params: WeightParams) -> float:
    """mass(Q_(n)) / mass(C_n), both in closed form."""
    return box_mass(comparison_box(c), params) / cube_measure(c, params)


@dataclass(frozen=True)
class ClippedBox:
    """3Q cap Omega: the triple of Q about its center, clipped to x1 > 0."""

    original: ParabolicBox
    t_lo: float
    t_hi: float
    x1_lo: float
    x1_hi: float
    xprime: tuple
    rprime: float
    was_clipped: bool

    def mass(self, params: WeightParams) -> float:
        w1 = float(_interval_weight(self.x1_lo, self.x1_hi, params.alpha))
        dm1 = len(self.xprime)
        return (self.t_hi - self.t_lo) * w1 * unit_ball_volume(dm1) * self.rprime ** dm1


def expand_clip(Q: ParabolicBox) -> ClippedBox:
    """Triple Q about its center (time interval tripled in length, radii
    tripled) and clip the first coordinate at the boundary."""
    r2 = Q.r * Q.r
    raw_lo = Q.x1 - 3.0 * Q.r
    return ClippedBox(
        original=Q,
        t_lo=Q.t - r2,
        t_hi=Q.t + 2.0 * r2,
        x1_lo=max(0.0, raw_lo),
        x1_hi=Q.x1 + 3.0 * Q.r,
        xprime=Q.xprime,
        rprime=3.0 * Q.r,
        was_clipped=raw_lo < 0.0,
    )


def expansion_ratio(Q: ParabolicBox, params: WeightParams) -> float:
    """mass(3Q cap Omega) / mass(Q); bounded by 3^d (2 + 2^(alpha+1)) for
    alpha >= 0 and Q inside the half space."""
    return expand_clip(Q).mass(params) / box_mass(Q, params)

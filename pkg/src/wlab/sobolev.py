"""Weighted norms at integer smoothness, the weighted Poincare inequality,
the boundary bump function, and Holder-quotient estimators.

All spatial integrals use the same quadrature: the pure power of x1 is
integrated in closed form over each grid cell while the remaining
integrand enters through its corner-node mean.  The quadrature error is
measured by resolution doubling wherever a tolerance depends on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .fields import NodeField, derivative, m_multiply

__all__ = [
    "NormSpec",
    "weighted_lp_norm",
    "sobolev_norm_integer",
    "equiv_triple",
    "time_lp_aggregate",
    "poincare_check",
    "bump_zeta",
    "holder_quotients",
    "mollifier",
]


@dataclass(frozen=True)
class NormSpec:
    """Parameters of the weighted norm: exponent p, weight parameter theta,
    integer smoothness gamma, and the power of the boundary multiplier
    applied before the norm."""

    p: float
    theta: float
    gamma: int = 0
    m_power: int = 0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("p must exceed 1")
        if self.gamma not in (0, 1, 2):
            raise ValueError("integer smoothness limited to {0, 1, 2}")

    def admissible(self, d: int) -> bool:
        """Whether theta sits in the solvability window for dimension d."""
        if self.p <= 2.0:
            return d + 1.0 - self.p < self.theta < d + self.p - 1.0
        return d - 1.0 < self.theta < d + 1.0


def _power_cell_weights(x1_nodes, e):
    """Exact integral of x^e over each x1 grid cell; +inf when the first
    cell touches 0 and the exponent is not integrable."""
    lo = np.asarray(x1_nodes[:-1], dtype=float)
    hi = np.asarray(x1_nodes[1:], dtype=float)
    a1 = e + 1.0
    out = np.empty_like(lo)
    pos = lo > 0.0
    if abs(a1) < 1e-14:
        out[pos] = np.log(hi[pos] / lo[pos])
        out[~pos] = np.inf
        return out
    out[pos] = lo[pos] ** a1 * np.expm1(a1 * np.log1p((hi[pos] - lo[pos]) / lo[pos])) / a1
    if a1 > 0:
        out[~pos] = hi[~pos] ** a1 / a1
    else:
        out[~pos] = np.inf
    return out


def _cell_corner_mean(arr):
    for ax in range(arr.ndim):
        sl_lo = [slice(None)] * arr.ndim
        sl_hi = [slice(None)] * arr.ndim
        sl_lo[ax] = slice(0, -1)
        sl_hi[ax] = slice(1, None)
        arr = 0.5 * (arr[tuple(sl_lo)] + arr[tuple(sl_hi)])
    return arr


def _space_integral(g, x1_nodes, dx, e):
    """Integral of g(x) x1^e dx with g >= 0 node sampled: exact power weight
    per cell, corner mean for g.  Cells where g vanishes identically
    contribute zero even if the weight diverges."""
    m = _cell_corner_mean(g)
    w1 = _power_cell_weights(x1_nodes, e)
    shape = [1] * m.ndim
    shape[0] = len(w1)
    w = w1.reshape(shape) * float(np.prod(dx[1:]))
    with np.errstate(invalid="ignore"):
        contrib = np.where(m > 0.0, w * m, 0.0)
    return float(np.sum(contrib))


def _require_spatial(u: NodeField):
    if u.nt != 1:
        raise ValueError("spatial norm needs a single-time field; use at_time()")


def weighted_lp_norm(u: NodeField, spec: NormSpec) -> float:
    """(sum_k int |x1^m u^k|^p x1^(theta-d) dx)^(1/p) on a spatial slice."""
    _require_spatial(u)
    # the x1^m factor is applied nodewise; only theta-d remains as weight
    v = m_multiply(u, float(spec.m_power)).values[0]
    g = np.sum(np.abs(v) ** spec.p, axis=-1)
    total = _space_integral(g, u.axis(0), u.dx, spec.theta - u.d)
    return total ** (1.0 / spec.p)


def _multi_indices(d, order):
    if order == 0:
        return [tuple([0] * d)]
    out = set()
    for combo in product(range(d), repeat=order):
        beta = [0] * d
        for ax in combo:
            beta[ax] += 1
        out.add(tuple(beta))
    return sorted(out)


def sobolev_norm_integer(u: NodeField, spec: NormSpec) -> float:
    """Integer-smoothness weighted norm of x1^m u:
    (sum_{|beta| <= gamma} int |x1^{|beta|} D^beta v|^p x1^(theta-d) dx)^(1/p)
    with v = x1^m u applied nodewise and finite-difference derivatives."""
    _require_spatial(u)
    v = m_multiply(u, float(spec.m_power))
    total = 0.0
    for order in range(spec.gamma + 1):
        for beta in _multi_indices(u.d, order):
            dv = derivative(v, beta)
            g = np.sum(np.abs(m_multiply(dv, float(order)).values[0]) ** spec.p, axis=-1)
            total += _space_integral(g, u.axis(0), u.dx, spec.theta - u.d)
    return total ** (1.0 / spec.p)


def equiv_triple(w: NodeField, spec: NormSpec):
    """The three norms equivalent to the second-order weighted norm of
    M^{-1} w: (|M^{-1} w|_{L_p,theta}, |w_x|_{L_p,theta}, |M w_xx|_{L_p,theta})."""
    _require_spatial(w)
    a = weighted_lp_norm(w, NormSpec(spec.p, spec.theta, 0, m_power=-1))
    b_total = 0.0
    c_total = 0.0
    for beta in _multi_indices(w.d, 1):
        dv = derivative(w, beta)
        g = np.sum(np.abs(dv.values[0]) ** spec.p, axis=-1)
        b_total += _space_integral(g, w.axis(0), w.dx, spec.theta - w.d)
    for beta in _multi_indices(w.d, 2):
        dv = derivative(w, beta)
        g = np.sum(np.abs(m_multiply(dv, 1.0).values[0]) ** spec.p, axis=-1)
        c_total += _space_integral(g, w.axis(0), w.dx, spec.theta - w.d)
    return a, b_total ** (1.0 / spec.p), c_total ** (1.0 / spec.p)


def time_lp_aggregate(values, times, p) -> float:
    """(int f(t)^p dt)^(1/p) by the trapezoid rule on slice norms."""
    values = np.asarray(values, dtype=float)
    return float(np.trapezoid(values ** p, times) ** (1.0 / p))


# ---------------------------------------------------------------------------
# weighted Poincare inequality
# ---------------------------------------------------------------------------


def _node_weights(u: NodeField, alpha: float):
    """nu_alpha-share of each spatial node (half of each adjacent cell)."""
    x1 = u.axis(0)
    w1c = _power_cell_weights(x1, alpha)
    w1 = np.zeros(len(x1))
    w1[:-1] += 0.5 * w1c
    w1[1:] += 0.5 * w1c
    parts = [w1]
    for ax in range(1, u.d):
        n = u.nx[ax]
        wt = np.full(n, u.dx[ax])
        wt[0] = wt[-1] = 0.5 * u.dx[ax]
        parts.append(wt)
    w = parts[0]
    for p_ in parts[1:]:
        w = w[..., None] * p_
    return w


def poincare_check(u: NodeField, r: float, a: float, p: float, alpha: float):
    """Both sides of the weighted Poincare inequality on D_r(a).

    u must be a spatial field whose domain is exactly
    (a-r, a+r) x B'_r(0); gradient size is taken as the sum of absolute
    partials, which is the convention under which the stated constant
    2^(alpha+2) (2r)^p holds.  Returns (lhs, bound).
    """
    if alpha < 0.0:
        raise ValueError("the weighted Poincare constant needs alpha >= 0")
    if a - r < -1e-12:
        raise ValueError("D_r(a) must sit inside the half space")
    _require_spatial(u)
    lo = u.x_lo[0]
    hi = u.axis(0)[-1]
    if abs(lo - (a - r)) > 1e-9 or abs(hi - (a + r)) > 1e-9:
        raise ValueError("field domain does not match D_r(a)")

    w = _node_weights(u, alpha).reshape(-1)
    flat = u.values[0].reshape(-1, u.d1)
    diff = flat[:, None, :] - flat[None, :, :]
    lhs = float(np.einsum("i,j,ij->", w, w, np.sum(np.abs(diff) ** p, axis=-1)))

    # per-component l1 gradient, then p-th power summed over components
    g = np.zeros(u.nx)
    for k in range(u.d1):
        comp = np.zeros(u.nx)
        for beta in _multi_indices(u.d, 1):
            comp += np.abs(derivative(u, beta).values[0][..., k])
        g += comp ** p
    rhs_int = float(np.sum(_node_weights(u, alpha) * g))

    x1_edges = np.array([a - r, a + r])
    d_mass = float(_power_cell_weights(x1_edges, alpha)[0]) * (2.0 * r) ** (u.d - 1)
    bound = 2.0 ** (alpha + 2.0) * (2.0 * r) ** p * d_mass * rhs_int
    return lhs, bound


# ---------------------------------------------------------------------------
# boundary bump function
# ---------------------------------------------------------------------------

# normalization of exp(-1/(1-4 s^2)) on (-1/2, 1/2), frozen from a high
# resolution quadrature (tests re-derive it independently)
_MOLLIFIER_NORM = 4.504567242087163


def mollifier(s):
    """Smooth unit-mass bump supported on (-1/2, 1/2)."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 0.5
    z = np.where(inside, 1.0 - 4.0 * s * s, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(inside, np.exp(-1.0 / z), 0.0)
    return _MOLLIFIER_NORM * vals


def _mollifier_deriv(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 0.5
    z = np.where(inside, 1.0 - 4.0 * s * s, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(inside, np.exp(-1.0 / z) * (-8.0 * s) / (z * z), 0.0)
    return _MOLLIFIER_NORM * vals


_PSI_SUP = float(mollifier(0.0))
_PSI_DERIV_SUP = 7.193161010430025  # max |psi'|, frozen from a dense scan


def _bump_envelope(alpha: float):
    """Frozen ceilings for the two certified bump products, from the
    calibration sweep over (r <= a, alpha); generous by construction."""
    if alpha >= 0.0:
        n_sup = 2.0 * _PSI_SUP * 4.0 ** alpha * 1.1
        n_der = (4.0 * alpha * _PSI_SUP + 2.0 * _PSI_DERIV_SUP) * 4.0 ** alpha * 1.6
    else:
        n_sup = 6.0 * _PSI_SUP / (alpha + 1.0) * 1.1
        n_der = 6.0 * (_PSI_SUP + 2.0 * _PSI_DERIV_SUP) / (alpha + 1.0) * 1.6
    return n_sup, n_der


@dataclass(frozen=True)
class BumpCertificate:
    sup_product: float
    deriv_product: float
    sup_bound: float
    deriv_bound: float


def bump_zeta(a: float, r: float, alpha: float):
    """The weighted bump zeta(x) = x^(-alpha)/r psi((x-a)/r) with unit
    nu_alpha-integral by construction; returns the function and the two
    certified products sup(zeta) |B_r(a)| and sup|zeta'| |B_r(a)| r,
    asserted against frozen envelopes."""
    if not 0.0 < r <= a:
        raise ValueError("bump needs 0 < r <= a")

    def zeta(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0.0, x ** (-alpha), 0.0) / r * mollifier((x - a) / r)

    def zeta_prime(x):
        x = np.asarray(x, dtype=float)
        xm = np.where(x > 0.0, x, 1.0)
        term1 = -alpha * xm ** (-alpha - 1.0) / r * mollifier((x - a) / r)
        term2 = xm ** (-alpha) / (r * r) * _mollifier_deriv((x - a) / r)
        return np.where(x > 0.0, term1 + term2, 0.0)

    xs = np.linspace(a - 0.5 * r, a + 0.5 * r, 20001)
    sup_z = float(np.max(zeta(xs)))
    sup_dz = float(np.max(np.abs(zeta_prime(xs))))
    ball = float(_power_cell_weights(np.array([max(a - r, 0.0), a + r]), alpha)[0])
    s1 = sup_z * ball
    s2 = sup_dz * ball * r
    n1, n2 = _bump_envelope(alpha)
    if s1 > n1 or s2 > n2:
        raise AssertionError(
            f"bump products ({s1:.3g}, {s2:.3g}) exceed frozen envelopes ({n1:.3g}, {n2:.3g})"
        )
    return zeta, BumpCertificate(s1, s2, n1, n2)


# ---------------------------------------------------------------------------
# Holder quotients of trajectories
# ---------------------------------------------------------------------------


def holder_quotients(u: NodeField, kappa: float, p: float):
    """Discrete sup quotients sup |u(t,x)-u(t,y)| / |x-y|^kappa and
    sup |u(t,x)-u(s,x)| / |t-s|^(kappa/2) over grid nodes."""
    kappa0 = 1.0 - 2.0 / p - u.d / p
    if kappa0 <= 0.0:
        raise ValueError("p too small: the Holder window is empty")
    if not 0.0 < kappa < kappa0:
        raise ValueError(f"kappa must lie in (0, {kappa0})")

    coords = np.meshgrid(*[u.axis(k) for k in range(u.d)], indexing="ij")
    pts = np.stack([c.reshape(-1) for c in coords], axis=-1)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    flat = u.values.reshape(u.nt, -1, u.d1)

    space_q = 0.0
    for it in range(u.nt):
        diff = np.linalg.norm(flat[it][:, None, :] - flat[it][None, :, :], axis=-1)
        space_q = max(space_q, float(np.max(diff / dist ** kappa)))

    times = u.times()
    tdist = np.abs(times[:, None] - times[None, :])
    np.fill_diagonal(tdist, np.inf)
    tdiff = np.linalg.norm(flat[:, None, :, :] - flat[None, :, :, :], axis=-1)
    time_q = float(np.max(np.max(tdiff, axis=-1) / tdist ** (kappa / 2.0)))
    return space_q, time_q

"""Finite-difference solvers for the constant-in-x parabolic system
u_t = A^{ij}(t) u_{x^i x^j} + f and its elliptic companion on a truncated
half space, plus the a priori estimate ratios they are tested against.

Implicit one-step schemes with one sparse factorization per coefficient
slab; homogeneous Dirichlet values on every face unless boundary data is
supplied explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import GridSpec, NodeField, derivative, m_multiply
from .sobolev import NormSpec, equiv_triple, time_lp_aggregate, weighted_lp_norm

__all__ = [
    "SystemCoefficients",
    "SolverConfig",
    "validate_ellipticity",
    "solve_parabolic",
    "solve_elliptic",
    "homogeneous_local_solve",
    "parabolic_residual",
    "apriori_ratio_parabolic",
    "apriori_ratio_elliptic",
]


@dataclass(frozen=True)
class SystemCoefficients:
    """The d x d array of d1 x d1 matrices A^{ij}, piecewise constant in
    time: mats[s] applies on [breaks[s-1], breaks[s]).  K is the largest
    Frobenius norm and delta the certified ellipticity constant."""

    mats: np.ndarray          # (n_slabs, d, d, d1, d1)
    breaks: tuple = ()        # increasing interior breakpoints, len n_slabs-1

    def __post_init__(self):
        m = np.asarray(self.mats, dtype=float)
        if m.ndim == 4:
            m = m[None]
        if m.ndim != 5 or m.shape[1] != m.shape[2] or m.shape[3] != m.shape[4]:
            raise ValueError("coefficients must be (slabs, d, d, d1, d1)")
        if len(self.breaks) != m.shape[0] - 1:
            raise ValueError("need one breakpoint fewer than slabs")
        object.__setattr__(self, "mats", m)

    @property
    def d(self):
        return self.mats.shape[1]

    @property
    def d1(self):
        return self.mats.shape[3]

    @property
    def K(self):
        return float(np.max(np.sqrt(np.sum(self.mats ** 2, axis=(-2, -1)))))

    def slab_index(self, t: float) -> int:
        return int(np.searchsorted(np.asarray(self.breaks), t, side="right"))

    def at_time(self, t: float) -> np.ndarray:
        return self.mats[self.slab_index(t)]

    @staticmethod
    def constant(A) -> "SystemCoefficients":
        return SystemCoefficients(np.asarray(A, dtype=float)[None])

    @staticmethod
    def laplacian(d: int, d1: int = 1) -> "SystemCoefficients":
        A = np.zeros((d, d, d1, d1))
        for i in range(d):
            A[i, i] = np.eye(d1)
        return SystemCoefficients.constant(A)


def validate_ellipticity(coeffs: SystemCoefficients) -> float:
    """Certified ellipticity constant: the exact minimum over unit d1 x d
    matrices xi of sum (xi^i)^T A^{ij} xi^j, which is the smallest
    eigenvalue of the symmetrized block form; minimized over time slabs.
    Raises on non-elliptic input."""
    delta = math.inf
    for A in coeffs.mats:
        B = A.transpose(0, 2, 1, 3).reshape(coeffs.d * coeffs.d1, coeffs.d * coeffs.d1)
        sym = 0.5 * (B + B.T)
        delta = min(delta, float(np.linalg.eigvalsh(sym)[0]))
    if delta <= 0.0:
        raise ValueError(f"coefficients are not elliptic: form minimum {delta}")
    return delta


@dataclass(frozen=True)
class SolverConfig:
    """Grid, scheme and the norm parameters used by estimate ratios."""

    grid: GridSpec
    scheme: str = "crank-nicolson"
    p: float = 2.0
    theta: float = 1.0

    def __post_init__(self):
        if self.scheme not in ("implicit-euler", "crank-nicolson"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def norm_spec(self, gamma: int = 0, m_power: int = 0) -> NormSpec:
        return NormSpec(self.p, self.theta, gamma, m_power)


def _axis_ops(n, h):
    """Interior-row difference operators returning (rows x full-columns)
    matrices: selection E, first derivative D1, second derivative D2."""
    rows = n - 2
    idx = np.arange(rows)
    E = sp.csr_matrix((np.ones(rows), (idx, idx + 1)), shape=(rows, n))
    D1 = sp.csr_matrix(
        (
            np.concatenate([np.full(rows, -0.5 / h), np.full(rows, 0.5 / h)]),
            (np.concatenate([idx, idx]), np.concatenate([idx, idx + 2])),
        ),
        shape=(rows, n),
    )
    D2 = sp.csr_matrix(
        (
            np.concatenate(
                [np.full(rows, 1.0 / h ** 2), np.full(rows, -2.0 / h ** 2), np.full(rows, 1.0 / h ** 2)]
            ),
            (np.concatenate([idx, idx, idx]), np.concatenate([idx, idx + 1, idx + 2])),
        ),
        shape=(rows, n),
    )
    return E, D1, D2


def _assemble(grid: GridSpec, A: np.ndarray):
    """Sparse operator mapping full node vectors (node-major, d1 trailing)
    to interior rows of sum_ij A^{ij} D_i D_j."""
    d = grid.d
    d1 = A.shape[-1]
    ops = [_axis_ops(n, h) for n, h in zip(grid.nx, grid.dx)]
    total = None
    for i in range(d):
        for j in range(d):
            if np.all(A[i, j] == 0.0):
                continue
            factors = []
            for k in range(d):
                E, D1, D2 = ops[k]
                if k == i and k == j:
                    factors.append(D2)
                elif k == i or k == j:
                    factors.append(D1)
                else:
                    factors.append(E)
            spat = factors[0]
            for fct in factors[1:]:
                spat = sp.kron(spat, fct, format="csr")
            term = sp.kron(spat, sp.csr_matrix(A[i, j]), format="csr")
            total = term if total is None else total + term
    return total.tocsr()


def _interior_mask(grid: GridSpec):
    masks = [np.zeros(n, dtype=bool) for n in grid.nx]
    for m in masks:
        m[1:-1] = True
    full = masks[0]
    for m in masks[1:]:
        full = full[..., None] & m
    return full.reshape(-1)


def _split_columns(L, grid: GridSpec, d1: int):
    node_int = _interior_mask(grid)
    col_int = np.repeat(node_int, d1)
    return L[:, col_int].tocsc(), L[:, ~col_int].tocsc(), node_int


def _march(coeffs, config, f_vals, boundary_fn, u0_vals):
    """Shared implicit time stepper.  f_vals is (nt, ..., d1) or None;
    boundary_fn(t) returns a full-grid array whose boundary entries are
    imposed (zero when None)."""
    grid = config.grid
    d1 = coeffs.d1
    nt = grid.nt
    shape = tuple(grid.nx) + (d1,)
    n_full = int(np.prod(shape))
    times = grid.times()
    dt = grid.dt
    cn = config.scheme == "crank-nicolson"

    out = np.zeros((nt,) + shape)
    out[0] = u0_vals if u0_vals is not None else 0.0

    node_int = None
    lu = None
    slab = None
    L = Li = Lb = None
    ident = None
    for m in range(nt - 1):
        t_imp = times[m] + (0.5 * dt if cn else dt)
        s = coeffs.slab_index(t_imp)
        if s != slab or lu is None:
            slab = s
            L = _assemble(grid, coeffs.mats[s])
            Li, Lb, node_int = _split_columns(L, grid, d1)
            ident = sp.identity(Li.shape[0], format="csc")
            gamma = 0.5 * dt if cn else dt
            lu = spla.splu((ident - gamma * Li).tocsc())
        u_flat = out[m].reshape(-1)
        col_int = np.repeat(node_int, d1)
        ub_now = u_flat[~col_int]
        if boundary_fn is not None:
            nxt_full = boundary_fn(times[m + 1]).reshape(-1)
        else:
            nxt_full = np.zeros(n_full)
        ub_next = nxt_full[~col_int]
        f_now = f_vals[m].reshape(-1)[col_int] if f_vals is not None else 0.0
        f_next = f_vals[m + 1].reshape(-1)[col_int] if f_vals is not None else 0.0
        if cn:
            rhs = (
                u_flat[col_int]
                + 0.5 * dt * (Li @ u_flat[col_int] + Lb @ ub_now + Lb @ ub_next)
                + 0.5 * dt * (f_now + f_next)
            )
        else:
            rhs = u_flat[col_int] + dt * (Lb @ ub_next) + dt * f_next
        sol = lu.solve(rhs)
        nxt = np.zeros(n_full)
        nxt[col_int] = sol
        nxt[~col_int] = ub_next
        out[m + 1] = nxt.reshape(shape)
    return out


def solve_parabolic(
    coeffs: SystemCoefficients,
    f: NodeField,
    config: SolverConfig,
    u0: np.ndarray | None = None,
) -> NodeField:
    """March u_t = A^{ij}(t) u_{x^i x^j} + f from u(0) (zero by default)
    with homogeneous Dirichlet values; returns the full trajectory."""
    validate_ellipticity(coeffs)
    if f.grid() != config.grid:
        raise ValueError("forcing is not sampled on the solver grid")
    vals = _march(coeffs, config, f.values, None, u0)
    return NodeField(vals, config.grid.t0, config.grid.dt, config.grid.x_lo, config.grid.dx)


def solve_elliptic(coeffs: SystemCoefficients, f: NodeField, config: SolverConfig) -> NodeField:
    """One sparse solve of A^{ij} u_{x^i x^j} = f with zero boundary
    values; f and the result are single-slice spatial fields."""
    validate_ellipticity(coeffs)
    if f.nt != 1:
        raise ValueError("elliptic data must be a single-time field")
    grid = config.grid
    d1 = coeffs.d1
    L = _assemble(grid, coeffs.mats[0])
    Li, _, node_int = _split_columns(L, grid, d1)
    col_int = np.repeat(node_int, d1)
    rhs = f.values[0].reshape(-1)[col_int]
    sol = spla.spsolve(Li.tocsc(), rhs)
    full = np.zeros(int(np.prod(f.values[0].shape)))
    full[col_int] = sol
    return NodeField(full.reshape((1,) + f.values[0].shape), f.t0, f.dt, f.x_lo, f.dx)


def homogeneous_local_solve(
    coeffs: SystemCoefficients, boundary_fn, config: SolverConfig
) -> NodeField:
    """Discrete caloric field on the configured space-time box: marches
    u_t = A^{ij}(t) u_{x^i x^j} with data from boundary_fn imposed at the
    initial time and on every lateral face.

    boundary_fn(t, x1, ..., xd) is evaluated on the full grid; only its
    boundary values enter after the initial slice.  Corner incompatibility
    shows up in the a posteriori residual, which callers should check.
    """
    validate_ellipticity(coeffs)
    grid = config.grid
    mesh = np.meshgrid(*[grid.axis(k) for k in range(grid.d)], indexing="ij")

    def full_at(t):
        out = np.asarray(boundary_fn(t, *mesh), dtype=float)
        if out.shape == tuple(grid.nx):
            out = out[..., None]
        return out

    vals = _march(coeffs, config, None, full_at, full_at(grid.t0))
    return NodeField(vals, grid.t0, grid.dt, grid.x_lo, grid.dx)


def parabolic_residual(coeffs: SystemCoefficients, u: NodeField, f: NodeField | None = None):
    """A posteriori residual u_t - A^{ij} u_{x^i x^j} - f at interior nodes
    (slab-correct coefficients), for manufactured and caloric checks."""
    ut = derivative(u, (0,) * u.d, t_order=1).values
    res = ut.copy()
    times = u.times()
    for i in range(u.d):
        for j in range(u.d):
            beta = [0] * u.d
            beta[i] += 1
            beta[j] += 1
            dij = derivative(u, tuple(beta)).values
            for m, t in enumerate(times):
                A = coeffs.at_time(t)[i, j]
                res[m] -= dij[m] @ A.T
    if f is not None:
        res = res - f.values
    sl = (slice(None),) + (slice(2, -2),) * u.d + (slice(None),)
    return res[sl]


# ---------------------------------------------------------------------------
# a priori estimate ratios
# ---------------------------------------------------------------------------


def solution_norm_parabolic(u: NodeField, spec: NormSpec):
    """Surrogate for the parabolic solution norm with zero initial data:
    time-L_p aggregate of the second-order equivalence triple of u plus
    the aggregate of |M u_t|_{L_p,theta}."""
    times = u.times()
    triple = []
    for m in range(u.nt):
        a, b, c = equiv_triple(u.at_time(m), spec)
        triple.append(a + b + c)
    ut = derivative(u, (0,) * u.d, t_order=1)
    mut = []
    for m in range(u.nt):
        mut.append(weighted_lp_norm(ut.at_time(m), NormSpec(spec.p, spec.theta, 0, m_power=1)))
    n1 = time_lp_aggregate(triple, times, spec.p)
    n2 = time_lp_aggregate(mut, times, spec.p)
    return n1 + n2


def data_norm_parabolic(f: NodeField, spec: NormSpec):
    times = f.times()
    vals = [
        weighted_lp_norm(f.at_time(m), NormSpec(spec.p, spec.theta, 0, m_power=1))
        for m in range(f.nt)
    ]
    return time_lp_aggregate(vals, times, spec.p)


def apriori_ratio_parabolic(u: NodeField, f: NodeField, spec: NormSpec) -> float:
    """Measured constant of the parabolic a priori estimate; 0 for f = 0."""
    den = data_norm_parabolic(f, spec)
    if den == 0.0:
        return 0.0
    return solution_norm_parabolic(u, spec) / den


def apriori_ratio_elliptic(u: NodeField, f: NodeField, spec: NormSpec) -> float:
    """Measured constant of the elliptic estimate
    |M^{-1}u|_{H^2} <= N |M f|_{L_p,theta} via the equivalence triple."""
    den = weighted_lp_norm(f, NormSpec(spec.p, spec.theta, 0, m_power=1))
    if den == 0.0:
        return 0.0
    a, b, c = equiv_triple(u, spec)
    return (a + b + c) / den

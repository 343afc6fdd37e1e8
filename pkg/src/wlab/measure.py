"""Closed-form evaluation of the boundary-power measures on a half space.

Everything here is exact arithmetic on the density (x1)^alpha: interval
masses come from the antiderivative, never from quadrature, so the dyadic
identities built on top hold to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightParams",
    "HalfLineInterval",
    "phi",
    "interval_weight",
    "box_measure_nu",
    "box_measure_mu",
    "phi_ratio",
]


@dataclass(frozen=True)
class WeightParams:
    """Exponent of the boundary weight (x1)^alpha; alpha > -1 keeps the
    measure locally finite at the boundary."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > -1.0:
            raise ValueError(f"alpha must be > -1, got {self.alpha}")


@dataclass(frozen=True)
class HalfLineInterval:
    """Interval [lo, hi) on the closed half line, 0 <= lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo}, {self.hi})")


def phi(x: float, params: WeightParams) -> float:
    """Antiderivative kernel x^(alpha+1) on x > 0."""
    if x <= 0.0:
        raise ValueError(f"phi requires x > 0, got {x}")
    return x ** (params.alpha + 1.0)


def _interval_weight(lo, hi, alpha):
    """Vectorized mass of [lo, hi) under (x1)^alpha dx1.

    Uses the expm1/log1p form of the antiderivative difference for lo > 0;
    plain subtraction of nearby powers loses digits once hi/lo is close
    to 1, and the acceptance sweeps compare ratios at 1e-12 slack.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    a1 = alpha + 1.0
    if alpha == 0.0:
        return hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = np.where(
            lo > 0.0,
            lo ** a1 * np.expm1(a1 * np.log1p((hi - lo) / np.where(lo > 0, lo, 1.0))) / a1,
            hi ** a1 / a1,
        )
    return stable


def interval_weight(iv: HalfLineInterval, params: WeightParams) -> float:
    """Mass of the interval under nu_alpha, from the closed-form antiderivative."""
    return float(_interval_weight(iv.lo, iv.hi, params.alpha))


def box_measure_nu(
    iv: HalfLineInterval, transverse_volume: float, params: WeightParams
) -> float:
    """nu_alpha-mass of a box: weighted x1 factor times the Lebesgue volume
    of the transverse cross-section."""
    if transverse_volume <= 0.0:
        raise ValueError("transverse_volume must be positive")
    return interval_weight(iv, params) * transverse_volume


def box_measure_mu(
    time_length: float,
    iv: HalfLineInterval,
    transverse_volume: float,
    params: WeightParams,
) -> float:
    """mu_alpha-mass of a space-time box (mu = nu x dt)."""
    if time_length <= 0.0:
        raise ValueError("time_length must be positive")
    return time_length * box_measure_nu(iv, transverse_volume, params)


def phi_ratio(x: float, r: float, params: WeightParams) -> float:
    """(phi(x+2r) - phi(x+r)) / (phi(x+r) - phi(x)).

    Callers assert the bound 2^(alpha+1); the ratio itself is returned so
    sweeps can report margins.  x <= 0 is a domain error, the x -> 0+
    supremum is probed in tests only.
    """
    if x <= 0.0 or r <= 0.0:
        raise ValueError("phi_ratio requires x > 0 and r > 0")
    num = _interval_weight(x + r, x + 2.0 * r, params.alpha)
    den = _interval_weight(x, x + r, params.alpha)
    # numerator/denominator of the phi differences share the 1/(alpha+1)
    # factor, so interval weights give the same ratio
    return float(num / den)


def phi_ratio_array(x, r, alpha):
    """Array version of phi_ratio for sweep suites."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(x <= 0.0) or np.any(r <= 0.0):
        raise ValueError("phi_ratio requires x > 0 and r > 0")
    return _interval_weight(x + r, x + 2.0 * r, alpha) / _interval_weight(x, x + r, alpha)


def phi_ratio_bound(alpha: float) -> float:
    """The proven ceiling 2^(alpha+1) for phi_ratio."""
    return 2.0 ** (alpha + 1.0)

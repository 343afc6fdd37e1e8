import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab.measure import (
    HalfLineInterval,
    WeightParams,
    box_measure_mu,
    box_measure_nu,
    interval_weight,
    phi,
    phi_ratio,
    phi_ratio_array,
    phi_ratio_bound,
)

ALPHAS = [-0.9, -0.5, 0.0, 0.5, 1.0, 2.7, 5.0]


def test_weight_params_rejects_degenerate_alpha():
    with pytest.raises(ValueError):
        WeightParams(alpha=-1.0)
    with pytest.raises(ValueError):
        WeightParams(alpha=-1.5)


def test_interval_rejects_bad_endpoints():
    with pytest.raises(ValueError):
        HalfLineInterval(-0.1, 1.0)
    with pytest.raises(ValueError):
        HalfLineInterval(2.0, 2.0)


@pytest.mark.parametrize(
    "x, alpha, expected",
    [
        (2.0, 1.0, 4.0),
        (1.0, -0.5, 1.0),
        (4.0, 0.5, 8.0),  # 4**1.5 by hand
    ],
)
def test_phi_values(x, alpha, expected):
    assert phi(x, WeightParams(alpha)) == pytest.approx(expected, rel=1e-14)


def test_phi_domain_error():
    with pytest.raises(ValueError):
        phi(0.0, WeightParams(1.0))
    with pytest.raises(ValueError):
        phi(-1.0, WeightParams(1.0))


@pytest.mark.parametrize(
    "lo, hi, alpha, expected",
    [
        (1.0, 3.0, 0.0, 2.0),
        (0.0, 2.0, 1.0, 2.0),
        (0.0, 1.0, -0.5, 2.0),
    ],
)
def test_interval_weight_values(lo, hi, alpha, expected):
    got = interval_weight(HalfLineInterval(lo, hi), WeightParams(alpha))
    assert got == pytest.approx(expected, rel=1e-14)


def test_interval_weight_alpha_zero_is_exact_length():
    iv = HalfLineInterval(0.3, 1.7)
    assert interval_weight(iv, WeightParams(0.0)) == 1.7 - 0.3


def test_interval_weight_matches_quadrature_oracle():
    # brute-force midpoint quadrature as the independent route
    for alpha in ALPHAS:
        lo, hi = 0.25, 2.5
        xs = np.linspace(lo, hi, 200001)
        mid = 0.5 * (xs[1:] + xs[:-1])
        brute = np.sum(mid ** alpha) * (xs[1] - xs[0])
        got = interval_weight(HalfLineInterval(lo, hi), WeightParams(alpha))
        assert got == pytest.approx(brute, rel=1e-8)


@given(
    a=st.floats(0.0, 50.0),
    gap1=st.floats(1e-3, 10.0),
    gap2=st.floats(1e-3, 10.0),
    alpha=st.sampled_from(ALPHAS),
)
@settings(max_examples=80, deadline=None)
def test_interval_weight_additive(a, gap1, gap2, alpha):
    p = WeightParams(alpha)
    b, c = a + gap1, a + gap1 + gap2
    left = interval_weight(HalfLineInterval(a, b), p)
    right = interval_weight(HalfLineInterval(b, c), p)
    whole = interval_weight(HalfLineInterval(a, c), p)
    assert left + right == pytest.approx(whole, rel=1e-12)


@given(
    lo=st.floats(0.01, 20.0),
    gap=st.floats(1e-3, 5.0),
    c=st.floats(0.1, 8.0),
    alpha=st.sampled_from(ALPHAS),
)
@settings(max_examples=80, deadline=None)
def test_interval_weight_dilation_covariance(lo, gap, c, alpha):
    p = WeightParams(alpha)
    base = interval_weight(HalfLineInterval(lo, lo + gap), p)
    scaled = interval_weight(HalfLineInterval(c * lo, c * (lo + gap)), p)
    assert scaled == pytest.approx(c ** (alpha + 1.0) * base, rel=1e-12)


def test_interval_weight_narrow_interval_is_stable():
    # hi/lo - 1 = 1e-9 would lose ~7 digits under naive subtraction
    p = WeightParams(-0.9)
    lo = 16.0
    hi = lo * (1.0 + 1e-9)
    got = interval_weight(HalfLineInterval(lo, hi), p)
    assert got == pytest.approx(lo ** -0.9 * (hi - lo), rel=1e-9)


@pytest.mark.parametrize(
    "iv, vol, alpha, expected",
    [
        ((0.0, 1.0), 1.0, 1.0, 0.5),
        ((1.0, 2.0), 4.0, 0.0, 4.0),
        ((0.0, 2.0), 0.5, 2.0, 4.0 / 3.0),  # (8/3) * 0.5
    ],
)
def test_box_measure_nu(iv, vol, alpha, expected):
    got = box_measure_nu(HalfLineInterval(*iv), vol, WeightParams(alpha))
    assert got == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize(
    "tl, iv, vol, alpha, expected",
    [
        (1.0, (0.0, 1.0), 1.0, 1.0, 0.5),
        (4.0, (0.0, 2.0), 1.0, 1.0, 8.0),
        (0.25, (1.0, 3.0), 2.0, 0.0, 1.0),
    ],
)
def test_box_measure_mu(tl, iv, vol, alpha, expected):
    got = box_measure_mu(tl, HalfLineInterval(*iv), vol, WeightParams(alpha))
    assert got == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize(
    "x, r, alpha, expected",
    [
        (1.0, 1.0, 0.0, 1.0),
        (1.0, 1.0, 1.0, 5.0 / 3.0),  # (9-4)/(4-1)
        (1e-12, 1.0, 1.0, 3.0),  # x -> 0+ limit of (2x+3r)/(2x+r)
    ],
)
def test_phi_ratio_values(x, r, alpha, expected):
    got = phi_ratio(x, r, WeightParams(alpha))
    assert got == pytest.approx(expected, rel=1e-9)


def test_phi_ratio_domain_error():
    with pytest.raises(ValueError):
        phi_ratio(0.0, 1.0, WeightParams(1.0))
    with pytest.raises(ValueError):
        phi_ratio(1.0, 0.0, WeightParams(1.0))


@given(
    x=st.floats(1e-6, 100.0),
    r=st.floats(1e-6, 100.0),
    alpha=st.sampled_from(ALPHAS),
)
@settings(max_examples=200, deadline=None)
def test_phi_ratio_bounded(x, r, alpha):
    got = phi_ratio(x, r, WeightParams(alpha))
    assert got <= phi_ratio_bound(alpha) * (1.0 + 1e-12)


def test_phi_ratio_array_matches_scalar():
    xs = np.array([0.1, 1.0, 3.7])
    rs = np.array([0.5, 1.0, 2.0])
    arr = phi_ratio_array(xs, rs, 1.5)
    p = WeightParams(1.5)
    for k in range(3):
        assert arr[k] == pytest.approx(phi_ratio(xs[k], rs[k], p), rel=1e-13)

import math

import numpy as np
import pytest

from wlab.fields import GridSpec, NodeField, sample
from wlab.kernel import (
    BLOCK_PATHS,
    PathBatch,
    apply_L,
    assemble_L_matrix,
    divergence_decomposition,
    estimate_Ef,
    estimate_Ef_grid,
    jackknife,
    simulate_sigma,
    weak_residual,
)


def bump(x, lo=0.5, hi=1.5):
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    s = (x - mid) / half
    inside = np.abs(s) < 1.0
    z = np.where(inside, 1.0 - s * s, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(inside, np.exp(-1.0 / z), 0.0)


MOMENT_BATCH = PathBatch(seed=11, n_paths=40_000, step=1e-3, t_max=0.25)


@pytest.fixture(scope="module")
def sigma_paths():
    return simulate_sigma((1.0, 0.5, -0.3), MOMENT_BATCH, record_times=[0.1, 0.25])


def test_first_coordinate_mean(sigma_paths):
    for k, t in enumerate([0.1, 0.25]):
        vals = sigma_paths.first[:, k]
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - math.exp(3.0 * t)) <= 3.0 * se


def test_first_coordinate_median_bootstrap(sigma_paths):
    rng = np.random.default_rng(5)
    vals = sigma_paths.first[:, 1]
    target = math.exp(2.0 * 0.25)
    meds = [np.median(rng.choice(vals, size=len(vals))) for _ in range(120)]
    se = float(np.std(meds, ddof=1))
    assert abs(np.median(vals) - target) <= 3.0 * se


def test_transverse_variance(sigma_paths):
    t = 0.25
    target = (math.exp(8.0 * t) - 1.0) / 4.0
    for j in range(2):
        eta = (sigma_paths.transverse[:, 1, j] - sigma_paths.x[1 + j]) / sigma_paths.x[0]
        v = eta.var(ddof=1)
        m4 = float(np.mean((eta - eta.mean()) ** 4))
        se = math.sqrt((m4 - v * v) / len(eta))
        assert abs(v - target) <= 5.0 * se


def test_increment_law():
    # xi increments over one step have mean 2 dt and variance 2 dt
    batch = PathBatch(seed=2, n_paths=20_000, step=1e-3, t_max=0.002)
    paths = simulate_sigma((1.0,), batch, record_times=[0.001, 0.002])
    xi = np.log(paths.first)
    inc = xi[:, 1] - xi[:, 0]
    n = len(inc)
    z_mean = (inc.mean() - 2.0 * batch.step) / (inc.std(ddof=1) / math.sqrt(n))
    v = inc.var(ddof=1)
    m4 = float(np.mean((inc - inc.mean()) ** 4))
    z_var = (v - 2.0 * batch.step) / math.sqrt((m4 - v * v) / n)
    assert abs(z_mean) < 4.0 and abs(z_var) < 4.0


def test_degenerate_boundary_freezes():
    batch = PathBatch(seed=4, n_paths=64, step=1e-3, t_max=0.01)
    paths = simulate_sigma((0.0, 0.7), batch, record_times=[0.01])
    assert np.all(paths.first == 0.0)
    assert np.all(paths.transverse == 0.7)


def test_paths_regenerate_deterministically():
    batch = PathBatch(seed=9, n_paths=BLOCK_PATHS + 10, step=1e-3, t_max=0.01)
    a = simulate_sigma((1.0,), batch, record_times=[0.01])
    b = simulate_sigma((1.0,), batch, record_times=[0.01])
    np.testing.assert_array_equal(a.first, b.first)
    # a path's draw does not depend on how many later paths are requested
    small = PathBatch(seed=9, n_paths=BLOCK_PATHS, step=1e-3, t_max=0.01)
    c = simulate_sigma((1.0,), small, record_times=[0.01])
    np.testing.assert_array_equal(a.first[:BLOCK_PATHS], c.first)


# ---------------------------------------------------------------------------
# operator and weak identities
# ---------------------------------------------------------------------------


def half_line_grid(n=129, X=4.0):
    return GridSpec(0.0, 1.0, 1, (0.0,), (X / (n - 1),), (n,))


def test_apply_L_examples():
    g = half_line_grid(33, 2.0)
    xs = g.axis(0)
    const = sample(lambda t, x: 1.0 + 0.0 * x, g)
    assert np.max(np.abs(apply_L(const).values)) <= 1e-12
    lin = sample(lambda t, x: x, g)
    np.testing.assert_allclose(apply_L(lin).values[0, :, 0], 3.0 * xs, atol=1e-10)
    quad = sample(lambda t, x: x * x, g)
    np.testing.assert_allclose(apply_L(quad).values[0, :, 0], 8.0 * xs ** 2, atol=1e-9)


def test_matrix_matches_apply_L():
    g = half_line_grid(65, 4.0)
    u = sample(lambda t, x: np.sin(x) * np.exp(-x), g)
    L = assemble_L_matrix(g.axis(0), g.dx[0])
    np.testing.assert_allclose(
        L @ u.values[0, :, 0], apply_L(u).values[0, :, 0], atol=1e-10
    )


def test_apply_L_multidimensional():
    g = GridSpec(0.0, 1.0, 1, (0.0, -1.0), (0.125, 0.125), (17, 17))
    u = sample(lambda t, x, y: x * x + y * y, g)
    got = apply_L(u).values[0, :, :, 0]
    xs = g.axis(0)
    expect = np.broadcast_to(10.0 * xs[:, None] ** 2, got.shape)
    np.testing.assert_allclose(got, expect, atol=1e-8)


EF_BATCH = PathBatch(seed=3, n_paths=8 * BLOCK_PATHS, step=5e-3, t_max=10.0)


@pytest.fixture(scope="module")
def ef_setup():
    g = half_line_grid()
    xs = g.axis(0)
    est = estimate_Ef_grid(bump, xs[1:], EF_BATCH, support=(0.5, 1.5))
    ef_full = np.concatenate([[0.0], est.values])
    ef = NodeField(ef_full[None, :, None], 0.0, 1.0, (0.0,), g.dx)
    blocks = np.concatenate(
        [np.zeros((est.block_values.shape[0], 1)), est.block_values], axis=1
    )
    f = sample(lambda t, x: bump(x), g)
    return g, est, ef, blocks, f


def test_estimate_zero_function():
    e = estimate_Ef(lambda y: 0.0 * y, 1.0, PathBatch(1, 4096, 5e-3, 1.0), (0.5, 1.5))
    assert e.value == 0.0


def test_estimate_vanishes_at_boundary():
    e = estimate_Ef(bump, 0.0, EF_BATCH, (0.5, 1.5))
    assert e.value == 0.0 and e.stderr == 0.0


def test_estimate_se_halves_with_more_paths():
    small = estimate_Ef(bump, 1.0, PathBatch(5, 8 * BLOCK_PATHS, 5e-3, 6.0), (0.5, 1.5))
    big = estimate_Ef(bump, 1.0, PathBatch(5, 32 * BLOCK_PATHS, 5e-3, 6.0), (0.5, 1.5))
    assert big.stderr < small.stderr
    assert big.stderr == pytest.approx(0.5 * small.stderr, rel=0.45)


def test_weak_residuals_within_budget(ef_setup):
    g, est, ef, blocks, f = ef_setup
    phis = [
        sample(lambda t, x, c=c, w=w: bump(x, c - w, c + w), g)
        for c, w in [(1.0, 0.4), (1.8, 0.5), (0.8, 0.3)]
    ]
    res = weak_residual(ef, f, phis, ef_blocks=blocks)
    for r in res:
        assert abs(r.value) <= r.budget + est.tail_budget
        assert r.mc_budget > 0.0


def test_weak_residual_zero_data():
    g = half_line_grid(33, 2.0)
    z = sample(lambda t, x: 0.0 * x, g)
    res = weak_residual(z, z, [sample(lambda t, x: bump(x, 0.5, 1.5), g)])
    assert res[0].value == 0.0


def test_weak_residual_linear_in_f(ef_setup):
    # common random numbers: Ef is linear in f through the shared histogram
    g, est, ef, blocks, f = ef_setup
    phi = sample(lambda t, x: bump(x, 0.9, 1.7), g)
    xs = g.axis(0)
    est2 = estimate_Ef_grid(
        lambda y: 2.0 * bump(y), xs[1:], EF_BATCH, support=(0.5, 1.5)
    )
    np.testing.assert_allclose(est2.values, 2.0 * est.values, rtol=1e-12)
    ef2 = NodeField(
        np.concatenate([[0.0], est2.values])[None, :, None], 0.0, 1.0, (0.0,), g.dx
    )
    f2 = sample(lambda t, x: 2.0 * bump(x), g)
    r1 = weak_residual(ef, f, [phi])[0].value
    r2 = weak_residual(ef2, f2, [phi])[0].value
    assert r2 == pytest.approx(2.0 * r1, rel=1e-9)


def test_divergence_zero():
    g = half_line_grid(33, 2.0)
    z = sample(lambda t, x: 0.0 * x, g)
    rep = divergence_decomposition(z, PathBatch(1, 4096, 5e-3, 1.0), (0.5, 1.5))
    assert rep.recon_error == 0.0 and rep.f_norm == 0.0


def test_divergence_reconstruction(ef_setup):
    g, est, ef, blocks, f = ef_setup
    rep = divergence_decomposition(
        f, EF_BATCH, (0.5, 1.5), p=2.0, boundary_cut=0.1
    )
    assert rep.recon_error <= rep.recon_budget
    assert 0.1 < rep.norm_ratio < 10.0


def test_jackknife_linear_functional_matches_std():
    rng = np.random.default_rng(0)
    blocks = rng.normal(size=(20, 3))
    center, se = jackknife(blocks, lambda v: float(v.sum()))
    direct = blocks.sum(axis=1)
    assert center == pytest.approx(float(direct.mean()), rel=1e-12)
    assert se == pytest.approx(float(direct.std(ddof=1) / math.sqrt(20)), rel=1e-10)

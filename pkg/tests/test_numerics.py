import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from bellman_refactor.core import DynamicProgram, PlanFactorization
from bellman_refactor.models.stopping import StoppingModel, build_stopping
from bellman_refactor.numerics import (ContinuousStoppingModel, Grid1D, MonteCarloStopping,
                                       ShockDraws, interp2_eval, interp_eval, interp_many,
                                       mc_refactored_operator, mc_standard_operator, tauchen)
from bellman_refactor.solvers import SolveConfig, rvfi


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D(np.array([0.0]))
    with pytest.raises(ValueError):
        Grid1D(np.array([0.0, 0.0, 1.0]))


@pytest.mark.parametrize("kw", [dict(rho=1.0, delta=0.1, n=5), dict(rho=-1.2, delta=0.1, n=5),
                                dict(rho=0.5, delta=0.0, n=5), dict(rho=0.5, delta=0.1, n=1)])
def test_tauchen_rejects(kw):
    with pytest.raises(ValueError):
        tauchen(**kw)


def test_tauchen_iid_rows_identical():
    _, P = tauchen(0.0, 0.3, 7)
    np.testing.assert_allclose(P, np.broadcast_to(P[0], P.shape), rtol=0, atol=0)


def test_tauchen_bankruptcy_parameters():
    grid, P = tauchen(0.99, np.sqrt(0.007), 10)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(grid.points, -grid.points[::-1], atol=1e-15)
    sd = np.sqrt(0.007 / (1 - 0.99 ** 2))
    assert grid.points[-1] == pytest.approx(3 * sd)


def test_tauchen_two_point_by_hand():
    rho, delta = 0.5, 1.0
    sd = delta / np.sqrt(1 - rho ** 2)
    x = np.array([-3 * sd, 3 * sd])
    mid = 0.0
    # P[i, 0] = Phi((mid - rho x_i)/delta), P[i, 1] = 1 - P[i, 0]
    p0 = norm.cdf((mid - rho * x) / delta)
    expect = np.column_stack([p0, 1 - p0])
    grid, P = tauchen(rho, delta, 2)
    np.testing.assert_allclose(grid.points, x)
    np.testing.assert_allclose(P, expect, rtol=1e-14)


@given(st.floats(-0.95, 0.95), st.floats(0.01, 2.0), st.integers(2, 30))
def test_tauchen_rows_are_probabilities(rho, delta, n):
    grid, P = tauchen(rho, delta, n)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(grid.points, -grid.points[::-1], atol=1e-12)


def _scan_interp(grid, values, x):
    # linear-scan reference with the same arithmetic form
    if x <= grid[0]:
        return values[0]
    if x >= grid[-1]:
        return values[-1]
    for i in range(grid.size - 1):
        if grid[i] <= x < grid[i + 1]:
            t = (x - grid[i]) / (grid[i + 1] - grid[i])
            return (1.0 - t) * values[i] + t * values[i + 1]
    raise AssertionError


def test_interp_exact_and_midpoint():
    g = Grid1D(np.array([0.0, 0.3, 1.1, 2.0]))
    vals = np.array([1.0, -2.0, 5.0, 0.5])
    for x, y in zip(g.points, vals):
        assert interp_eval(g, vals, x) == y
    assert interp_eval(g, vals, 1.55) == pytest.approx((5.0 + 0.5) / 2, rel=1e-15)
    assert interp_eval(g, vals, -4.0) == 1.0 and interp_eval(g, vals, 9.0) == 0.5


def test_interp_matches_linear_scan_bitwise():
    rng = np.random.default_rng(0)
    g = Grid1D(np.sort(rng.uniform(-3, 3, 40)))
    vals = rng.standard_normal(40)
    xs = rng.uniform(-4, 4, 1000)
    got = interp_many(g, vals, xs)
    ref = np.array([_scan_interp(g.points, vals, x) for x in xs])
    np.testing.assert_array_equal(got, ref)


def test_interp_nan_and_shape():
    g = Grid1D.equidistant(0, 1, 3)
    with pytest.raises(ArithmeticError):
        interp_eval(g, np.zeros(3), np.nan)
    with pytest.raises(ArithmeticError):
        interp_many(g, np.zeros(3), [0.1, np.nan])
    with pytest.raises(ValueError):
        interp_eval(g, np.zeros(4), 0.5)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12), st.floats(-20, 20))
def test_interp_monotone_in_values(values, x):
    vals = np.array(values)
    g = Grid1D.equidistant(-5, 5, vals.size)
    bump = np.abs(np.random.default_rng(0).standard_normal(vals.size))
    assert interp_eval(g, vals, x) <= interp_eval(g, vals + bump, x) + 1e-12


def test_bilinear_reproduces_affine():
    gy, gz = Grid1D.equidistant(0, 2, 5), Grid1D.equidistant(-1, 1, 4)
    Y, Z = np.meshgrid(gy.points, gz.points, indexing="ij")
    V = 2 * Y - 3 * Z + 0.5
    for y, z in [(0.3, 0.1), (1.9, -0.7), (1.0, 0.0)]:
        assert interp2_eval(gy, gz, V, y, z) == pytest.approx(2 * y - 3 * z + 0.5, abs=1e-13)
    assert interp2_eval(gy, gz, V, 5.0, 5.0) == pytest.approx(V[-1, -1])


def test_shock_draws_reproducible():
    sampler = lambda rng, n: rng.standard_normal((n, 2))
    a, b = ShockDraws.draw(sampler, 50, seed=3), ShockDraws.draw(sampler, 50, seed=3)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert len(a) == 50
    with pytest.raises(ValueError):
        ShockDraws.draw(sampler, 0)


def _walk_model(K=7, beta=0.9, flow=0.1):
    # z moves one grid step up or down with equal odds; y = z
    zg = Grid1D.equidistant(-1.0, 1.0, K)
    h = zg.points[1] - zg.points[0]

    def f2(z, U):
        return np.clip(z + h * U[:, 0], zg.points[0], zg.points[-1])

    model = ContinuousStoppingModel(zg, zg, lambda y, z: y + 0 * z,
                                    lambda y, z: np.full(np.broadcast(y, z).shape, flow),
                                    f2, f2, None, beta)
    draws = ShockDraws(np.array([[-1.0], [1.0]]), seed=0)
    return model, draws, zg


def test_mc_single_draw_is_one_max():
    model, _, zg = _walk_model()
    draws = ShockDraws(np.array([[1.0]]), seed=0)
    g = np.linspace(0, 1, len(zg))
    out = mc_refactored_operator(model, draws, g)
    z_next = np.minimum(zg.points + (zg.points[1] - zg.points[0]), 1.0)
    idx = np.searchsorted(zg.points, z_next - 1e-12)
    np.testing.assert_allclose(out, np.maximum(z_next, 0.1 + 0.9 * g[idx]), atol=1e-14)


def test_mc_collapsed_split_matches_finite_S():
    model, draws, zg = _walk_model()
    K = len(zg)
    # finite-state version on the same grid: state = z, y = z
    P = np.zeros((K, K))
    for k in range(K):
        P[k, max(k - 1, 0)] += 0.5
        P[k, min(k + 1, K - 1)] += 0.5
    dp, pf = build_stopping(StoppingModel(zg.points, np.full(K, 0.1), 0.9, transition=P))
    tol = 1e-10
    g_fin, _, _ = rvfi(dp, pf, np.zeros(K), SolveConfig(tol=tol))
    mc = MonteCarloStopping(model, draws)
    g_mc, _, _ = _solve_mc(mc.S, np.zeros(K), tol)
    np.testing.assert_allclose(g_mc, g_fin, atol=2 * tol)


def _solve_mc(op, x, tol):
    for k in range(10_000):
        x_new = op(x)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new, None, k
        x = x_new
    raise AssertionError("no convergence")


def test_mc_T_stop_dominates():
    gy, gz = Grid1D.equidistant(0, 1, 4), Grid1D.equidistant(0, 1, 3)
    model = ContinuousStoppingModel(gy, gz, lambda y, z: 100 + y + z,
                                    lambda y, z: np.zeros(np.broadcast(y, z).shape),
                                    lambda z, U: z + 0 * U[:, 0], lambda z, U: z + 0 * U[:, 0],
                                    None, 0.5)
    draws = ShockDraws(np.zeros((3, 1)), 0)
    out = mc_standard_operator(model, draws, np.zeros(12))
    Y, Z = np.meshgrid(gy.points, gz.points, indexing="ij")
    np.testing.assert_array_equal(out, (100 + Y + Z).ravel())


def test_mc_operators_match_python_loops():
    from bellman_refactor.models.stopping import continuous_asset_sale
    model = continuous_asset_sale(6, 5)
    draws = ShockDraws.draw(model.shock_sampler, 40, seed=1)
    rng = np.random.default_rng(2)
    g = rng.standard_normal(5)
    v = rng.standard_normal(30)
    zg, yg, beta = model.z_grid, model.y_grid, model.discount
    U = draws.samples
    S_ref, T_ref = np.empty(5), np.empty((6, 5))
    V = v.reshape(6, 5)
    for j, z in enumerate(zg.points):
        yn = model.f1(np.array([[z]]), U)[0]
        zn = model.f2(np.array([[z]]), U)[0]
        cont = np.array([interp_eval(zg, g, q) for q in zn])
        S_ref[j] = np.mean(np.maximum(yn, beta * cont))
        ev = np.mean([interp2_eval(yg, zg, V, a, b) for a, b in zip(yn, zn)])
        for i, y in enumerate(yg.points):
            T_ref[i, j] = max(y, beta * ev)
    np.testing.assert_allclose(mc_refactored_operator(model, draws, g), S_ref, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(mc_standard_operator(model, draws, v), T_ref.ravel(), rtol=1e-13, atol=1e-14)
    # same seed, same output
    np.testing.assert_array_equal(mc_refactored_operator(model, draws, g),
                                  mc_refactored_operator(model, ShockDraws.draw(model.shock_sampler, 40, seed=1), g))


def test_mc_S_contracts():
    from bellman_refactor.models.stopping import continuous_asset_sale
    from bellman_refactor.solvers import empirical_contraction_modulus
    model = continuous_asset_sale(5, 8, discount=0.9)
    mc = MonteCarloStopping(model, ShockDraws.draw(model.shock_sampler, 200, 0))
    mod = empirical_contraction_modulus(mc.S, lambda r: r.standard_normal(8), 50)
    assert mod <= 0.9 + 1e-10

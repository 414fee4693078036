import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellman_refactor.core import (DynamicProgram, InfeasiblePolicyError, NumericalDomainError,
                                   PlanFactorization, apply_M, apply_M_sigma, bellman_T,
                                   check_factorization, check_monotone, greedy_from_g,
                                   greedy_from_v, lift_v_to_g, lower_g_to_v, policy_S_sigma,
                                   policy_T_sigma, refactored_S)
from bellman_refactor.models.finite import (FiniteMdp, build_finite, expected_value_factorization,
                                            identity_factorization, qfactor_factorization,
                                            single_state)

from conftest import FACTORIZATIONS, seeds, small_mdp


def dense_dp(n, m, mask=None):
    mask = np.ones((n, m), bool) if mask is None else mask
    return DynamicProgram.from_mask(mask, lambda v: np.zeros(mask.sum()), 0.5)


def test_M_two_by_two():
    dp = dense_dp(2, 2)
    h = np.array([1.0, 3.0, 2.0, 0.0])
    v, sigma = apply_M(dp, h, return_argmax=True)
    np.testing.assert_array_equal(v, [3.0, 2.0])
    np.testing.assert_array_equal(sigma, [1, 0])
    np.testing.assert_array_equal(apply_M_sigma(dp, h, [0, 1]), [1.0, 0.0])


def test_M_singleton_sets():
    mask = np.array([[False, True, False], [True, False, False]])
    dp = dense_dp(2, 3, mask)
    v, sigma = apply_M(dp, np.array([4.0, -1.0]), return_argmax=True)
    np.testing.assert_array_equal(v, [4.0, -1.0])
    np.testing.assert_array_equal(sigma, [1, 0])


def test_ties_go_to_lowest_action():
    mask = np.array([[True, True, True], [False, True, True]])
    dp = dense_dp(2, 3, mask)
    v, sigma = apply_M(dp, np.array([2.0, 5.0, 5.0, 1.0, 1.0]), return_argmax=True)
    np.testing.assert_array_equal(sigma, [1, 1])
    dp2 = dense_dp(2, 2)
    assert list(apply_M(dp2, np.zeros(4), return_argmax=True)[1]) == [0, 0]


def test_neg_inf_loses_every_comparison():
    dp = dense_dp(1, 3)
    v, sigma = apply_M(dp, np.array([-np.inf, -1e300, -np.inf]), return_argmax=True)
    assert v[0] == -1e300 and sigma[0] == 1


def test_M_sigma_random_lookup():
    rng = np.random.default_rng(3)
    dp = dense_dp(3, 3)
    h = rng.standard_normal(9)
    sigma = np.array([2, 0, 1])
    expect = [h[3 * x + sigma[x]] for x in range(3)]
    np.testing.assert_array_equal(apply_M_sigma(dp, h, sigma), expect)


def test_infeasible_policy_names_state():
    mask = np.array([[True, True], [True, False]])
    dp = dense_dp(2, 2, mask)
    with pytest.raises(InfeasiblePolicyError) as exc:
        apply_M_sigma(dp, np.zeros(3), [1, 1])
    assert exc.value.state == 1 and exc.value.action == 1


def test_empty_feasible_set_rejected():
    with pytest.raises(ValueError, match="state 1"):
        dense_dp(2, 2, np.array([[True, False], [False, False]]))


def test_nan_aggregator_reports_pair():
    mask = np.ones((2, 2), bool)
    dp = DynamicProgram.from_mask(mask, lambda v: np.array([0.0, 1.0, np.nan, 2.0]), 0.5)
    with pytest.raises(NumericalDomainError) as exc:
        bellman_T(dp, np.zeros(2))
    assert (exc.value.state, exc.value.action) == (1, 0)


@given(seeds)
def test_dominance_M_over_M_sigma(seed):
    rng = np.random.default_rng(seed)
    dp = small_mdp(seed)
    h = rng.standard_normal(dp.n_pairs)
    sigma = dp.random_policy(rng)
    assert np.all(apply_M(dp, h) >= apply_M_sigma(dp, h, sigma))


@given(seeds)
def test_uniform_and_ragged_maximisers_agree(seed):
    rng = np.random.default_rng(seed)
    n, m = 5, 4
    h = rng.integers(0, 3, n * m).astype(float)      # many ties
    full = dense_dp(n, m)
    v1, s1 = apply_M(full, h, True)
    # same data through the reduceat path: add a dummy state with a single action
    mask = np.vstack([np.ones((n, m), bool), [[True, False, False, False]]])
    ragged = dense_dp(n + 1, m, mask)
    v2, s2 = apply_M(ragged, np.append(h, 0.0), True)
    np.testing.assert_array_equal(v1, v2[:n])
    np.testing.assert_array_equal(s1, s2[:n])


def test_single_state_T():
    dp = single_state(1.0, 0.5)
    np.testing.assert_array_equal(bellman_T(dp, np.zeros(1)), [1.0])
    np.testing.assert_array_equal(bellman_T(dp, np.full(1, 2.0)), [2.0])


def test_T_sigma_matches_matrix_form(two_state):
    rng = np.random.default_rng(0)
    mdp = two_state.meta["mdp"]
    v = rng.standard_normal(2)
    for sigma in ([0, 0], [0, 1], [1, 0], [1, 1]):
        x = np.arange(2)
        expect = mdp.rewards[x, sigma] + 0.9 * mdp.transitions[x, sigma] @ v
        np.testing.assert_allclose(policy_T_sigma(two_state, np.array(sigma), v), expect, rtol=1e-14)


def test_qfactor_S_entrywise(two_state):
    mdp = two_state.meta["mdp"]
    pf = qfactor_factorization(two_state)
    g = np.array([0.3, -1.2, 2.5, 0.7])
    out = refactored_S(two_state, pf, g)
    G = g.reshape(2, 2)
    for x in range(2):
        for a in range(2):
            expect = mdp.rewards[x, a] + 0.9 * sum(G[y].max() * mdp.transitions[x, a, y]
                                                   for y in range(2))
            assert out[2 * x + a] == pytest.approx(expect, rel=1e-14)


def test_expected_value_S_entrywise(two_state):
    mdp = two_state.meta["mdp"]
    pf = expected_value_factorization(two_state)
    g = np.array([0.3, -1.2, 2.5, 0.7])
    out = refactored_S(two_state, pf, g)
    sigma = np.array([1, 0])
    out_sigma = policy_S_sigma(two_state, pf, sigma, g)
    G = g.reshape(2, 2)
    for x in range(2):
        for a in range(2):
            best = sum(max(mdp.rewards[y, b] + 0.9 * G[y, b] for b in range(2))
                       * mdp.transitions[x, a, y] for y in range(2))
            along = sum((mdp.rewards[y, sigma[y]] + 0.9 * G[y, sigma[y]])
                        * mdp.transitions[x, a, y] for y in range(2))
            assert out[2 * x + a] == pytest.approx(best, rel=1e-14)
            assert out_sigma[2 * x + a] == pytest.approx(along, rel=1e-14)


def test_greedy_from_g_by_enumeration(two_state):
    mdp = two_state.meta["mdp"]
    pf = expected_value_factorization(two_state)
    g = np.array([4.0, 0.1, -3.0, 1.0])
    expect = [int(np.argmax([mdp.rewards[x, a] + 0.9 * g[2 * x + a] for a in range(2)]))
              for x in range(2)]
    np.testing.assert_array_equal(greedy_from_g(two_state, pf, g), expect)


@given(seeds, st.sampled_from(sorted(FACTORIZATIONS)))
def test_validity_and_monotone_flags(seed, name):
    dp = small_mdp(seed)
    pf = FACTORIZATIONS[name](dp)
    rng = np.random.default_rng(seed)
    assert check_factorization(dp, pf, rng, n_samples=20) <= 1e-12
    assert check_monotone(dp, pf, rng, n_pairs=20)


def test_check_factorization_detects_broken_pair(two_state):
    pf = expected_value_factorization(two_state)
    broken = PlanFactorization(pf.reduced_size, pf.w0, lambda g: pf.w1(g) + 1e-9,
                               monotone=True, name="broken")
    with pytest.raises(AssertionError, match="broken"):
        check_factorization(two_state, broken)


def test_constant_v_lifts_to_constant(two_state):
    pf = expected_value_factorization(two_state)
    np.testing.assert_allclose(lift_v_to_g(pf, np.full(2, 3.5)), 3.5, rtol=1e-15)


@given(seeds, st.sampled_from([1, 2, 5]))
def test_conjugacy(seed, n):
    dp = small_mdp(seed)
    rng = np.random.default_rng(seed)
    for name, make in FACTORIZATIONS.items():
        pf = make(dp)
        v0 = rng.standard_normal(dp.n_states)
        g0 = pf.W0(v0)
        # S^n g0 = W0 T^(n-1) M W1 g0
        lhs, rhs = g0, lower_g_to_v(dp, pf, g0)
        for _ in range(n):
            lhs = refactored_S(dp, pf, lhs)
        for _ in range(n - 1):
            rhs = bellman_T(dp, rhs)
        np.testing.assert_allclose(lhs, pf.W0(rhs), rtol=0, atol=1e-12)
        # T^n v0 = M W1 S^(n-1) W0 v0
        lhs, rhs = v0, g0
        for _ in range(n):
            lhs = bellman_T(dp, lhs)
        for _ in range(n - 1):
            rhs = refactored_S(dp, pf, rhs)
        np.testing.assert_allclose(lhs, lower_g_to_v(dp, pf, rhs), rtol=0, atol=1e-12)
        # the same with T_sigma / S_sigma
        sigma = dp.random_policy(rng)
        lhs = g0
        rhs = pf.W0(v0)
        rhs = apply_M_sigma(dp, pf.W1(rhs), sigma)
        for _ in range(n):
            lhs = policy_S_sigma(dp, pf, sigma, lhs)
        for _ in range(n - 1):
            rhs = policy_T_sigma(dp, sigma, rhs)
        np.testing.assert_allclose(lhs, pf.W0(rhs), rtol=0, atol=1e-12)


@given(seeds)
def test_identity_factorization_S_equals_T(seed):
    dp = small_mdp(seed)
    pf = identity_factorization(dp)
    v = np.random.default_rng(seed).standard_normal(dp.n_states)
    np.testing.assert_array_equal(refactored_S(dp, pf, v), bellman_T(dp, v))
    np.testing.assert_array_equal(lift_v_to_g(pf, v), v)
    np.testing.assert_array_equal(greedy_from_g(dp, pf, v), greedy_from_v(dp, v))


@given(seeds, st.sampled_from(sorted(FACTORIZATIONS)))
def test_greedy_consistency(seed, name):
    dp = small_mdp(seed)
    pf = FACTORIZATIONS[name](dp)
    v = np.random.default_rng(seed).integers(-2, 3, dp.n_states).astype(float)
    np.testing.assert_array_equal(greedy_from_g(dp, pf, pf.W0(v)), greedy_from_v(dp, v))
    np.testing.assert_array_equal(greedy_from_v(dp, v), bellman_T(dp, v, True)[1])


def test_greedy_T_sigma_equals_T(two_state):
    v = np.array([1.0, -2.0])
    sigma = greedy_from_v(two_state, v)
    np.testing.assert_array_equal(policy_T_sigma(two_state, sigma, v), bellman_T(two_state, v))
    pf = expected_value_factorization(two_state)
    g = pf.W0(v)
    s2 = greedy_from_g(two_state, pf, g)
    np.testing.assert_array_equal(policy_S_sigma(two_state, pf, s2, g), refactored_S(two_state, pf, g))


def test_W0_shape_checked(two_state):
    pf = PlanFactorization(3, lambda v: v, lambda g: g, monotone=True)
    with pytest.raises(ValueError, match="shape"):
        pf.W0(np.zeros(2))

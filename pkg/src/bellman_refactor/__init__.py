"""Bellman and refactored Bellman operators, solvers and benchmark models."""
from .core import (DynamicProgram, InfeasiblePolicyError, NumericalDomainError,
                   PlanFactorization, apply_M, apply_M_sigma, bellman_T, check_factorization,
                   check_monotone, greedy_from_g, greedy_from_v, lift_v_to_g, lower_g_to_v,
                   policy_S_sigma, policy_T_sigma, refactored_S)
from .solvers import (SolveConfig, SolveReport, brute_force_oracle, certified_start,
                      empirical_contraction_modulus, opi, policy_value, refactored_opi,
                      refactored_policy_value, rvfi, vfi)

__version__ = "0.1.0"

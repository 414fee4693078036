"""Finite Markov decision processes with additive rewards.

``H(x, a, v) = r(x, a) + beta * sum_x' v(x') p(x, a, x')``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import DynamicProgram, PlanFactorization


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    rewards: np.ndarray       # (n, m)
    transitions: np.ndarray   # (n, m, n)
    discount: float
    feasible: Optional[np.ndarray] = None  # (n, m) bool, default all

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        p = np.asarray(self.transitions, dtype=float)
        n, m = r.shape
        if p.shape != (n, m, n):
            raise ValueError(f"transitions must have shape ({n}, {m}, {n})")
        mask = np.ones((n, m), dtype=bool) if self.feasible is None else np.asarray(self.feasible, bool)
        if np.any(p[mask] < 0):
            raise ValueError("transition probabilities must be nonnegative")
        rows = p[mask].sum(axis=-1)
        if np.any(np.abs(rows - 1.0) > 1e-10):
            raise ValueError("transition rows must sum to 1")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "feasible", mask)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               discount: Optional[float] = None, p_infeasible: float = 0.25,
               sparsity: float = 0.3) -> FiniteMdp:
    """Random MDP with some infeasible actions and sparse transition rows."""
    if discount is None:
        discount = float(rng.uniform(0.5, 0.9))
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    p = rng.random((n_states, n_actions, n_states))
    p[rng.random(p.shape) < sparsity] = 0.0
    dead = p.sum(axis=-1) == 0
    p[dead, 0] = 1.0
    p /= p.sum(axis=-1, keepdims=True)
    mask = rng.random((n_states, n_actions)) >= p_infeasible
    mask[np.arange(n_states), rng.integers(0, n_actions, n_states)] = True
    return FiniteMdp(r, p, discount, mask)


def build_finite(mdp: FiniteMdp, name: str = "finite_mdp") -> DynamicProgram:
    mask = mdp.feasible
    r_f = mdp.rewards[mask]
    p_f = mdp.transitions[mask]          # (|F|, n)
    beta = mdp.discount

    def aggregator(v):
        return r_f + beta * (p_f @ v)

    def policy_system(sigma):
        x = np.arange(mdp.n_states)
        return mdp.rewards[x, sigma], beta * mdp.transitions[x, sigma]

    dp = DynamicProgram.from_mask(mask, aggregator, beta, name=name,
                                  policy_system=policy_system,
                                  reward_min=float(r_f.min()))
    dp.meta.update(r_f=r_f, p_f=p_f, mdp=mdp)
    return dp


def expected_value_factorization(dp: DynamicProgram) -> PlanFactorization:
    """``W0 v = sum_x' v(x') p(x, a, x')`` on ``F``; ``W1 g = r + beta g``."""
    r_f, p_f, beta = dp.meta["r_f"], dp.meta["p_f"], dp.discount
    return PlanFactorization(dp.n_pairs, lambda v: p_f @ v, lambda g: r_f + beta * g,
                             monotone=True, name="expected_value")


def qfactor_factorization(dp: DynamicProgram) -> PlanFactorization:
    """``W0 v = r + beta P v`` on ``F``; ``W1`` the identity."""
    r_f, p_f, beta = dp.meta["r_f"], dp.meta["p_f"], dp.discount
    return PlanFactorization(dp.n_pairs, lambda v: r_f + beta * (p_f @ v), lambda g: g,
                             monotone=True, name="q_factor")


def identity_factorization(dp: DynamicProgram, monotone: bool = True) -> PlanFactorization:
    """``W0 = I`` on states and ``W1 g = H(., ., g)``; then ``S == T``."""
    return PlanFactorization(dp.n_states, lambda v: v.copy(), dp.aggregate,
                             monotone=monotone, name="identity")


def single_state(reward: float = 1.0, discount: float = 0.5) -> DynamicProgram:
    """One state, one action: ``T v = r + beta v``."""
    mdp = FiniteMdp(np.array([[reward]]), np.ones((1, 1, 1)), discount)
    return build_finite(mdp, name="single_state")

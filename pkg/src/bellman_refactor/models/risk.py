"""Risk-sensitive preferences and the two-state non-monotone counterexample.

``H(x, a, v) = r(x, a) - (beta / gamma) log sum_x' exp(-gamma v(x')) P(x, a, x')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ..core import DynamicProgram, PlanFactorization


@dataclass(frozen=True, eq=False)
class RiskSensitiveModel:
    rewards: np.ndarray
    transitions: np.ndarray
    discount: float
    gamma: float
    feasible: Optional[np.ndarray] = None
    analytic: bool = False

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        p = np.asarray(self.transitions, dtype=float)
        n, m = r.shape
        if p.shape != (n, m, n):
            raise ValueError(f"transitions must have shape ({n}, {m}, {n})")
        mask = np.ones((n, m), bool) if self.feasible is None else np.asarray(self.feasible, bool)
        if np.any(p < 0) or np.any(np.abs(p[mask].sum(-1) - 1) > 1e-10):
            raise ValueError("transition rows must be probability vectors")
        if self.gamma == 0:
            raise ValueError("risk parameter must be nonzero")
        if not self.discount > 0 or (self.discount >= 1 and not self.analytic):
            raise ValueError("discount must lie in (0, 1) unless the model is analytic")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "feasible", mask)


def _risk_adjust(p_f, v, gamma):
    # -(1/gamma) log E exp(-gamma v), stabilised by logsumexp
    return -logsumexp(-gamma * v[None, :], b=p_f, axis=1) / gamma


def build_risk_sensitive(model: RiskSensitiveModel, name: str = "risk_sensitive"):
    """Return ``(dp, pf)`` with the monotone factorization ``W1 g = r + g``."""
    mask = model.feasible
    r_f = model.rewards[mask]
    p_f = model.transitions[mask]
    beta, gamma = model.discount, model.gamma

    def aggregator(v):
        return r_f + beta * _risk_adjust(p_f, v, gamma)

    policy_system = None
    if np.all(np.isclose(p_f.max(axis=1), 1.0, rtol=0, atol=1e-15)):
        # deterministic transitions: the certainty equivalent is linear in v
        def policy_system(sigma):
            x = np.arange(mask.shape[0])
            return model.rewards[x, sigma], beta * model.transitions[x, sigma]

    dp = DynamicProgram.from_mask(mask, aggregator, beta, name=name, analytic=model.analytic,
                                  policy_system=policy_system, reward_min=float(r_f.min()))
    dp.meta.update(r_f=r_f, p_f=p_f, model=model)
    pf = PlanFactorization(dp.n_pairs, lambda v: beta * _risk_adjust(p_f, v, gamma),
                           lambda g: r_f + g, monotone=gamma > 0, name="risk_expected_value")
    return dp, pf


def nonmonotone_factorization(dp: DynamicProgram) -> PlanFactorization:
    """``W0 v = E exp(-gamma v)`` and ``W1 g = r - (beta/gamma) log g``; neither is monotone."""
    r_f, p_f = dp.meta["r_f"], dp.meta["p_f"]
    gamma, beta = dp.meta["model"].gamma, dp.discount
    return PlanFactorization(dp.n_pairs, lambda v: p_f @ np.exp(-gamma * v),
                             lambda g: r_f - (beta / gamma) * np.log(g),
                             monotone=False, name="risk_exp_log")


# --------------------------------------------------------------------------

POLICIES = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])  # sigma_1..sigma_4, states x=1, x=2


@dataclass(frozen=True, eq=False)
class CounterexampleModel:
    """Two states ``x in {1, 2}`` (indices 0, 1), actions ``a in {0, 1}``.

    Reward ``x - a``; action 0 leads to ``x' = 1`` and action 1 to ``x' = 2``.
    The factorization acts on the action alone: ``W0 v(a) = exp(-gamma v(x'(a)))``
    and ``W1 g(x, a) = x - a - (beta/gamma) log g(a)``.
    """

    beta: float
    gamma: float
    dp: DynamicProgram
    pf: PlanFactorization
    policies: np.ndarray
    v_sigma: np.ndarray   # (4, 2): rows sigma_i, columns x
    g_sigma: np.ndarray   # (4, 2): rows sigma_i, columns a
    v_star: np.ndarray
    g_star: np.ndarray
    g_hat: np.ndarray
    meta: dict = field(default_factory=dict)


def build_counterexample(beta: float, gamma: float = 1.0) -> CounterexampleModel:
    if not beta > 0 or beta in (0.5, 1.0):
        raise ValueError(f"counterexample requires beta > 0 with beta not in {{0.5, 1}}, got {beta}")
    if not gamma > 0:
        raise ValueError("counterexample requires gamma > 0")
    b, c = beta, gamma
    rewards = np.array([[1.0, 0.0], [2.0, 1.0]])
    P = np.zeros((2, 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 1] = 1.0
    dp, _ = build_risk_sensitive(RiskSensitiveModel(rewards, P, b, c, analytic=True),
                                 name="counterexample")

    x_minus_a = rewards.ravel()
    pf = PlanFactorization(2, lambda v: np.exp(-c * v),
                           lambda g: x_minus_a - (b / c) * np.log(np.tile(g, 2)),
                           monotone=False, name="counterexample_exp_log",
                           reduced_labels=("a=0", "a=1"))

    v_sigma = np.array([
        [1 / (1 - b), (2 - b) / (1 - b)],
        [1 / (1 - b), 1 / (1 - b)],
        [b / (1 - b), 1 / (1 - b)],
        [2 * b / (1 - b ** 2), 2 / (1 - b ** 2)],
    ])
    # tabulated refactored values coincide entrywise with exp(-gamma v_sigma(x'(a)))
    g_sigma = np.exp(-c * v_sigma)
    v_star = v_sigma.max(axis=0)
    g_star = g_sigma.max(axis=0)
    return CounterexampleModel(b, c, dp, pf, POLICIES.copy(), v_sigma, g_sigma, v_star,
                               g_star, pf.W0(v_star))

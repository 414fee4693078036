"""Robust control with multiplier preferences.

Full state ``(s, eps)``; control ``u``. The control selects a post-decision
index ``k = post_state(s, eps, u)`` on the ``s`` grid, and next period
``s' = transition(s_grid[k], eps')`` (projected to the nearest grid point)
with ``eps'`` i.i.d. The aggregator is

``H = r(s, eps, u) - beta theta log E exp(-v(s', eps') / theta)``

and the refactored function lives on the ``s`` grid:
``W0 v(k) = -theta log E exp(-v(s', eps') / theta)``, ``W1 g = r + beta g(k)``.
When ``post_state`` returns the current ``s`` index this is the plain
``g(s)`` form.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from ..core import DynamicProgram, PlanFactorization


@dataclass(frozen=True, eq=False)
class RobustControlModel:
    s_grid: np.ndarray
    eps_grid: np.ndarray
    eps_weights: np.ndarray
    u_grid: np.ndarray
    reward: Callable          # r(s, eps, u) broadcast; -inf marks infeasible controls
    post_state: Callable      # (s, eps, u) -> value projected onto s_grid
    transition: Callable      # (k_value, eps_next) -> s' value projected onto s_grid
    theta: float
    discount: float

    def __post_init__(self):
        w = np.asarray(self.eps_weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-10:
            raise ValueError("shock weights must be a probability vector")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")


def _nearest(grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    i = np.clip(np.searchsorted(grid, x), 1, grid.size - 1)
    left = grid[i - 1]
    return np.where(np.abs(x - left) <= np.abs(grid[i] - x), i - 1, i)


def build_robust(model: RobustControlModel, name: str = "robust"):
    """Return ``(dp, pf)``; states ``(s, eps)`` row-major, actions index ``u_grid``."""
    s, e, u = (np.asarray(a, dtype=float) for a in (model.s_grid, model.eps_grid, model.u_grid))
    w = np.asarray(model.eps_weights, dtype=float)
    ns, ne, nu = s.size, e.size, u.size
    S, E, U = np.meshgrid(s, e, u, indexing="ij")
    r = np.broadcast_to(model.reward(S, E, U), S.shape).astype(float)
    feasible = np.isfinite(r).reshape(ns * ne, nu)
    if not feasible.any(axis=1).all():
        x = int(np.flatnonzero(~feasible.any(axis=1))[0])
        raise ValueError(f"state {divmod(x, ne)} has no feasible control")
    k_idx = _nearest(s, np.broadcast_to(model.post_state(S, E, U), S.shape))
    # next s index for each post-decision k and next shock, precomputed once
    s_next = _nearest(s, np.broadcast_to(model.transition(s[:, None], e[None, :]), (ns, ne)))
    next_state = s_next * ne + np.arange(ne)[None, :]            # (k, eps')
    theta, beta = model.theta, model.discount

    r_f = r.reshape(ns * ne, nu)[feasible]
    k_f = k_idx.reshape(ns * ne, nu)[feasible]

    def certainty_equivalent(v):
        # -theta log sum_e w(e) exp(-v(s'(k, e), e) / theta), for each k
        return -theta * logsumexp(-v[next_state] / theta, b=w[None, :], axis=1)

    def aggregator(v):
        # evaluated per feasible pair, without sharing across pairs with the same k
        vals = v[next_state[k_f]]                                 # (|F|, ne)
        return r_f - beta * theta * logsumexp(-vals / theta, b=w[None, :], axis=1)

    dp = DynamicProgram.from_mask(feasible, aggregator, beta, name=name,
                                  reward_min=float(r_f.min()), state_shape=(ns, ne))
    dp.meta.update(model=model, next_state=next_state, k_f=k_f, r_f=r_f, weights=w)
    pf = PlanFactorization(ns, certainty_equivalent, lambda g: r_f + beta * g[k_f],
                           monotone=True, name="robust_certainty_equivalent",
                           reduced_shape=(ns,))
    return dp, pf


def expected_value_limit(dp: DynamicProgram) -> PlanFactorization:
    """Risk-neutral counterpart on the same reduced domain: ``W0 v(k) = E v(s', eps')``."""
    nxt, w, k_f, r_f = (dp.meta[k] for k in ("next_state", "weights", "k_f", "r_f"))
    return PlanFactorization(nxt.shape[0], lambda v: v[nxt] @ w,
                             lambda g: r_f + dp.discount * g[k_f], monotone=True,
                             name="robust_expected_value")


def robust_savings(n_s: int = 20, n_eps: int = 5, theta: float = 2.0, discount: float = 0.9,
                   gross_return: float = 1.02, s_max: float = 4.0,
                   income_sd: float = 0.3) -> RobustControlModel:
    """Savings problem: hold ``s``, receive income ``1 + eps``, choose next assets ``k``.

    Consumption is ``s + 1 + eps - k``; reward ``log(c)``; ``s' = R k``.
    """
    s_grid = np.linspace(0.0, s_max, n_s)
    eps = np.linspace(-2 * income_sd, 2 * income_sd, n_eps)
    w = np.exp(-0.5 * (eps / income_sd) ** 2)
    w /= w.sum()

    def reward(s, e, k):
        c = s + 1.0 + e - k
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(c > 0, np.log(np.where(c > 0, c, 1.0)), -np.inf)

    return RobustControlModel(s_grid, eps, w, s_grid.copy(), reward,
                              post_state=lambda s, e, k: k,
                              transition=lambda k, e: np.minimum(gross_return * k + 0 * e, s_max),
                              theta=theta, discount=discount)

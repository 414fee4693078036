"""Operator algebra for dynamic programs over finite tabulated function spaces.

Three kinds of tables appear throughout:

* value functions ``v`` -- float vectors indexed by state,
* refactored functions ``g`` -- float vectors indexed by a model's reduced domain,
* state-action functions ``h`` -- float vectors indexed by the flattened set of
  feasible pairs ``F`` (state-major, actions ascending inside each state).

A plan factorization ``(W0, W1)`` splits the aggregator as ``H = W1 W0``.
The Bellman operator is ``T = M W1 W0`` and the refactored operator is
``S = W0 M W1``; everything below is built from those pieces.

All argmax operations break ties toward the lowest action index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

ValueFn = np.ndarray
RefactoredFn = np.ndarray
HFn = np.ndarray
Policy = np.ndarray

NEG_INF = -np.inf


class NumericalDomainError(ArithmeticError):
    """An operator produced NaN at a feasible state-action pair."""

    def __init__(self, state: int, action: int, where: str = "aggregator"):
        self.state = int(state)
        self.action = int(action)
        super().__init__(f"NaN from {where} at state {self.state}, action {self.action}")


class InfeasiblePolicyError(ValueError):
    """A policy selects an action outside the feasible set of some state."""

    def __init__(self, state: int, action: int):
        self.state = int(state)
        self.action = int(action)
        super().__init__(f"action {self.action} is not feasible at state {self.state}")


@dataclass(frozen=True, eq=False)
class DynamicProgram:
    """Finite dynamic program with a vectorised state-action aggregator.

    ``aggregator(v)`` returns ``H(x, a, v)`` for every feasible pair, in the
    order given by ``offsets``/``actions``: pairs of state ``x`` occupy
    ``offsets[x]:offsets[x+1]`` and hold strictly increasing action indices.

    ``policy_system(sigma)``, when provided, returns ``(r_sigma, A_sigma)`` with
    ``T_sigma v = r_sigma + A_sigma @ v``; solvers then evaluate policies by a
    direct linear solve.
    """

    n_states: int
    n_actions: int
    offsets: np.ndarray
    actions: np.ndarray
    aggregator: Callable[[ValueFn], HFn]
    discount: float
    name: str = "dp"
    analytic: bool = False
    allows_neg_inf: bool = False
    policy_system: Optional[Callable[[Policy], tuple]] = None
    reward_min: Optional[float] = None
    state_shape: Optional[tuple] = None
    action_shape: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "actions", actions)
        if offsets.shape != (self.n_states + 1,) or offsets[0] != 0:
            raise ValueError("offsets must have length n_states + 1 and start at 0")
        if offsets[-1] != actions.size:
            raise ValueError("offsets[-1] must equal the number of feasible pairs")
        counts = np.diff(offsets)
        if np.any(counts <= 0):
            empty = int(np.flatnonzero(counts <= 0)[0])
            raise ValueError(f"state {empty} has an empty feasible set")
        if actions.size and (actions.min() < 0 or actions.max() >= self.n_actions):
            raise ValueError("action index out of range")
        inner = np.ones(actions.size, dtype=bool)
        inner[offsets[:-1]] = False
        if np.any(np.diff(actions)[inner[1:]] <= 0):
            raise ValueError("actions must be strictly increasing within each state")

    @classmethod
    def from_mask(cls, mask: np.ndarray, aggregator, discount: float, **kw) -> "DynamicProgram":
        """Build from a boolean ``(n_states, n_actions)`` feasibility mask."""
        mask = np.asarray(mask, dtype=bool)
        n, m = mask.shape
        counts = mask.sum(axis=1)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        actions = np.nonzero(mask)[1]
        return cls(n, m, offsets, actions, aggregator, discount, **kw)

    @classmethod
    def from_lists(cls, feasible: Sequence[Sequence[int]], n_actions: int, aggregator,
                   discount: float, **kw) -> "DynamicProgram":
        mask = np.zeros((len(feasible), n_actions), dtype=bool)
        for x, acts in enumerate(feasible):
            mask[x, list(acts)] = True
        return cls.from_mask(mask, aggregator, discount, **kw)

    @property
    def n_pairs(self) -> int:
        return int(self.actions.size)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def pair_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states), self.counts)

    @cached_property
    def uniform_width(self) -> int:
        """Common feasible-set size, or 0 when sets differ in size."""
        c = self.counts
        return int(c[0]) if np.all(c == c[0]) else 0

    @cached_property
    def pair_table(self) -> np.ndarray:
        """``(n_states, n_actions)`` lookup of pair positions; -1 if infeasible."""
        table = np.full((self.n_states, self.n_actions), -1, dtype=np.int64)
        table[self.pair_state, self.actions] = np.arange(self.n_pairs)
        return table

    @cached_property
    def feasible_mask(self) -> np.ndarray:
        return self.pair_table >= 0

    def feasible(self, x: int) -> np.ndarray:
        return self.actions[self.offsets[x]:self.offsets[x + 1]]

    def pair_index(self, sigma: Policy) -> np.ndarray:
        """Positions in ``F`` of the pairs ``(x, sigma(x))``."""
        sigma = np.asarray(sigma, dtype=np.int64)
        if sigma.shape != (self.n_states,):
            raise ValueError(f"policy must have shape ({self.n_states},)")
        bad = (sigma < 0) | (sigma >= self.n_actions)
        if bad.any():
            x = int(np.flatnonzero(bad)[0])
            raise InfeasiblePolicyError(x, sigma[x])
        idx = self.pair_table[np.arange(self.n_states), sigma]
        if np.any(idx < 0):
            x = int(np.flatnonzero(idx < 0)[0])
            raise InfeasiblePolicyError(x, sigma[x])
        return idx

    def to_matrix(self, h: HFn, fill: float = np.nan) -> np.ndarray:
        """Scatter an ``h`` table to a dense ``(n_states, n_actions)`` array."""
        out = np.full((self.n_states, self.n_actions), fill)
        out[self.pair_state, self.actions] = h
        return out

    def from_matrix(self, a: np.ndarray) -> HFn:
        return np.asarray(a, dtype=float)[self.pair_state, self.actions]

    def H(self, x: int, a: int, v: ValueFn) -> float:
        """Scalar aggregator value; evaluates the full sweep, meant for tests."""
        k = self.pair_table[x, a]
        if k < 0:
            raise InfeasiblePolicyError(x, a)
        return float(self.aggregate(v)[k])

    def aggregate(self, v: ValueFn) -> HFn:
        h = np.asarray(self.aggregator(np.asarray(v, dtype=float)), dtype=float)
        if h.shape != (self.n_pairs,):
            raise ValueError(f"aggregator returned shape {h.shape}, expected ({self.n_pairs},)")
        _check_nan(self, h, "aggregator")
        return h

    def random_policy(self, rng: np.random.Generator) -> Policy:
        pick = self.offsets[:-1] + (rng.random(self.n_states) * self.counts).astype(np.int64)
        return self.actions[pick].copy()


@dataclass(frozen=True, eq=False)
class PlanFactorization:
    """A pair ``(W0, W1)`` with ``W1(W0(v)) == H(., ., v)`` on ``F``.

    ``w0`` maps a value function to a table on the reduced domain (size
    ``reduced_size``); ``w1`` maps such a table to a state-action table.
    """

    reduced_size: int
    w0: Callable[[ValueFn], RefactoredFn]
    w1: Callable[[RefactoredFn], HFn]
    monotone: bool
    name: str = "factorization"
    reduced_shape: Optional[tuple] = None
    reduced_labels: Optional[tuple] = None

    def W0(self, v: ValueFn) -> RefactoredFn:
        g = np.asarray(self.w0(np.asarray(v, dtype=float)), dtype=float)
        if g.shape != (self.reduced_size,):
            raise ValueError(f"W0 returned shape {g.shape}, expected ({self.reduced_size},)")
        return g

    def W1(self, g: RefactoredFn) -> HFn:
        return np.asarray(self.w1(np.asarray(g, dtype=float)), dtype=float)


def _check_nan(dp: DynamicProgram, h: HFn, where: str) -> None:
    nan = np.isnan(h)
    if nan.any():
        k = int(np.flatnonzero(nan)[0])
        raise NumericalDomainError(dp.pair_state[k], dp.actions[k], where)


def _maximize(dp: DynamicProgram, h: HFn) -> tuple[ValueFn, Policy]:
    w = dp.uniform_width
    if w:
        hm = h.reshape(dp.n_states, w)
        pos = hm.argmax(axis=1)
        v = hm[np.arange(dp.n_states), pos]
        return v, dp.actions.reshape(dp.n_states, w)[np.arange(dp.n_states), pos]
    starts = dp.offsets[:-1]
    v = np.maximum.reduceat(h, starts)
    hit = h == np.repeat(v, dp.counts)
    pos = np.where(hit, np.arange(dp.n_pairs), dp.n_pairs)
    first = np.minimum.reduceat(pos, starts)
    return v, dp.actions[first]


def apply_M(dp: DynamicProgram, h: HFn, return_argmax: bool = False):
    """``(M h)(x) = max_{a in Gamma(x)} h(x, a)``, optionally with its argmax."""
    h = np.asarray(h, dtype=float)
    if h.shape != (dp.n_pairs,):
        raise ValueError(f"h must have shape ({dp.n_pairs},)")
    _check_nan(dp, h, "M")
    v, sigma = _maximize(dp, h)
    return (v, sigma) if return_argmax else v


def apply_M_sigma(dp: DynamicProgram, h: HFn, sigma: Policy) -> ValueFn:
    """``(M_sigma h)(x) = h(x, sigma(x))``."""
    return np.asarray(h, dtype=float)[dp.pair_index(sigma)]


def bellman_T(dp: DynamicProgram, v: ValueFn, return_argmax: bool = False):
    """Bellman operator evaluated straight from the aggregator."""
    return apply_M(dp, dp.aggregate(v), return_argmax)


def refactored_S(dp: DynamicProgram, pf: PlanFactorization, g: RefactoredFn,
                 return_argmax: bool = False):
    """Refactored Bellman operator ``W0 M W1``."""
    h = pf.W1(g)
    _check_nan(dp, h, "W1")
    v, sigma = _maximize(dp, h)
    out = pf.W0(v)
    return (out, sigma) if return_argmax else out


def policy_T_sigma(dp: DynamicProgram, sigma: Policy, v: ValueFn) -> ValueFn:
    """``(T_sigma v)(x) = H(x, sigma(x), v)``."""
    idx = dp.pair_index(sigma)
    return dp.aggregate(v)[idx]


def policy_S_sigma(dp: DynamicProgram, pf: PlanFactorization, sigma: Policy,
                   g: RefactoredFn) -> RefactoredFn:
    """Refactored sigma-value operator ``W0 M_sigma W1``."""
    idx = dp.pair_index(sigma)
    h = pf.W1(g)
    _check_nan(dp, h, "W1")
    return pf.W0(h[idx])


def greedy_from_v(dp: DynamicProgram, v: ValueFn) -> Policy:
    return bellman_T(dp, v, return_argmax=True)[1]


def greedy_from_g(dp: DynamicProgram, pf: PlanFactorization, g: RefactoredFn) -> Policy:
    """Policy maximising ``(W1 g)(x, .)`` state by state."""
    return apply_M(dp, pf.W1(g), return_argmax=True)[1]


def lift_v_to_g(pf: PlanFactorization, v: ValueFn) -> RefactoredFn:
    return pf.W0(v)


def lower_g_to_v(dp: DynamicProgram, pf: PlanFactorization, g: RefactoredFn) -> ValueFn:
    return apply_M(dp, pf.W1(g))


def check_factorization(dp: DynamicProgram, pf: PlanFactorization,
                        rng: Optional[np.random.Generator] = None, n_samples: int = 20,
                        rtol: float = 1e-12, scale: float = 1.0,
                        sampler: Optional[Callable] = None) -> float:
    """Sweep ``W1 W0 v == H(., ., v)`` over random ``v``; return worst relative error.

    Raises ``AssertionError`` if any entry misses ``rtol``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(n_samples):
        v = sampler(rng) if sampler is not None else scale * rng.standard_normal(dp.n_states)
        direct = dp.aggregate(v)
        factored = pf.W1(pf.W0(v))
        finite = np.isfinite(direct)
        if not np.array_equal(finite, np.isfinite(factored)):
            raise AssertionError("W1 W0 v and H disagree on which entries are finite")
        d, f = direct[finite], factored[finite]
        err = np.abs(d - f) / np.maximum(1.0, np.abs(d))
        worst = max(worst, float(err.max(initial=0.0)))
    if worst > rtol:
        raise AssertionError(f"factorization {pf.name!r} invalid: relative error {worst:.3e}")
    return worst


def check_monotone(dp: DynamicProgram, pf: PlanFactorization,
                   rng: Optional[np.random.Generator] = None, n_pairs: int = 20,
                   scale: float = 1.0, atol: float = 1e-12,
                   sampler: Optional[Callable] = None) -> bool:
    """Test ``v <= v' => W0 v <= W0 v'`` and ``g <= g' => W1 g <= W1 g'`` on random pairs.

    Reduced-domain samples are drawn as ``W0 v`` so that every ``g`` lies in
    the image of ``W0`` (where ``W1`` is defined).
    """
    rng = np.random.default_rng(1) if rng is None else rng
    for _ in range(n_pairs):
        v = sampler(rng) if sampler is not None else scale * rng.standard_normal(dp.n_states)
        bump = scale * rng.random(dp.n_states)
        g, g2 = pf.W0(v), pf.W0(v + bump)
        if np.any(g > g2 + atol * np.maximum(1.0, np.abs(g))):
            return False
        h, h2 = pf.W1(g), pf.W1(np.maximum(g, g2))
        if np.any(h > h2 + atol * np.maximum(1.0, np.abs(h))):
            return False
    return True

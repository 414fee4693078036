"""Fixed-point solvers built on the operators in :mod:`bellman_refactor.core`."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import (DynamicProgram, PlanFactorization, Policy, RefactoredFn, ValueFn,
                   apply_M, bellman_T, greedy_from_g, greedy_from_v, policy_S_sigma,
                   policy_T_sigma, refactored_S)


@dataclass
class SolveConfig:
    """Stopping rule and optimistic-policy-iteration schedule.

    ``m`` is either a constant number of partial evaluation steps or a
    sequence ``m_0, m_1, ...``; the last entry repeats once the sequence runs out.
    """

    tol: float = 1e-4
    max_iter: int = 10_000
    m: Union[int, Sequence[int]] = 1
    keep_iterates: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        ms = [self.m] if isinstance(self.m, (int, np.integer)) else list(self.m)
        if not ms or any(int(k) < 1 for k in ms):
            raise ValueError("every m_k must be a positive integer")

    def m_at(self, k: int) -> int:
        if isinstance(self.m, (int, np.integer)):
            return int(self.m)
        seq = list(self.m)
        return int(seq[min(k, len(seq) - 1)])


@dataclass
class SolveReport:
    iterations: int = 0
    final_gap: float = math.inf
    converged: bool = False
    wall_time: float = 0.0
    trace: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    policies: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "final_gap": self.final_gap,
                "converged": self.converged, "wall_time": self.wall_time,
                "trace": list(self.trace)}


class PolicySpaceTooLarge(ValueError):
    def __init__(self, size: int, limit: int):
        self.size = size
        super().__init__(f"policy space has {size} policies, limit is {limit}")


def _check_discount(dp: DynamicProgram) -> None:
    if dp.discount >= 1 and not dp.analytic:
        raise ValueError(f"discount {dp.discount} >= 1 is only allowed for analytic models")


def _sup(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b), initial=0.0))


def _iterate(step: Callable, x0: np.ndarray, cfg: SolveConfig) -> tuple[np.ndarray, SolveReport]:
    report = SolveReport()
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    if cfg.keep_iterates:
        report.iterates.append(x.copy())
    for k in range(cfg.max_iter):
        x_new = step(x)
        gap = _sup(x_new, x)
        x = x_new
        report.trace.append(gap)
        report.iterations = k + 1
        report.final_gap = gap
        if cfg.keep_iterates:
            report.iterates.append(x.copy())
        if gap < cfg.tol:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - t0
    return x, report


def vfi(dp: DynamicProgram, v0: ValueFn, cfg: Optional[SolveConfig] = None):
    """Value function iteration: iterate ``T`` until successive iterates are within ``tol``."""
    cfg = cfg or SolveConfig()
    _check_discount(dp)
    t0 = time.perf_counter()
    v, report = _iterate(lambda v: bellman_T(dp, v), v0, cfg)
    sigma = greedy_from_v(dp, v)
    report.wall_time = time.perf_counter() - t0
    return v, sigma, report


def rvfi(dp: DynamicProgram, pf: PlanFactorization, g0: RefactoredFn,
         cfg: Optional[SolveConfig] = None):
    """Refactored value function iteration: iterate ``S`` on the reduced domain."""
    cfg = cfg or SolveConfig()
    _check_discount(dp)
    t0 = time.perf_counter()
    g, report = _iterate(lambda g: refactored_S(dp, pf, g), g0, cfg)
    sigma = greedy_from_g(dp, pf, g)
    report.wall_time = time.perf_counter() - t0
    return g, sigma, report


def _opi_loop(x0, greedy, evaluate, cfg: SolveConfig):
    report = SolveReport()
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float)
    if cfg.keep_iterates:
        report.iterates.append(x.copy())
    for k in range(cfg.max_iter):
        sigma = greedy(x)
        report.policies.append(sigma)
        x_new = x
        for _ in range(cfg.m_at(k)):
            x_new = evaluate(sigma, x_new)
        gap = _sup(x_new, x)
        x = x_new
        report.trace.append(gap)
        report.iterations = k + 1
        report.final_gap = gap
        if cfg.keep_iterates:
            report.iterates.append(x.copy())
        if gap < cfg.tol:
            report.converged = True
            break
    sigma = greedy(x)
    report.wall_time = time.perf_counter() - t0
    return x, sigma, report


def opi(dp: DynamicProgram, v0: ValueFn, cfg: Optional[SolveConfig] = None):
    """Optimistic policy iteration: greedy step, then ``m_k`` applications of ``T_sigma``.

    ``report.policies`` holds the greedy policy used at each outer step.
    """
    cfg = cfg or SolveConfig()
    _check_discount(dp)
    return _opi_loop(v0, lambda v: greedy_from_v(dp, v),
                     lambda s, v: policy_T_sigma(dp, s, v), cfg)


def refactored_opi(dp: DynamicProgram, pf: PlanFactorization, g0: RefactoredFn,
                   cfg: Optional[SolveConfig] = None):
    """Optimistic policy iteration on the reduced domain with ``S_sigma``."""
    cfg = cfg or SolveConfig()
    _check_discount(dp)
    return _opi_loop(g0, lambda g: greedy_from_g(dp, pf, g),
                     lambda s, g: policy_S_sigma(dp, pf, s, g), cfg)


def policy_value(dp: DynamicProgram, sigma: Policy, cfg: Optional[SolveConfig] = None,
                 v0: Optional[ValueFn] = None) -> ValueFn:
    """Fixed point of ``T_sigma``.

    Uses a linear solve when the model exposes ``policy_system``; falls back to
    iteration when the system is singular or unavailable.
    """
    cfg = cfg or SolveConfig()
    sigma = np.asarray(sigma, dtype=np.int64)
    dp.pair_index(sigma)
    if dp.policy_system is not None:
        r_sigma, A_sigma = dp.policy_system(sigma)
        lhs = np.eye(dp.n_states) - A_sigma
        if np.linalg.cond(lhs) < 1e12:
            return np.linalg.solve(lhs, r_sigma)
    _check_discount(dp)
    start = np.zeros(dp.n_states) if v0 is None else v0
    v, report = _iterate(lambda v: policy_T_sigma(dp, sigma, v), start, cfg)
    if not report.converged:
        raise RuntimeError(f"policy evaluation did not converge (gap {report.final_gap:.3e})")
    return v


def refactored_policy_value(dp: DynamicProgram, pf: PlanFactorization, sigma: Policy,
                            cfg: Optional[SolveConfig] = None,
                            g0: Optional[RefactoredFn] = None) -> RefactoredFn:
    """Fixed point of ``S_sigma`` by successive approximation on the reduced domain."""
    cfg = cfg or SolveConfig()
    _check_discount(dp)
    sigma = np.asarray(sigma, dtype=np.int64)
    start = pf.W0(np.zeros(dp.n_states)) if g0 is None else g0
    g, report = _iterate(lambda g: policy_S_sigma(dp, pf, sigma, g), start, cfg)
    if not report.converged:
        raise RuntimeError(f"refactored policy evaluation did not converge "
                           f"(gap {report.final_gap:.3e})")
    return g


def policy_space_size(dp: DynamicProgram) -> int:
    return math.prod(int(c) for c in dp.counts)


def enumerate_policies(dp: DynamicProgram, limit: int = 10**6):
    size = policy_space_size(dp)
    if size > limit:
        raise PolicySpaceTooLarge(size, limit)
    sets = [dp.feasible(x) for x in range(dp.n_states)]
    for combo in itertools.product(*sets):
        yield np.array(combo, dtype=np.int64)


def brute_force_oracle(dp: DynamicProgram, pf: Optional[PlanFactorization] = None,
                       cfg: Optional[SolveConfig] = None, limit: int = 10**6):
    """Pointwise suprema of ``v_sigma`` and ``g_sigma`` over every feasible policy.

    Returns ``(v_star, g_star)``; ``g_star`` is ``None`` without a factorization.
    """
    cfg = cfg or SolveConfig(tol=1e-12, max_iter=100_000)
    v_star = np.full(dp.n_states, -np.inf)
    g_star = None if pf is None else np.full(pf.reduced_size, -np.inf)
    for sigma in enumerate_policies(dp, limit):
        v_star = np.maximum(v_star, policy_value(dp, sigma, cfg))
        if pf is not None:
            g_star = np.maximum(g_star, refactored_policy_value(dp, pf, sigma, cfg))
    return v_star, g_star


def greedy_policies(dp: DynamicProgram, h: np.ndarray, atol: float = 1e-9, limit: int = 10**6):
    """Every policy attaining ``max_a h(x, a)`` at all states, up to ``atol``."""
    best = apply_M(dp, h)
    sets = []
    for x in range(dp.n_states):
        lo, hi = dp.offsets[x], dp.offsets[x + 1]
        sets.append(dp.actions[lo:hi][h[lo:hi] >= best[x] - atol])
    if math.prod(len(s) for s in sets) > limit:
        raise PolicySpaceTooLarge(math.prod(len(s) for s in sets), limit)
    return [np.array(c, dtype=np.int64) for c in itertools.product(*sets)]


def certified_start(dp: DynamicProgram, pf: Optional[PlanFactorization] = None):
    """Constant ``r_min / (1 - beta)`` start (lifted through ``W0`` if ``pf`` given).

    For additive models ``v0 <= T v0`` at this start, and monotone ``W0`` carries
    the inequality to ``g0 <= S g0``. Returns ``None`` if the model has no
    reward floor.
    """
    if dp.reward_min is None or dp.discount >= 1:
        return None
    v0 = np.full(dp.n_states, dp.reward_min / (1.0 - dp.discount))
    return v0 if pf is None else pf.W0(v0)


def empirical_contraction_modulus(op: Callable[[np.ndarray], np.ndarray],
                                  domain_sampler: Callable[[np.random.Generator], np.ndarray],
                                  n_pairs: int, rng: Optional[np.random.Generator] = None) -> float:
    """Largest observed ``|op(g) - op(g')|_inf / |g - g'|_inf`` over sampled pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(n_pairs):
        g, g2 = domain_sampler(rng), domain_sampler(rng)
        denom = _sup(g, g2)
        if denom == 0.0:
            continue
        worst = max(worst, _sup(op(g), op(g2)) / denom)
    return worst

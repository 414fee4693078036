"""Optimal stopping: action 0 continues, action 1 stops.

``H(x, a, v) = a r(x) + (1 - a) [c(x) + beta sum_x' v(x') P(x, x')]``.

With a split ``x = (y, z)`` where ``P(x, .)`` depends on ``z`` only, the
continuation-value factorization lives on the z grid alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.stats import norm

from ..core import DynamicProgram, PlanFactorization
from ..numerics import ContinuousStoppingModel, Grid1D, tauchen


@dataclass(frozen=True, eq=False)
class StoppingModel:
    """Finite-grid stopping model.

    Give either a dense ``transition`` (n, n), or the split form
    ``z_of_state`` (n,) plus ``z_rows`` (K, n) with ``P(x, .) = z_rows[z_of_state[x]]``.
    Giving both checks that the dense rows agree with the split.
    """

    stop_reward: np.ndarray
    flow: np.ndarray
    discount: float
    transition: Optional[np.ndarray] = None
    z_of_state: Optional[np.ndarray] = None
    z_rows: Optional[np.ndarray] = None
    state_shape: Optional[tuple] = None

    def __post_init__(self):
        r = np.ascontiguousarray(self.stop_reward, dtype=float)
        c = np.ascontiguousarray(self.flow, dtype=float)
        n = r.size
        if c.shape != r.shape:
            raise ValueError("stop_reward and flow must have the same shape")
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        object.__setattr__(self, "stop_reward", r)
        object.__setattr__(self, "flow", c)
        P = None if self.transition is None else np.ascontiguousarray(self.transition, dtype=float)
        if P is not None:
            if P.shape != (n, n):
                raise ValueError(f"transition must have shape ({n}, {n})")
            _check_rows(P)
            object.__setattr__(self, "transition", P)
        if self.z_of_state is None:
            if P is None:
                raise ValueError("need a dense transition or a (y, z) split")
            if self.z_rows is not None:
                raise ValueError("z_rows given without z_of_state")
            return
        zs = np.asarray(self.z_of_state, dtype=np.int64)
        if zs.shape != (n,):
            raise ValueError("z_of_state must have one entry per state")
        K = int(zs.max()) + 1
        if self.z_rows is None:
            if P is None:
                raise ValueError("split declared without z_rows or a dense transition")
            rep = np.array([np.flatnonzero(zs == k)[0] for k in range(K)])
            rows = P[rep]
        else:
            rows = np.ascontiguousarray(self.z_rows, dtype=float)
            if rows.shape != (K, n):
                raise ValueError(f"z_rows must have shape ({K}, {n})")
            _check_rows(rows)
        if P is not None and not np.allclose(P, rows[zs], rtol=0, atol=1e-12):
            raise ValueError("inconsistent split: P(x, .) differs between states sharing z")
        object.__setattr__(self, "z_of_state", zs)
        object.__setattr__(self, "z_rows", rows)

    @property
    def n_states(self) -> int:
        return self.stop_reward.size

    @property
    def split(self) -> bool:
        return self.z_of_state is not None


def _check_rows(P):
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("transition rows must be probability vectors")


@njit(cache=True, fastmath=True)
def _row_kernel(rows, z_of_state, v, out):
    # (P v)(x) = rows[z(x)] . v, evaluated for every x without reuse across x
    n = v.shape[0]
    for x in range(out.shape[0]):
        row = rows[z_of_state[x]]
        acc = 0.0
        for k in range(n):
            acc += row[k] * v[k]
        out[x] = acc
    return out


def build_stopping(model: StoppingModel, name: str = "stopping"):
    """Return ``(dp, pf)`` for a stopping model with the continuation-value factorization."""
    r, c, beta, n = model.stop_reward, model.flow, model.discount, model.n_states

    if model.split:
        rows, zs = model.z_rows, model.z_of_state

        def expect(v):
            return _row_kernel(rows, zs, np.ascontiguousarray(v), np.empty(n))
    else:
        P = model.transition

        def expect(v):
            return P @ v

    def aggregator(v):
        return np.column_stack([c + beta * expect(v), r]).ravel()

    policy_system = None
    if n <= 2000:
        P_dense = model.transition if model.transition is not None else model.z_rows[model.z_of_state]

        def policy_system(sigma):
            cont = sigma == 0
            return np.where(cont, c, r), beta * cont[:, None] * P_dense

    mask = np.ones((n, 2), dtype=bool)
    dp = DynamicProgram.from_mask(mask, aggregator, beta, name=name,
                                  policy_system=policy_system,
                                  reward_min=float(min(r.min(), c.min())),
                                  state_shape=model.state_shape)
    dp.meta["model"] = model

    if model.split:
        rows, zs = model.z_rows, model.z_of_state
        pf = PlanFactorization(rows.shape[0], lambda v: rows @ v,
                               lambda g: np.column_stack([c + beta * g[zs], r]).ravel(),
                               monotone=True, name="continuation_split")
    else:
        P = model.transition
        pf = PlanFactorization(n, lambda v: P @ v,
                               lambda g: np.column_stack([c + beta * g, r]).ravel(),
                               monotone=True, name="continuation")
    return dp, pf


def _normal_cells(grid: np.ndarray, mean: np.ndarray, sd: float) -> np.ndarray:
    """Row-stochastic weights of N(mean, sd^2) on the cells around ``grid``."""
    edges = np.concatenate([[-np.inf], (grid[1:] + grid[:-1]) / 2, [np.inf]])
    cdf = norm.cdf((edges[None, :] - np.asarray(mean)[:, None]) / sd)
    return np.diff(cdf, axis=1)


def asset_sale(L: int, K: int, discount: float = 0.9, rho: float = 0.9,
               sigma_z: float = 0.1, sigma_y: float = 0.3, flow: float = 0.0,
               y_bounds: tuple = (-2.0, 2.0)) -> StoppingModel:
    """Sell-or-wait problem on a finite grid with state ``(y, z)``.

    ``z`` is a Tauchen-discretised AR(1); given ``z'`` the offer ``y'`` is
    ``N(z', sigma_y^2)`` binned onto ``L`` equidistant points. Selling pays
    ``y``, waiting pays ``flow``. States are ordered ``(y, z)`` row-major.
    """
    zgrid, Pz = tauchen(rho, sigma_z, K)
    ygrid = np.linspace(*y_bounds, L)
    Wy = _normal_cells(ygrid, zgrid.points, sigma_y)        # (K, L): y' | z'
    rows = (Pz[:, None, :] * Wy.T[None, :, :]).reshape(K, L * K)
    yy, zz = np.meshgrid(ygrid, zgrid.points, indexing="ij")
    z_of_state = np.tile(np.arange(K), L)
    return StoppingModel(yy.ravel(), np.full(L * K, float(flow)), discount,
                         z_of_state=z_of_state, z_rows=rows, state_shape=(L, K))


def job_search(n_w: int, n_eta: int, K: int, discount: float = 0.95, rho: float = 0.8,
               sigma_s: float = 0.2, sigma_w: float = 0.3, sigma_eta: float = 0.2,
               eta_level: float = 0.5) -> StoppingModel:
    """Job search: accept wage ``w`` forever or take compensation ``eta`` and wait.

    ``s`` is the Markov state; ``log w' ~ N(s', sigma_w^2)`` and
    ``log eta' ~ N(log eta_level + 0.5 s', sigma_eta^2)`` given ``s'``. The
    state ``(w, eta, s)`` splits as ``y = (w, eta)`` and ``z = s``.
    """
    sgrid, Ps = tauchen(rho, sigma_s, K)
    s = sgrid.points
    sd_s = sigma_s / np.sqrt(1 - rho ** 2)
    lw = np.linspace(-3 * (sd_s + sigma_w), 3 * (sd_s + sigma_w), n_w)
    le = np.log(eta_level) + np.linspace(-3 * (0.5 * sd_s + sigma_eta), 3 * (0.5 * sd_s + sigma_eta), n_eta)
    Ww = _normal_cells(lw, s, sigma_w)                                  # (K, n_w)
    We = _normal_cells(le, np.log(eta_level) + 0.5 * s, sigma_eta)     # (K, n_eta)
    # rows[s, (w', eta', s')] = Ps[s, s'] Ww[s', w'] We[s', eta']
    rows = (Ps[:, None, None, :] * Ww.T[None, :, None, :] * We.T[None, None, :, :])
    rows = rows.reshape(K, n_w * n_eta * K)
    W, E, _ = np.meshgrid(np.exp(lw), np.exp(le), s, indexing="ij")
    z_of_state = np.tile(np.arange(K), n_w * n_eta)
    return StoppingModel((W / (1 - discount)).ravel(), E.ravel(), discount,
                         z_of_state=z_of_state, z_rows=rows, state_shape=(n_w, n_eta, K))


def continuous_asset_sale(L: int, K: int, discount: float = 0.9, rho: float = 0.9,
                          sigma_z: float = 0.1, sigma_y: float = 0.3, flow: float = 0.0,
                          y_bounds: tuple = (-2.0, 2.0), z_width: float = 3.0
                          ) -> ContinuousStoppingModel:
    """Continuous-state version of :func:`asset_sale` for the fitted operators.

    ``z' = rho z + sigma_z U1`` and ``y' = z' + sigma_y U2`` with standard
    normal ``U``.
    """
    sd = sigma_z / np.sqrt(1 - rho ** 2)
    zgrid = Grid1D.equidistant(-z_width * sd, z_width * sd, K)
    ygrid = Grid1D.equidistant(*y_bounds, L)

    def f2(z, U):
        return rho * z + sigma_z * U[:, 0]

    def f1(z, U):
        return rho * z + sigma_z * U[:, 0] + sigma_y * U[:, 1]

    def stop_reward(y, z):
        return y + 0.0 * z

    def flow_fn(y, z):
        return np.full(np.broadcast(y, z).shape, float(flow))

    def sampler(rng, n):
        return rng.standard_normal((n, 2))

    return ContinuousStoppingModel(ygrid, zgrid, stop_reward, flow_fn, f1, f2, sampler,
                                   discount, meta=dict(rho=rho, sigma_z=sigma_z, sigma_y=sigma_y))

"""Discretisation, interpolation and Monte Carlo fitted operators.

Interpolation is piecewise linear, located by binary search, and clamps
queries outside the grid to the boundary values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numba import njit
from scipy.stats import norm


@dataclass(frozen=True, eq=False)
class Grid1D:
    points: np.ndarray
    kind: str = "equidistant"

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a grid needs at least 2 points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    @classmethod
    def equidistant(cls, lo: float, hi: float, n: int) -> "Grid1D":
        return cls(np.linspace(lo, hi, n), "equidistant")


def tauchen(rho: float, delta: float, n: int, m: float = 3.0):
    """Tauchen discretisation of ``x' = rho x + eps``, ``eps ~ N(0, delta^2)``.

    Returns ``(grid, P)`` where the grid spans ``+-m`` stationary standard
    deviations and ``P[i, j]`` is the normal-CDF mass of cell ``j`` given ``x_i``.
    """
    if not abs(rho) < 1:
        raise ValueError(f"AR(1) persistence {rho} is not stationary")
    if not delta > 0:
        raise ValueError("innovation std must be positive")
    if n < 2:
        raise ValueError("need at least 2 grid points")
    sd = delta / np.sqrt(1.0 - rho ** 2)
    x = np.linspace(-m * sd, m * sd, n)
    half = (x[1] - x[0]) / 2
    mu = rho * x[:, None]
    upper = norm.cdf((x[None, :] + half - mu) / delta)
    lower = norm.cdf((x[None, :] - half - mu) / delta)
    P = upper - lower
    P[:, 0] = upper[:, 0]
    P[:, -1] = 1.0 - lower[:, -1]
    return Grid1D(x, "tauchen"), P


@njit(cache=True)
def _bracket(grid, x):
    # largest i with grid[i] <= x, clipped to [0, n-2]
    n = grid.shape[0]
    if x <= grid[0]:
        return 0
    if x >= grid[n - 2]:
        return n - 2
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if grid[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _interp1(grid, values, x):
    n = grid.shape[0]
    if x <= grid[0]:
        return values[0]
    if x >= grid[n - 1]:
        return values[n - 1]
    i = _bracket(grid, x)
    t = (x - grid[i]) / (grid[i + 1] - grid[i])
    return (1.0 - t) * values[i] + t * values[i + 1]


@njit(cache=True)
def _interp2(ygrid, zgrid, values, y, z):
    # values has shape (len(ygrid), len(zgrid)); clamps in both coordinates
    ny, nz = ygrid.shape[0], zgrid.shape[0]
    if y <= ygrid[0]:
        y = ygrid[0]
    elif y >= ygrid[ny - 1]:
        y = ygrid[ny - 1]
    if z <= zgrid[0]:
        z = zgrid[0]
    elif z >= zgrid[nz - 1]:
        z = zgrid[nz - 1]
    i = _bracket(ygrid, y)
    j = _bracket(zgrid, z)
    s = (y - ygrid[i]) / (ygrid[i + 1] - ygrid[i])
    t = (z - zgrid[j]) / (zgrid[j + 1] - zgrid[j])
    lo = (1.0 - t) * values[i, j] + t * values[i, j + 1]
    hi = (1.0 - t) * values[i + 1, j] + t * values[i + 1, j + 1]
    return (1.0 - s) * lo + s * hi


@njit(cache=True)
def _interp_many(grid, values, xs, out):
    for k in range(xs.shape[0]):
        out[k] = _interp1(grid, values, xs[k])
    return out


def interp_eval(grid: Grid1D, values, x: float) -> float:
    """Piecewise-linear interpolant of ``values`` on ``grid`` evaluated at ``x``."""
    values = np.ascontiguousarray(values, dtype=float)
    if values.shape != grid.points.shape:
        raise ValueError("values must match the grid length")
    x = float(x)
    if np.isnan(x):
        raise ArithmeticError("NaN interpolation query")
    return float(_interp1(grid.points, values, x))


def interp_many(grid: Grid1D, values, xs) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=float)
    xs = np.ascontiguousarray(xs, dtype=float).ravel()
    if values.shape != grid.points.shape:
        raise ValueError("values must match the grid length")
    if np.isnan(xs).any():
        raise ArithmeticError("NaN interpolation query")
    return _interp_many(grid.points, values, xs, np.empty(xs.size))


def interp2_eval(ygrid: Grid1D, zgrid: Grid1D, values, y: float, z: float) -> float:
    values = np.ascontiguousarray(values, dtype=float)
    if values.shape != (len(ygrid), len(zgrid)):
        raise ValueError("values must have shape (len(ygrid), len(zgrid))")
    if np.isnan(y) or np.isnan(z):
        raise ArithmeticError("NaN interpolation query")
    return float(_interp2(ygrid.points, zgrid.points, values, float(y), float(z)))


# --------------------------------------------------------------------------
# Monte Carlo fitted operators for stopping problems with x = (y, z)


@dataclass(frozen=True, eq=False)
class ShockDraws:
    samples: np.ndarray
    seed: int

    @classmethod
    def draw(cls, sampler: Callable[[np.random.Generator, int], np.ndarray], n: int,
             seed: int = 0) -> "ShockDraws":
        if n < 1:
            raise ValueError("need at least one draw")
        rng = np.random.default_rng(seed)
        return cls(np.asarray(sampler(rng, n), dtype=float), seed)

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class ContinuousStoppingModel:
    """Stopping problem on a continuous state ``(y, z)``.

    Callables are vectorised: ``f1(z, U)`` and ``f2(z, U)`` take a z array of
    shape ``(K, 1)`` and draws of shape ``(N, d)`` broadcast to ``(K, N)``;
    ``stop_reward(y, z)`` and ``flow(y, z)`` broadcast elementwise.
    """

    y_grid: Grid1D
    z_grid: Grid1D
    stop_reward: Callable
    flow: Callable
    f1: Callable
    f2: Callable
    shock_sampler: Callable
    discount: float
    meta: dict = field(default_factory=dict)


@njit(cache=True)
def _mc_S(zgrid, R, C, Zn, g, beta, out):
    K, N = R.shape
    for j in range(K):
        acc = 0.0
        for i in range(N):
            cont = C[j, i] + beta * _interp1(zgrid, g, Zn[j, i])
            stop = R[j, i]
            acc += stop if stop > cont else cont
        out[j] = acc / N
    return out


@njit(cache=True)
def _mc_T(ygrid, zgrid, r, c, Yn, Zn, V, beta, out):
    L, K = r.shape
    N = Yn.shape[1]
    for l in range(L):
        for j in range(K):
            acc = 0.0
            for i in range(N):
                acc += _interp2(ygrid, zgrid, V, Yn[j, i], Zn[j, i])
            cont = c[l, j] + beta * acc / N
            out[l, j] = r[l, j] if r[l, j] > cont else cont
    return out


class MonteCarloStopping:
    """Common-random-number tables for the fitted operators of one model and draw set."""

    def __init__(self, model: ContinuousStoppingModel, draws: ShockDraws):
        self.model = model
        self.draws = draws
        zc = model.z_grid.points[:, None]
        U = draws.samples
        self.Yn = np.ascontiguousarray(np.broadcast_to(model.f1(zc, U), (zc.shape[0], len(draws))), dtype=float)
        self.Zn = np.ascontiguousarray(np.broadcast_to(model.f2(zc, U), self.Yn.shape), dtype=float)
        if np.isnan(self.Yn).any() or np.isnan(self.Zn).any():
            raise ArithmeticError("transition maps produced NaN")
        self.R = np.ascontiguousarray(np.broadcast_to(model.stop_reward(self.Yn, self.Zn), self.Yn.shape), dtype=float)
        self.C = np.ascontiguousarray(np.broadcast_to(model.flow(self.Yn, self.Zn), self.Yn.shape), dtype=float)
        yy, zz = np.meshgrid(model.y_grid.points, model.z_grid.points, indexing="ij")
        self.r_grid = np.ascontiguousarray(np.broadcast_to(model.stop_reward(yy, zz), yy.shape), dtype=float)
        self.c_grid = np.ascontiguousarray(np.broadcast_to(model.flow(yy, zz), yy.shape), dtype=float)

    @property
    def shape(self) -> tuple:
        return len(self.model.y_grid), len(self.model.z_grid)

    def S(self, g: np.ndarray) -> np.ndarray:
        g = np.ascontiguousarray(g, dtype=float)
        return _mc_S(self.model.z_grid.points, self.R, self.C, self.Zn, g,
                     self.model.discount, np.empty(g.size))

    def T(self, v: np.ndarray) -> np.ndarray:
        V = np.ascontiguousarray(np.asarray(v, dtype=float).reshape(self.shape))
        out = _mc_T(self.model.y_grid.points, self.model.z_grid.points, self.r_grid,
                    self.c_grid, self.Yn, self.Zn, V, self.model.discount,
                    np.empty(self.shape))
        return out.ravel()

    def lower(self, g: np.ndarray) -> np.ndarray:
        """Value on the ``(y, z)`` grid implied by a continuation table ``g(z)``."""
        cont = self.c_grid + self.model.discount * np.asarray(g)[None, :]
        return np.maximum(self.r_grid, cont).ravel()


@lru_cache(maxsize=8)
def prepare_mc(model: ContinuousStoppingModel, draws: ShockDraws) -> MonteCarloStopping:
    return MonteCarloStopping(model, draws)


def mc_refactored_operator(model: ContinuousStoppingModel, draws: ShockDraws,
                           g: np.ndarray) -> np.ndarray:
    """Fitted refactored operator on the z grid."""
    return prepare_mc(model, draws).S(g)


def mc_standard_operator(model: ContinuousStoppingModel, draws: ShockDraws,
                         v: np.ndarray) -> np.ndarray:
    """Fitted Bellman operator on the ``(y, z)`` grid, ``v`` flattened row-major."""
    return prepare_mc(model, draws).T(v)

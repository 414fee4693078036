"""Household bankruptcy model with repayment status, debt, income and expense shocks.

State ``(i, d, z, eta, kappa)`` with status ``i`` in ``R=0, B=1, E=2``; action
``(i', d')`` encoded as ``i' * n_d + d'_index``. Consumption follows from the
budget rules:

* ``R``: ``c = z eta + q d' - d - kappa``, ``i'`` in ``{R, B}``, any ``d'`` with ``c > 0``;
* ``B``: ``c = (1 - gamma_w) z eta``, ``d' = 0``, ``i'`` in ``{R, E}``;
* ``E``: ``c = (1 - gamma_w) z eta``, ``d' = (kappa - gamma_w z eta)(1 + r_bar)``
  clamped to ``[0, d_max]`` and projected to the nearest debt grid point,
  ``i'`` in ``{R, B}``.

An ``R`` state whose budget cannot be met at any ``d'`` either raises or, with
``infeasible_repayment="default"``, falls back to the ``E`` rule applied to the
total obligation ``d + kappa``.

The expectation over ``(z', eta', kappa')`` depends on ``z`` only, so the
expected value ``g(i', d', z)`` has three coordinates against five for ``v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
from numba import njit

from ..core import DynamicProgram, PlanFactorization
from ..numerics import tauchen

R, B, E = 0, 1, 2


@dataclass(frozen=True)
class BankruptcyModel:
    discount: float = 0.94
    gamma_w: float = 0.355
    r_bar: float = 0.2
    sigma_u: float = 2.0
    eta_var: float = 0.043     # variance of log eta
    rho: float = 0.99
    delta2: float = 0.007      # innovation variance of log z
    r_f: float = 0.05          # bond price q = 1 / (1 + r_f)
    d_max: float = 10.0
    kappa_max: float = 2.0
    tauchen_m: float = 3.0
    infeasible_repayment: str = "default"

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if not 0 <= self.gamma_w < 1:
            raise ValueError("garnishment rate must lie in [0, 1)")
        if self.sigma_u <= 0 or self.eta_var <= 0 or self.delta2 <= 0:
            raise ValueError("sigma_u, eta_var and delta2 must be positive")
        if self.infeasible_repayment not in ("default", "raise"):
            raise ValueError("infeasible_repayment must be 'default' or 'raise'")

    @property
    def q(self) -> float:
        return 1.0 / (1.0 + self.r_f)

    @classmethod
    def from_dict(cls, params: dict) -> "BankruptcyModel":
        known = {f.name for f in fields(cls)}
        unknown = set(params) - known
        if unknown:
            raise ValueError(f"unknown bankruptcy parameters: {sorted(unknown)}")
        return cls(**params)


def utility(c: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 1.0:
        return np.log(c)
    return c ** (1.0 - sigma) / (1.0 - sigma)


@njit(cache=True, fastmath=True)
def _aggregate(u, a_f, z_f, kernel, V, beta, out):
    # H(x, a, v) = u + beta * sum_q K[z, q] V[a, q], one full sum per feasible pair
    Q = kernel.shape[1]
    for f in range(u.shape[0]):
        row = kernel[z_f[f]]
        vals = V[a_f[f]]
        acc = 0.0
        for k in range(Q):
            acc += row[k] * vals[k]
        out[f] = u[f] + beta * acc
    return out


def _nearest_index(grid, x):
    x = np.clip(x, grid[0], grid[-1])
    return np.abs(x[..., None] - grid).argmin(axis=-1)


@dataclass(frozen=True, eq=False)
class BankruptcyGrids:
    d: np.ndarray
    z: np.ndarray
    eta: np.ndarray
    kappa: np.ndarray
    Pz: np.ndarray
    w_eta: np.ndarray
    w_kappa: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple:
        return self.d.size, self.z.size, self.eta.size, self.kappa.size


def make_grids(model: BankruptcyModel, grid_sizes) -> BankruptcyGrids:
    n_d, n_z, n_eta, n_kappa = (int(n) for n in grid_sizes)
    if min(n_d, n_z, n_eta, n_kappa) < 2:
        raise ValueError("every grid needs at least 2 points")
    log_z, Pz = tauchen(model.rho, np.sqrt(model.delta2), n_z, model.tauchen_m)
    log_eta, Pe = tauchen(0.0, np.sqrt(model.eta_var), n_eta, model.tauchen_m)
    return BankruptcyGrids(
        d=np.linspace(0.0, model.d_max, n_d),
        z=np.exp(log_z.points), eta=np.exp(log_eta.points),
        kappa=np.linspace(0.0, model.kappa_max, n_kappa),
        Pz=Pz, w_eta=Pe[0].copy(), w_kappa=np.full(n_kappa, 1.0 / n_kappa))


def build_bankruptcy(params=None, grid_sizes=(10, 10, 10, 10)):
    """Return ``(dp, pf)`` for the bankruptcy model on a ``(d, z, eta, kappa)`` grid."""
    if params is None:
        model = BankruptcyModel()
    elif isinstance(params, BankruptcyModel):
        model = params
    else:
        model = BankruptcyModel.from_dict(dict(params))
    gr = make_grids(model, grid_sizes)
    n_d, n_z, n_eta, n_kappa = gr.sizes
    shape = (3, n_d, n_z, n_eta, n_kappa)
    n = int(np.prod(shape))
    n_actions = 3 * n_d
    gam, q = model.gamma_w, model.q

    _, d, z, eta, kap = np.meshgrid(np.arange(3), gr.d, gr.z, gr.eta, gr.kappa, indexing="ij")
    _, _, zi, _, _ = np.meshgrid(np.arange(3), np.arange(n_d), np.arange(n_z),
                                 np.arange(n_eta), np.arange(n_kappa), indexing="ij")
    d, z, eta, kap, zi = (a.reshape(3, -1) for a in (d, z, eta, kap, zi))
    income = z * eta
    garnished = (1.0 - gam) * income

    cons = np.full((n, n_actions), np.nan)
    C = cons.reshape(3, -1, 3, n_d)
    # R: budget identity, next status R or B
    c_rep = income[R][:, None] - d[R][:, None] - kap[R][:, None] + q * gr.d[None, :]
    ok = c_rep > 0
    stuck = ~ok.any(axis=1)
    if stuck.any() and model.infeasible_repayment == "raise":
        s = int(np.flatnonzero(stuck)[0])
        idx = np.unravel_index(s, shape[1:])
        raise ValueError(f"state (i=R, d={idx[0]}, z={idx[1]}, eta={idx[2]}, kappa={idx[3]}) "
                         "has no feasible action")
    c_rep = np.where(ok, c_rep, np.nan)
    C[R, :, R, :] = c_rep
    C[R, :, B, :] = c_rep
    if stuck.any():
        owed = (d[R] + kap[R] - gam * income[R]) * (1.0 + model.r_bar)
        j = _nearest_index(gr.d, np.maximum(owed, 0.0))
        rows = np.flatnonzero(stuck)
        for status in (R, B):
            C[R, rows, status, j[rows]] = garnished[R][rows]
    # B: d' = 0, next status R or E
    C[B, :, R, 0] = garnished[B]
    C[B, :, E, 0] = garnished[B]
    # E: debt rolls over at the penalty rate, next status R or B
    j = _nearest_index(gr.d, np.maximum((kap[E] - gam * income[E]) * (1.0 + model.r_bar), 0.0))
    rows = np.arange(j.size)
    for status in (R, B):
        C[E, rows, status, j] = garnished[E]

    mask = np.isfinite(cons)
    u_f = utility(cons[mask], model.sigma_u)
    a_f = np.nonzero(mask)[1].astype(np.int64)
    z_state = zi.reshape(-1)
    z_f = np.repeat(z_state, mask.sum(axis=1)).astype(np.int64)

    Q = n_z * n_eta * n_kappa
    kernel = (gr.Pz[:, :, None, None] * gr.w_eta[None, None, :, None]
              * gr.w_kappa[None, None, None, :]).reshape(n_z, Q)
    kernel = np.ascontiguousarray(kernel)
    beta = model.discount
    out = np.empty(u_f.size)

    def aggregator(v):
        V = np.ascontiguousarray(v).reshape(n_actions, Q)
        return _aggregate(u_f, a_f, z_f, kernel, V, beta, np.empty_like(out))

    dp = DynamicProgram.from_mask(mask, aggregator, beta, name="bankruptcy",
                                  reward_min=float(u_f.min()), state_shape=shape,
                                  action_shape=(3, n_d))
    dp.meta.update(model=model, grids=gr, u_f=u_f, a_f=a_f, z_f=z_f, kernel=kernel,
                   consumption=cons[mask], n_fallback=int(stuck.sum()))

    reduced_pos = a_f * n_z + z_f

    def w0(v):
        V = np.asarray(v).reshape(n_actions, Q)
        return (V @ kernel.T).ravel()

    def w1(g):
        return u_f + beta * g[reduced_pos]

    pf = PlanFactorization(n_actions * n_z, w0, w1, monotone=True,
                           name="bankruptcy_expected_value", reduced_shape=(3, n_d, n_z))
    return dp, pf


def with_discount(model: BankruptcyModel, discount: float) -> BankruptcyModel:
    return replace(model, discount=discount)

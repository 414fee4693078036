"""Timing harness: paired VFI/RVFI runs, ratio tables and scaling-exponent fits.

Timing excludes model construction and a short warm-up solve (which also
triggers JIT compilation). Reported times are medians over repetitions.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import statistics
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .models.config import build_from_config
from .numerics import ShockDraws, prepare_mc
from .models.stopping import continuous_asset_sale
from .solvers import SolveConfig, opi, refactored_opi, rvfi, vfi

SOLVERS = ("vfi", "rvfi", "opi", "refactored_opi")
REFACTORED = {"vfi": "rvfi", "opi": "refactored_opi"}
LABELS = {"vfi": "VFI", "rvfi": "RVFI", "opi": "OPI", "refactored_opi": "ROPI"}


@dataclass
class BenchScenario:
    model: str
    grids: tuple
    solver: str
    params: dict = field(default_factory=dict)
    cfg: SolveConfig = field(default_factory=SolveConfig)
    repetitions: int = 1
    columns: dict = field(default_factory=dict)   # parameter columns echoed in tables
    warmup_iter: int = 3

    def __post_init__(self):
        if self.solver == "ropi":
            self.solver = "refactored_opi"
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        self.grids = tuple(int(g) for g in self.grids)

    def config(self) -> dict:
        return {"model": self.model, "params": dict(self.params), "grids": list(self.grids)}


@dataclass
class BenchRecord:
    scenario: BenchScenario
    times: list
    iterations: int
    converged: bool
    final_gap: float
    policy_hash: str

    @property
    def time(self) -> float:
        return float(statistics.median(self.times))

    @property
    def per_iteration(self) -> float:
        return self.time / max(self.iterations, 1)

    def to_dict(self) -> dict:
        s = asdict(self.scenario)
        s["cfg"] = {k: v for k, v in s["cfg"].items() if k != "keep_iterates"}
        return {"scenario": s, "times": list(self.times), "time": self.time,
                "iterations": self.iterations, "converged": self.converged,
                "final_gap": self.final_gap, "policy_hash": self.policy_hash}


def policy_hash(sigma) -> str:
    """Order-sensitive digest of an action-index vector."""
    return hashlib.sha256(np.ascontiguousarray(sigma, dtype=np.int64).tobytes()).hexdigest()[:16]


def _solve(dp, pf, solver: str, cfg: SolveConfig):
    if solver == "vfi":
        return vfi(dp, np.zeros(dp.n_states), cfg)
    if solver == "opi":
        return opi(dp, np.zeros(dp.n_states), cfg)
    g0 = pf.W0(np.zeros(dp.n_states))
    if solver == "rvfi":
        return rvfi(dp, pf, g0, cfg)
    return refactored_opi(dp, pf, g0, cfg)


def run_scenario(s: BenchScenario, seed: int = 0) -> BenchRecord:
    loaded = build_from_config(s.config(), seed=seed)
    dp, pf = loaded.dp, loaded.pf
    if s.warmup_iter > 0:
        _solve(dp, pf, s.solver, replace(s.cfg, max_iter=s.warmup_iter, keep_iterates=False))
    times = []
    for _ in range(s.repetitions):
        t0 = time.perf_counter()
        _, sigma, report = _solve(dp, pf, s.solver, s.cfg)
        times.append(time.perf_counter() - t0)
    return BenchRecord(s, times, report.iterations, report.converged, report.final_gap,
                       policy_hash(sigma))


def run_group(scenarios: Sequence[BenchScenario], parallel: int = 0, seed: int = 0) -> list:
    """Run scenarios in order; ``parallel > 1`` uses worker processes."""
    if parallel and parallel > 1:
        warnings.warn("parallel scenarios share the machine; wall-clock times are unreliable",
                      RuntimeWarning, stacklevel=2)
        with ProcessPoolExecutor(parallel) as pool:
            return list(pool.map(run_scenario, scenarios, [seed] * len(scenarios)))
    return [run_scenario(s, seed) for s in scenarios]


# --------------------------------------------------------------------------
# tables

def _grid_label(grids) -> str:
    return "(" + ",".join(str(g) for g in grids) + ")"


def ratio_table(records: Iterable[BenchRecord]) -> list:
    """Long-format rows: grid, method, parameter columns, time, iterations, ratio, valid.

    Records are paired by (grid, parameter columns); each pair yields a standard
    row, a refactored row and a ratio row (standard time / refactored time). A
    pair whose policy hashes differ, or where either solve failed to converge,
    gets ``valid = False`` and no ratio.
    """
    groups: dict = {}
    order = []
    for r in records:
        key = (r.scenario.grids, tuple(sorted(r.scenario.columns.items())))
        if key not in groups:
            groups[key] = {}
            order.append(key)
        groups[key][r.scenario.solver] = r
    rows = []
    for key in order:
        grids, cols = key
        cols = dict(cols)
        recs = groups[key]
        for std, ref in REFACTORED.items():
            a, b = recs.get(std), recs.get(ref)
            present = [x for x in (a, b) if x is not None]
            if not present:
                continue
            valid = (a is not None and b is not None and a.converged and b.converged
                     and a.policy_hash == b.policy_hash)
            for rec in present:
                rows.append({"grid": _grid_label(grids), "method": LABELS[rec.scenario.solver],
                             **cols, "time": rec.time, "iterations": rec.iterations,
                             "ratio": "", "valid": valid})
            if a is not None and b is not None:
                rows.append({"grid": _grid_label(grids), "method": "Ratio", **cols,
                             "time": "", "iterations": "",
                             "ratio": a.time / b.time if valid else "", "valid": valid})
    return rows


def wide_table(rows: Sequence[dict], column: str) -> list:
    """Pivot long rows so that one parameter becomes the columns, as in a printed table."""
    out, index = [], {}
    for r in rows:
        rest = {k: v for k, v in r.items()
                if k not in (column, "time", "ratio", "iterations", "valid")}
        key = tuple(rest.items())
        if key not in index:
            index[key] = dict(rest)
            out.append(index[key])
        cell = r["ratio"] if r["method"] == "Ratio" else r["time"]
        index[key][f"{column}={r[column]}"] = cell
    return out


def to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    header = []
    for r in rows:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def ratio_trend(rows: Sequence[dict]) -> float:
    """Spearman correlation between grid size and speedup ratio over valid rows."""
    pts = [(int(r["grid"].strip("()").split(",")[0]), r["ratio"]) for r in rows
           if r["method"] == "Ratio" and r["valid"]]
    if len(pts) < 2:
        raise ValueError("need at least two valid ratio rows")
    return float(spearmanr([p[0] for p in pts], [p[1] for p in pts]).statistic)


# --------------------------------------------------------------------------
# scaling fits

@dataclass
class ScalingFit:
    method: str
    slope: float
    intercept: float
    residual: float
    n_points: int


def fit_power_law(sizes, times, method: str = "") -> ScalingFit:
    """Least-squares slope of ``log(time)`` against ``log(size)``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    if x.size < 3:
        raise ValueError(f"scaling fit needs at least 3 grid sizes, got {x.size}")
    if np.unique(x).size < 2:
        raise ValueError("scaling fit needs distinct grid sizes")
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    return ScalingFit(method, float(slope), float(intercept), resid, int(x.size))


def scaling_fit(records: Iterable[BenchRecord], axis: int = 0) -> dict:
    """Per-method slope of per-iteration time against grid coordinate ``axis``."""
    by_method: dict = {}
    for r in records:
        by_method.setdefault(r.scenario.solver, []).append(r)
    return {m: fit_power_law([r.scenario.grids[axis] for r in rs],
                             [r.per_iteration for r in rs], m)
            for m, rs in by_method.items()}


# --------------------------------------------------------------------------
# scenario groups

BETAS_GROUP1 = (0.94, 0.95, 0.96, 0.97, 0.98)
RHOS_GROUP2 = (0.96, 0.97, 0.98, 0.995)
DELTA2_GROUP2 = (0.01, 0.04)


def group1(grids: Sequence[int] = (10, 12, 14, 16), betas: Sequence[float] = BETAS_GROUP1,
           tol: float = 1e-4, repetitions: int = 1) -> list:
    out = []
    for n in grids:
        for beta in betas:
            for solver in ("vfi", "rvfi"):
                out.append(BenchScenario("bankruptcy", (n,) * 4, solver,
                                         params={"discount": beta, "rho": 0.99, "delta2": 0.007},
                                         cfg=SolveConfig(tol=tol, max_iter=100_000),
                                         repetitions=repetitions, columns={"beta": beta}))
    return out


def group2(grids: Sequence[int] = (10, 12, 14, 16), rhos: Sequence[float] = RHOS_GROUP2,
           delta2s: Sequence[float] = DELTA2_GROUP2, beta: float = 0.98, tol: float = 1e-4,
           repetitions: int = 1) -> list:
    out = []
    for n in grids:
        for d2 in delta2s:
            for rho in rhos:
                for solver in ("vfi", "rvfi"):
                    out.append(BenchScenario(
                        "bankruptcy", (n,) * 4, solver,
                        params={"discount": beta, "rho": rho, "delta2": d2},
                        cfg=SolveConfig(tol=tol, max_iter=100_000), repetitions=repetitions,
                        columns={"delta2": d2, "rho": rho}))
    return out


def stopping_scaling(L_values: Sequence[int] = (50, 100, 200, 400), K: int = 100,
                     n_iter: int = 5, repetitions: int = 3, discount: float = 0.9) -> list:
    """Finite-state stopping: fixed iteration count, so per-iteration time is isolated."""
    cfg = SolveConfig(tol=1e-300, max_iter=n_iter)
    return [BenchScenario("stopping", (L, K), solver, params={"discount": discount},
                          cfg=cfg, repetitions=repetitions, columns={"L": L}, warmup_iter=1)
            for L in L_values for solver in ("vfi", "rvfi")]


def mc_scaling_records(L_values: Sequence[int] = (50, 100, 200, 400), K: int = 30,
                       n_draws: int = 10_000, n_iter: int = 20, repetitions: int = 5,
                       seed: int = 0, with_standard: bool = False) -> list:
    """Per-iteration cost of the fitted refactored operator (and optionally the fitted T)."""
    records = []
    for L in L_values:
        model = continuous_asset_sale(L, K)
        draws = ShockDraws.draw(model.shock_sampler, n_draws, seed)
        mc = prepare_mc(model, draws)
        ops = [("rvfi_mc", mc.S, np.zeros(K))]
        if with_standard:
            ops.append(("vfi_mc", mc.T, np.zeros(L * K)))
        for name, op, x0 in ops:
            op(x0)
            times = []
            for _ in range(repetitions):
                x = x0
                t0 = time.perf_counter()
                for _ in range(n_iter):
                    x = op(x)
                times.append(time.perf_counter() - t0)
            sc = BenchScenario("stopping", (L, K), "rvfi" if name == "rvfi_mc" else "vfi",
                               params={"mc_draws": n_draws}, repetitions=repetitions,
                               columns={"L": L, "operator": name})
            records.append(BenchRecord(sc, times, n_iter, True, math.nan, ""))
    return records


def run_scaling(L_values=(50, 100, 200, 400), K: int = 100, mc_K: int = 30,
                n_draws: int = 10_000, seed: int = 0) -> dict:
    fs = run_group(stopping_scaling(L_values, K), seed=seed)
    mc = mc_scaling_records(L_values, mc_K, n_draws, seed=seed)
    return {"finite": fs, "finite_fit": scaling_fit(fs), "mc": mc,
            "mc_fit": fit_power_law([r.scenario.grids[0] for r in mc],
                                    [r.per_iteration for r in mc], "rvfi_mc")}

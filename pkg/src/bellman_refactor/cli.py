"""Command-line entry point.

Subcommands: ``solve``, ``bench``, ``counterexample``, ``validate``.

Exit codes: 0 success; 1 bad input; 2 solve did not converge; 3 a benchmark
pair reached different policies.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .core import apply_M, bellman_T, check_factorization, check_monotone, refactored_S
from .models.config import ConfigError, load_model
from .models.risk import build_counterexample
from .solvers import SolveConfig, opi, refactored_opi, rvfi, vfi

EXIT_OK, EXIT_BAD_INPUT, EXIT_NOT_CONVERGED, EXIT_HASH_MISMATCH = 0, 1, 2, 3

CASE_1 = "Tv*=v*, Sg*≠g*, g*≠ĝ"
CASE_2 = "Sg*=g*, Tv*≠v*"


@dataclass
class CliConfig:
    command: str
    model: Optional[str] = None
    out: Optional[str] = None
    solver: str = "vfi"
    tol: float = 1e-4
    max_iter: int = 10_000
    m: Sequence[int] = (1,)
    seed: int = 0
    grids: Optional[Sequence[int]] = None
    group: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "CliConfig":
        known = {k: getattr(ns, k) for k in ("model", "out", "solver", "tol", "max_iter", "m",
                                              "seed", "grids", "group") if hasattr(ns, k)}
        known = {k: v for k, v in known.items() if v is not None}
        extra = {k: v for k, v in vars(ns).items() if k not in known and k != "command"}
        return cls(command=ns.command, extra=extra, **known)

    def solve_config(self) -> SolveConfig:
        m = self.m[0] if len(self.m) == 1 else list(self.m)
        return SolveConfig(tol=self.tol, max_iter=self.max_iter, m=m)


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_BAD_INPUT


def _tolist(a):
    return [float(x) for x in np.asarray(a).ravel()]


def cmd_solve(cfg: CliConfig) -> int:
    if cfg.model is None:
        return _err("--model is required")
    try:
        loaded = load_model(cfg.model, seed=cfg.seed, grids=cfg.grids)
        scfg = cfg.solve_config()
    except (ConfigError, ValueError) as exc:
        return _err(str(exc))
    dp, pf = loaded.dp, loaded.pf
    solver = {"ropi": "refactored_opi"}.get(cfg.solver, cfg.solver)
    try:
        if solver in ("vfi", "opi"):
            v0 = np.zeros(dp.n_states)
            x, sigma, report = (vfi if solver == "vfi" else opi)(dp, v0, scfg)
            kind = "v"
        else:
            g0 = pf.W0(np.zeros(dp.n_states))
            x, sigma, report = (rvfi if solver == "rvfi" else refactored_opi)(dp, pf, g0, scfg)
            kind = "g"
    except ValueError as exc:
        return _err(str(exc))
    payload = {"model": loaded.kind, "solver": solver, "seed": cfg.seed, kind: _tolist(x),
               "policy": [int(a) for a in sigma], "policy_hash": bench.policy_hash(sigma),
               "report": report.to_dict()}
    _write(cfg.out, json.dumps(payload, indent=1) + "\n")
    status = "converged" if report.converged else "did not converge"
    print(f"{solver}: {status} after {report.iterations} iterations "
          f"(gap {report.final_gap:.3e})", file=sys.stderr)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_bench(cfg: CliConfig) -> int:
    group = cfg.group or "group1"
    if group not in ("group1", "group2", "scaling"):
        return _err(f"unknown group {group!r}")
    if group == "scaling":
        if cfg.model not in (None, "stopping"):
            return _err("the scaling group supports --model stopping only")
        Ls = cfg.grids if cfg.grids is not None else (50, 100, 200, 400)
        if len(Ls) < 3:
            return _err("scaling needs at least 3 grid sizes")
        res = bench.run_scaling(Ls, seed=cfg.seed)
        rows = [{"model": "stopping_finite", "method": r.scenario.solver, "L": r.scenario.grids[0],
                 "K": r.scenario.grids[1], "per_iteration": r.per_iteration} for r in res["finite"]]
        rows += [{"model": "stopping_mc", "method": "rvfi_mc", "L": r.scenario.grids[0],
                  "K": r.scenario.grids[1], "per_iteration": r.per_iteration} for r in res["mc"]]
        fits = list(res["finite_fit"].values()) + [res["mc_fit"]]
        rows += [{"model": "fit", "method": f.method, "slope": f.slope, "residual": f.residual}
                 for f in fits]
        _write(cfg.out, bench.to_csv(rows))
        for f in fits:
            print(f"{f.method}: slope {f.slope:.3f} (residual {f.residual:.3f})", file=sys.stderr)
        return EXIT_OK
    grids = cfg.grids if cfg.grids is not None else (10, 12)
    kw = {"tol": cfg.tol}
    scenarios = bench.group1(grids, **kw) if group == "group1" else bench.group2(grids, **kw)
    if not scenarios:
        return _err("empty scenario group")
    records = bench.run_group(scenarios, parallel=cfg.extra.get("parallel") or 0, seed=cfg.seed)
    rows = bench.ratio_table(records)
    pivot = "beta" if group == "group1" else "rho"
    wide = cfg.extra.get("layout", "long") == "wide"
    _write(cfg.out, bench.to_csv(bench.wide_table(rows, pivot) if wide else rows))
    if cfg.extra.get("records"):
        _write(cfg.extra["records"], json.dumps([r.to_dict() for r in records], indent=1) + "\n")
    bad = [r for r in rows if not r["valid"]]
    if bad:
        print(f"{len(bad)} rows invalid (policy mismatch or non-convergence)", file=sys.stderr)
        return EXIT_HASH_MISMATCH
    return EXIT_OK


def counterexample_report(beta: float, gamma: float = 1.0) -> dict:
    ce = build_counterexample(beta, gamma)
    Tv = bellman_T(ce.dp, ce.v_star)
    Sg = refactored_S(ce.dp, ce.pf, ce.g_star)
    gap_T = float(np.max(np.abs(Tv - ce.v_star)))
    gap_S = float(np.max(np.abs(Sg - ce.g_star)))
    gap_hat = float(np.max(np.abs(ce.g_star - ce.g_hat)))
    # separations are judged relative to the size of the entries involved
    eps = 1e-12
    t_fixed = gap_T <= eps * max(1.0, np.abs(ce.v_star).max())
    s_fixed = gap_S <= eps * max(1.0, np.abs(ce.g_star).max())
    hat_eq = gap_hat <= eps * max(1.0, np.abs(ce.g_star).max())
    if beta < 1:
        expected = CASE_1
        matches = t_fixed and not s_fixed and not hat_eq
    else:
        expected = CASE_2
        matches = s_fixed and not t_fixed
    observed = ", ".join([("Tv*=v*" if t_fixed else "Tv*≠v*"),
                          ("Sg*=g*" if s_fixed else "Sg*≠g*"),
                          ("g*=ĝ" if hat_eq else "g*≠ĝ")])
    return {"beta": beta, "gamma": gamma, "v_star": _tolist(ce.v_star),
            "g_star": _tolist(ce.g_star), "g_hat": _tolist(ce.g_hat), "Tv_star": _tolist(Tv),
            "Sg_star": _tolist(Sg), "norm_Tv_minus_v": gap_T, "norm_Sg_minus_g": gap_S,
            "observed": observed, "expected": expected, "verdict": expected if matches else observed,
            "matches": bool(matches)}


def cmd_counterexample(cfg: CliConfig) -> int:
    beta, gamma = cfg.extra.get("beta", 0.9), cfg.extra.get("gamma", 1.0)
    try:
        rep = counterexample_report(beta, gamma)
    except ValueError as exc:
        return _err(str(exc))
    lines = [f"beta = {beta}, gamma = {gamma}",
             f"v*  = {rep['v_star']}", f"g*  = {rep['g_star']}", f"ĝ   = {rep['g_hat']}",
             f"|Tv* - v*| = {rep['norm_Tv_minus_v']:.6e}",
             f"|Sg* - g*| = {rep['norm_Sg_minus_g']:.6e}",
             f"verdict: {rep['verdict']}"]
    print("\n".join(lines))
    if cfg.out:
        _write(cfg.out, json.dumps(rep, indent=1, ensure_ascii=False) + "\n")
    return EXIT_OK if rep["matches"] else EXIT_BAD_INPUT


def cmd_validate(cfg: CliConfig) -> int:
    if cfg.model is None:
        return _err("--model is required")
    try:
        loaded = load_model(cfg.model, seed=cfg.seed, grids=cfg.grids)
    except (ConfigError, ValueError) as exc:
        return _err(str(exc))
    dp, pf = loaded.dp, loaded.pf
    rng = np.random.default_rng(cfg.seed)
    try:
        err = check_factorization(dp, pf, rng, n_samples=5)
    except AssertionError as exc:
        return _err(str(exc))
    mono = check_monotone(dp, pf, rng, n_pairs=5)
    rep = {"model": loaded.kind, "factorization": pf.name, "n_states": dp.n_states,
           "n_pairs": dp.n_pairs, "reduced_size": pf.reduced_size,
           "max_relative_error": err, "declared_monotone": pf.monotone,
           "sampled_monotone": bool(mono)}
    _write(cfg.out, json.dumps(rep, indent=1) + "\n")
    if pf.monotone and not mono:
        return _err("factorization declared monotone but a sampled pair violates it")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellman-refactor",
                                description="Solve and benchmark refactored dynamic programs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model_required=False):
        sp.add_argument("--model", required=model_required, help="model config JSON path")
        sp.add_argument("--out", help="output path ('-' or omitted: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--grids", type=_int_list, help="comma-separated grid sizes")

    s = sub.add_parser("solve", help="solve a configured model")
    common(s)
    s.add_argument("--solver", choices=("vfi", "rvfi", "opi", "ropi"), default="vfi")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", dest="max_iter", type=int, default=10_000)
    s.add_argument("--m", type=_int_list, default=[1], help="OPI steps, e.g. 3 or 1,2,5")

    b = sub.add_parser("bench", help="run a benchmark group")
    common(b)
    b.add_argument("--group", choices=("group1", "group2", "scaling"), default="group1")
    b.add_argument("--tol", type=float, default=1e-4)
    b.add_argument("--layout", choices=("long", "wide"), default="long")
    b.add_argument("--records", help="also write full JSON records to this path")
    b.add_argument("--parallel", type=int, default=0,
                   help="worker processes (timings become unreliable)")

    c = sub.add_parser("counterexample", help="check the two-state non-monotone example")
    c.add_argument("--beta", type=float, default=0.9)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--out")

    v = sub.add_parser("validate", help="check a model's factorization")
    common(v)
    return p


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "counterexample": cmd_counterexample,
            "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    cfg = CliConfig.from_args(ns)
    return COMMANDS[cfg.command](cfg)


if __name__ == "__main__":
    sys.exit(main())

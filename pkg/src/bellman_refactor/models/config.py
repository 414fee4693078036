"""JSON model files.

Each file holds one object::

    {"model": "<kind>", "params": {...}, "grids": ...}

``grids`` is either a list of sizes in the model's coordinate order or an
object keyed by coordinate name. See ``configs/`` for one file per kind.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from ..core import DynamicProgram, PlanFactorization
from .bankruptcy import BankruptcyModel, build_bankruptcy
from .finite import (FiniteMdp, build_finite, expected_value_factorization,
                     identity_factorization, qfactor_factorization, random_mdp, single_state)
from .risk import RiskSensitiveModel, build_counterexample, build_risk_sensitive
from .robust import build_robust, robust_savings
from .stopping import asset_sale, build_stopping, job_search


class ConfigError(ValueError):
    pass


@dataclass
class LoadedModel:
    kind: str
    dp: DynamicProgram
    pf: PlanFactorization
    config: dict = field(default_factory=dict)


GRID_ORDER = {
    "bankruptcy": ("d", "z", "eta", "kappa"),
    "asset_sale": ("L", "K"),
    "job_search": ("n_w", "n_eta", "K"),
    "robust": ("n_s", "n_eps"),
}


def _grid_values(kind: str, grids: Any) -> dict:
    order = GRID_ORDER[kind]
    if grids is None:
        return {}
    if isinstance(grids, dict):
        unknown = set(grids) - set(order)
        if unknown:
            raise ConfigError(f"unknown grid keys for {kind}: {sorted(unknown)}")
        return {k: int(v) for k, v in grids.items()}
    grids = list(grids)
    if len(grids) != len(order):
        raise ConfigError(f"{kind} expects {len(order)} grid sizes {order}, got {len(grids)}")
    return dict(zip(order, (int(g) for g in grids)))


def _finite_factorization(dp, name: str) -> PlanFactorization:
    table = {"expected_value": expected_value_factorization,
             "q_factor": qfactor_factorization, "identity": identity_factorization}
    if name not in table:
        raise ConfigError(f"unknown factorization {name!r}; choose from {sorted(table)}")
    return table[name](dp)


def build_from_config(cfg: dict, seed: int = 0, grids: Optional[Sequence[int]] = None) -> LoadedModel:
    """Construct ``(dp, pf)`` from a parsed config; ``grids`` overrides the file's grid sizes."""
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ConfigError("config must be an object with a 'model' key")
    kind = cfg["model"]
    params = dict(cfg.get("params", {}))
    grid_spec = grids if grids is not None else cfg.get("grids")
    try:
        if kind == "bankruptcy":
            g = _grid_values("bankruptcy", grid_spec)
            sizes = tuple(g.get(k, 10) for k in GRID_ORDER["bankruptcy"])
            dp, pf = build_bankruptcy(BankruptcyModel.from_dict(params), sizes)
        elif kind == "stopping":
            variant = params.pop("variant", "asset_sale")
            if variant not in ("asset_sale", "job_search"):
                raise ConfigError(f"unknown stopping variant {variant!r}")
            g = _grid_values(variant, grid_spec)
            builder = asset_sale if variant == "asset_sale" else job_search
            dp, pf = build_stopping(builder(**g, **params), name=variant)
        elif kind == "finite_mdp":
            fact = params.pop("factorization", "expected_value")
            if "rewards" in params:
                mdp = FiniteMdp(np.array(params["rewards"]), np.array(params["transitions"]),
                                params["discount"], params.get("feasible"))
            else:
                rng = np.random.default_rng(seed)
                mdp = random_mdp(rng, **params)
            dp = build_finite(mdp)
            pf = _finite_factorization(dp, fact)
        elif kind == "risk_sensitive":
            model = RiskSensitiveModel(np.array(params["rewards"]), np.array(params["transitions"]),
                                       params["discount"], params["gamma"], params.get("feasible"))
            dp, pf = build_risk_sensitive(model)
        elif kind == "robust":
            g = _grid_values("robust", grid_spec)
            dp, pf = build_robust(robust_savings(**g, **params))
        elif kind == "counterexample":
            ce = build_counterexample(params.get("beta", 0.9), params.get("gamma", 1.0))
            dp, pf = ce.dp, ce.pf
        elif kind == "toy":
            dp = single_state(params.get("reward", 1.0), params.get("discount", 0.5))
            pf = _finite_factorization(dp, params.get("factorization", "expected_value"))
        else:
            raise ConfigError(f"unknown model kind {kind!r}")
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from exc
    return LoadedModel(kind, dp, pf, cfg)


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_model(path, seed: int = 0, grids=None) -> LoadedModel:
    return build_from_config(load_config(path), seed=seed, grids=grids)

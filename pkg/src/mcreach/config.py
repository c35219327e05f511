"""JSON run configuration: defaults, validation and object construction."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .core import ConfigError, EstimatorConfig, EvalSet, make_eval_grid, random_eval_set
from .reach import TimeSchedule
from .systems import SystemSpec, get_system, with_disk_obstacle

DEFAULTS: dict = {
    "system": {"name": None, "params": {}, "obstacle": None},
    "estimator": {
        "delta": 0.08,
        "horizon": 1.0,
        "n_samples": 14000,
        "seed": 0,
        "antithetic": True,
        "grad_floor": 1e-3,
        "coeff_bounds": [0.05, 20.0],
        "common_random_numbers": True,
        "chunk_points": 0,
    },
    "eval": {"type": "grid", "counts": [40, 40], "frozen": {}, "bounds": None, "count": 100, "seed": 0, "points": None},
    "schedule": {"count": 10, "times": None},
    "picard": {"tol": 1e-3, "max_iter": 20, "mode": "BRT"},
    "output": {"dir": "out", "gradients": True},
    "compare": {"resolution": 81, "cfl": 0.9, "self_compare": False},
    "concentration": {"point": [0.0], "c": 1.0, "eps": 0.1, "trials": 2000, "t": 0.0, "n_samples": "auto"},
    "variants": [],
}

OPEN_SECTIONS = {"params", "obstacle", "frozen"}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}", key=where)
        if isinstance(base[key], dict) and key not in OPEN_SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object", key=where)
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(source) -> dict:
    """Parse a JSON file (or take a dict) and merge it over the defaults."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {str(path)!r} not found", key="--config") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}", key="--config") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", key="")
    cfg = _merge(DEFAULTS, raw, "")
    for i, var in enumerate(cfg["variants"]):
        if not isinstance(var, dict):
            raise ConfigError("each variant must be an object", key=f"variants[{i}]")
    return cfg


def variants(cfg: dict) -> list[tuple[str, dict]]:
    """(label, merged config) per variant; a single unnamed run if none."""
    if not cfg["variants"]:
        return [("run", cfg)]
    out = []
    for i, var in enumerate(cfg["variants"]):
        var = dict(var)
        label = str(var.pop("label", f"variant{i}"))
        merged = _merge({k: v for k, v in cfg.items() if k != "variants"}, var, f"variants[{i}]")
        merged["variants"] = []
        out.append((label, merged))
    labels = [lab for lab, _ in out]
    if len(set(labels)) != len(labels):
        raise ConfigError("variant labels must be unique", key="variants")
    return out


def build_system(cfg: dict) -> SystemSpec:
    sec = cfg["system"]
    if not sec.get("name"):
        raise ConfigError("system.name is required", key="system.name")
    sys = get_system(sec["name"], **sec.get("params", {}))
    obs = sec.get("obstacle")
    if obs:
        try:
            sys = with_disk_obstacle(sys, obs["center"], float(obs["radius"]), tuple(obs.get("axes", (0, 1))))
        except KeyError as exc:
            raise ConfigError(f"obstacle needs {exc.args[0]!r}", key=f"system.obstacle.{exc.args[0]}") from None
    return sys


def build_estimator(cfg: dict, seed: int | None = None) -> EstimatorConfig:
    sec = dict(cfg["estimator"])
    if seed is not None:
        sec["seed"] = int(seed)
    try:
        return EstimatorConfig(
            delta=float(sec["delta"]),
            horizon=float(sec["horizon"]),
            n_samples=int(sec["n_samples"]),
            seed=int(sec["seed"]),
            antithetic=bool(sec["antithetic"]),
            grad_floor=float(sec["grad_floor"]),
            coeff_bounds=tuple(sec["coeff_bounds"]),
            common_random_numbers=bool(sec["common_random_numbers"]),
            chunk_points=int(sec["chunk_points"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad estimator setting: {exc}", key="estimator") from None


def build_eval_set(cfg: dict, sys: SystemSpec) -> EvalSet:
    sec = cfg["eval"]
    bounds = sec["bounds"] if sec["bounds"] is not None else sys.bounds
    if len(bounds) != sys.n:
        raise ConfigError(f"eval.bounds has {len(bounds)} axes, system has {sys.n}", key="eval.bounds")
    kind = sec["type"]
    if kind == "grid":
        try:
            frozen = {int(k): float(v) for k, v in sec["frozen"].items()}
        except ValueError:
            raise ConfigError("eval.frozen keys must be axis indices", key="eval.frozen") from None
        es = make_eval_grid(bounds, sec["counts"], frozen, n=sys.n)
    elif kind == "random":
        es = random_eval_set(bounds, int(sec["count"]), int(sec["seed"]))
    elif kind == "points":
        if sec["points"] is None:
            raise ConfigError("eval.points is required for type 'points'", key="eval.points")
        pts = np.asarray(sec["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != sys.n:
            raise ConfigError(f"eval.points must be a list of {sys.n}-vectors", key="eval.points")
        es = EvalSet(points=pts)
    else:
        raise ConfigError(f"unknown eval.type {kind!r}; use grid, random or points", key="eval.type")
    es.check_inside(sys.bounds)
    return es


def build_schedule(cfg: dict, horizon: float) -> TimeSchedule:
    sec = cfg["schedule"]
    if sec["times"] is not None:
        sched = TimeSchedule(tuple(sec["times"]))
    else:
        sched = TimeSchedule.uniform(horizon, int(sec["count"]))
    sched.check(horizon)
    return sched


def picard_settings(cfg: dict) -> tuple[float, int, str]:
    sec = cfg["picard"]
    tol, max_iter, mode = float(sec["tol"]), int(sec["max_iter"]), str(sec["mode"]).upper()
    if tol < 0:
        raise ConfigError("picard.tol must be >= 0", key="picard.tol")
    if max_iter < 1:
        raise ConfigError("picard.max_iter must be >= 1", key="picard.max_iter")
    if mode not in ("BRT", "BRAT"):
        raise ConfigError("picard.mode must be BRT or BRAT", key="picard.mode")
    return tol, max_iter, mode

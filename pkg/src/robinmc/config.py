"""Strict TOML run configuration.

Every section has a closed key set; an unknown or missing key raises
``ConfigError`` naming it.  ``build_problem`` turns the parsed tables into a
``ProblemSpec`` with f and g drawn from the named registry in ``functions``.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coefficients import field_from_config
from .errors import ConfigError
from .feynman_kac import ProblemSpec
from .functions import function_from_config
from .geometry import domain_from_config
from .sde import KAPPA, SimParams

TOP_KEYS = {"lambda", "points", "n_schedule", "x", "n"}
SECTIONS = {
    "domain": None,  # validated by domain_from_config
    "coefficients": None,
    "f": None,
    "g": None,
    "sim": {"dt", "weight_floor", "kappa", "max_steps", "reflection"},
    "mc": {"paths", "seed", "workers", "dirichlet_paths"},
    "output": {"dir"},
    "oracle": {"solver", "resolution", "n", "precondition"},
    "calibration": {"paths", "point", "resolution", "bracket"},
    "validation": {"paths", "kappa_paths", "resolution"},
}
REQUIRED = ("lambda", "domain", "coefficients", "f", "g")

DEFAULT = {
    "lambda": 1.0,
    "points": [[0.5, 0.0, 0.0], [0.0, 0.0, 1.0]],
    "n_schedule": [1.0, 4.0, 16.0, 64.0, 256.0],
    "x": [0.5, 0.0, 0.0],
    "n": 4.0,
    "domain": {"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 1.0},
    "coefficients": {"type": "isotropic", "value": 0.5, "lambda_ell": 2.0},
    "f": {"name": "coordinate", "axis": 0},
    "g": {"name": "coordinate", "axis": 0},
    "sim": {"dt": 1e-4, "weight_floor": 1e-6, "kappa": KAPPA},
    "mc": {"paths": 200_000, "workers": 1},
}


@dataclass
class RunConfig:
    raw: dict
    lam: float
    domain_cfg: dict
    coefficients_cfg: dict
    f_cfg: dict
    g_cfg: dict
    sim: SimParams
    paths: int
    workers: int
    seed: Optional[int]
    dirichlet_paths: Optional[int] = None
    points: list = field(default_factory=list)
    n_schedule: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    n: Optional[float] = None
    out_dir: Optional[str] = None
    oracle: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)

    def problem(self, n: float = None) -> ProblemSpec:
        return build_problem(self, n)


def _num(value, key, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
    if integer and (not float(value).is_integer()):
        raise ConfigError(f"{key} must be an integer, got {value!r}", key=key)
    v = int(value) if integer else float(value)
    if not np.isfinite(v):
        raise ConfigError(f"{key} must be finite", key=key)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{key} must be {'>' if lo_open else '>='} {lo}, got {v}", key=key)
    if hi is not None and v >= hi:
        raise ConfigError(f"{key} must be < {hi}, got {v}", key=key)
    return v


def _point(value, key):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{key} must be a list of numbers", key=key)
    return np.array([_num(v, key) for v in value])


def _section(raw, name):
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name} must be a table", key=name)
    allowed = SECTIONS[name]
    if allowed is not None:
        for k in sec:
            if k not in allowed:
                raise ConfigError(f"unknown key {name}.{k}", key=f"{name}.{k}")
    return sec


def parse_config(raw: dict) -> RunConfig:
    for k, v in raw.items():
        if k not in TOP_KEYS and k not in SECTIONS:
            raise ConfigError(f"unknown key {k}", key=k)
        if k in SECTIONS and not isinstance(v, dict):
            raise ConfigError(f"{k} must be a table", key=k)
    for k in REQUIRED:
        if k not in raw:
            raise ConfigError(f"missing key {k}", key=k)
    lam = _num(raw["lambda"], "lambda", 0.0, lo_open=True)

    sim = _section(raw, "sim")
    try:
        params = SimParams(
            dt=_num(sim.get("dt", 1e-4), "sim.dt", 0.0, lo_open=True),
            weight_floor=_num(sim.get("weight_floor", 1e-6), "sim.weight_floor", 0.0, 1.0, lo_open=True),
            kappa=_num(sim.get("kappa", KAPPA), "sim.kappa", 0.0, lo_open=True),
            max_steps=_num(sim.get("max_steps", 10**8), "sim.max_steps", 1, integer=True),
            reflection=sim.get("reflection", "oblique"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), key="sim.reflection") from exc

    mc = _section(raw, "mc")
    paths = _num(mc.get("paths", 200_000), "mc.paths", 1, integer=True)
    workers = _num(mc.get("workers", 1), "mc.workers", 1, integer=True)
    seed = mc.get("seed")
    if seed is not None:
        seed = _num(seed, "mc.seed", 0, 2**64, integer=True)
    dp = mc.get("dirichlet_paths")
    if dp is not None:
        dp = _num(dp, "mc.dirichlet_paths", 1, integer=True)

    points = [_point(p, "points") for p in raw.get("points", [])]
    ns = [_num(n, "n_schedule", 0.0, lo_open=True) for n in raw.get("n_schedule", [])]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n_schedule must be strictly increasing", key="n_schedule")
    x = _point(raw["x"], "x") if "x" in raw else None
    n = _num(raw["n"], "n", 0.0, lo_open=True) if "n" in raw else None

    oracle = dict(_section(raw, "oracle"))
    if "solver" in oracle and oracle["solver"] not in ("dirichlet", "robin", "neumann"):
        raise ConfigError("oracle.solver must be 'dirichlet', 'robin' or 'neumann'", key="oracle.solver")
    if "resolution" in oracle:
        oracle["resolution"] = _num(oracle["resolution"], "oracle.resolution", 9, integer=True)
    if "n" in oracle:
        oracle["n"] = _num(oracle["n"], "oracle.n", 0.0, lo_open=True)
    cal = dict(_section(raw, "calibration"))
    if "paths" in cal:
        cal["paths"] = _num(cal["paths"], "calibration.paths", 2, integer=True)
    if "resolution" in cal:
        cal["resolution"] = _num(cal["resolution"], "calibration.resolution", 9, integer=True)
    if "point" in cal:
        cal["point"] = _point(cal["point"], "calibration.point")
    if "bracket" in cal:
        b = [_num(v, "calibration.bracket", 0.0, lo_open=True) for v in cal["bracket"]]
        if len(b) != 2 or b[0] >= b[1]:
            raise ConfigError("calibration.bracket must be [low, high] with low < high", key="calibration.bracket")
        cal["bracket"] = tuple(b)
    val = dict(_section(raw, "validation"))
    for k in ("paths", "kappa_paths"):
        if k in val:
            val[k] = _num(val[k], f"validation.{k}", 1, integer=True)
    if "resolution" in val:
        val["resolution"] = _num(val["resolution"], "validation.resolution", 9, integer=True)
    out = _section(raw, "output").get("dir")

    cfg = RunConfig(
        raw=raw, lam=lam, domain_cfg=raw["domain"], coefficients_cfg=raw["coefficients"], f_cfg=raw["f"],
        g_cfg=raw["g"], sim=params, paths=paths, workers=workers, seed=seed, dirichlet_paths=dp, points=points,
        n_schedule=ns, x=x, n=n, out_dir=out, oracle=oracle, calibration=cal, validation=val,
    )
    build_problem(cfg, n if n is not None else 1.0)  # fail fast on bad domain / field / data
    return cfg


def build_problem(cfg: RunConfig, n: float = None) -> ProblemSpec:
    domain = domain_from_config(cfg.domain_cfg)
    fld = field_from_config(cfg.coefficients_cfg, domain.dimension)
    ctx = {"d": domain.dimension, "field": fld, "lambda": cfg.lam, "n": n}
    f = function_from_config(cfg.f_cfg, ctx, "f")
    g = function_from_config(cfg.g_cfg, ctx, "g")
    return ProblemSpec(domain, fld, cfg.lam, f, g)


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config(copy.deepcopy(DEFAULT))
    try:
        with open(Path(path), "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key="--config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}", key="--config") from exc
    return parse_config(raw)

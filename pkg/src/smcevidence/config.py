"""TOML experiment configuration: schema validation and object construction."""

from __future__ import annotations

import copy
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import datasets
from .estimators import NEWTON_COTES, QuadratureRule
from .kernels import KernelConfig
from .models.conjugate import ConjugateGaussian
from .models.gmm import GaussianMixture
from .models.goodwin import Goodwin
from .models.pet import PetCompartmental
from .samplers import ALGORITHMS, RunConfig
from .tempering import BisectionConfig, Schedule


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# key -> type (or tuple of types); nested dicts are sub-tables
_NUM = (int, float)
MODEL_KEYS = {
    "conjugate": {"kind": str, "data": str, "m0": _NUM, "s0_sq": _NUM, "sigma0_sq": _NUM},
    "gmm": {"kind": str, "data": str, "r": (int, list), "ordered": bool, "moves": list},
    "goodwin": {"kind": str, "data": str, "m": int, "rho": _NUM, "sigma": _NUM,
                "prior_shape": _NUM, "prior_rate": _NUM},
    "pet": {"kind": str, "data": str, "input": str, "m": int, "phi_bounds": list,
            "theta_bounds": list, "sigma2_shape": _NUM, "sigma2_scale": _NUM},
    "finite_flow": {"kind": str, "prior": list, "likelihood": list, "alphas": list},
}
SCHEMA = {
    "seed": int,
    "replicates": int,
    "identical_replicates": bool,
    "out": str,
    "model": dict,
    "sampler": {
        "algorithm": str, "n_particles": int, "resample_threshold": _NUM,
        "resample_scheme": str, "pair": list, "fresh": bool, "max_micro_steps": int,
        "schedule": {"kind": str, "T": int, "p": _NUM, "cess_target": _NUM,
                     "tolerance": _NUM, "max_iters": int, "criterion": str},
        "kernel": {"scale_mode": str, "default_scale": _NUM, "multiplier": _NUM,
                   "n_sweeps": int, "clamp": bool, "floor": _NUM},
    },
    "estimators": {"direct": bool, "path": list},
    "bias_table": {"rules": list, "refinements": list, "reference": (str, int, float),
                   "replicates": int},
    "clt": {"N": list, "R": int},
}
DEFAULT_PATH = ["trapezoid"]


def _check(table: dict, schema: dict, prefix: str):
    for key, value in table.items():
        name = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key '{name}'")
        expect = schema[key]
        if isinstance(expect, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{name}' must be a table")
            _check(value, expect, name + ".")
        elif expect is dict:
            if not isinstance(value, dict):
                raise ConfigError(f"'{name}' must be a table")
        else:
            types = expect if isinstance(expect, tuple) else (expect,)
            # bool is an int subclass; only accept it where a bool is expected
            if not isinstance(value, types) or (isinstance(value, bool) and bool not in types):
                raise ConfigError(f"'{name}' has the wrong type")


def validate(cfg: dict) -> dict:
    """Check ``cfg`` against the schema and return it; raises :class:`ConfigError`."""
    if "model" not in cfg:
        raise ConfigError("missing required section 'model'")
    _check(cfg, SCHEMA, "")
    model = cfg["model"]
    kind = model.get("kind")
    if kind not in MODEL_KEYS:
        raise ConfigError(f"'model.kind' must be one of {sorted(MODEL_KEYS)}")
    _check(model, MODEL_KEYS[kind], "model.")
    if kind != "finite_flow" and "data" not in model:
        raise ConfigError("missing required key 'model.data'")
    s = cfg.get("sampler", {})
    if s.get("algorithm", "smc2") not in ALGORITHMS:
        raise ConfigError(f"'sampler.algorithm' must be one of {list(ALGORITHMS)}")
    if s.get("algorithm") == "smc3" and len(s.get("pair", [])) != 2:
        raise ConfigError("'sampler.pair' must list two models for smc3")
    for spec in cfg.get("estimators", {}).get("path", []):
        try:
            parse_rule(spec)
        except ValueError as exc:
            raise ConfigError(f"'estimators.path' entry {spec!r}: {exc}") from None
    for key in ("replicates",):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"'{key}' must be positive")
    return cfg


def load(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    cfg = validate(cfg)
    cfg["_base"] = str(path.resolve().parent)
    return cfg


def parse_rule(spec: str) -> QuadratureRule:
    """``"boole"`` or ``"boole:8"`` -> rule with that refinement."""
    kind, _, ref = str(spec).partition(":")
    if kind not in NEWTON_COTES:
        raise ValueError(f"unknown rule {kind!r}")
    return QuadratureRule(kind, int(ref) if ref else 1)


def build_model(cfg: dict):
    m = dict(cfg["model"])
    kind = m.pop("kind")
    base = Path(cfg.get("_base", "."))
    if kind == "finite_flow":
        raise ConfigError("'model.kind' finite_flow is only valid for clt-check")
    try:
        y = datasets.load(m.pop("data"), base)
    except (KeyError, OSError, ValueError) as exc:
        raise ConfigError(f"'model.data': {exc}") from None
    try:
        if kind == "conjugate":
            return ConjugateGaussian(y, **m)
        if kind == "gmm":
            r = m.pop("r", list(range(1, 11)))
            ids = [r] if isinstance(r, int) else list(r)
            ordered = m.pop("ordered", True)
            moves = tuple(m.pop("moves", ["split", "birth"]))
            return GaussianMixture(y[:, 0], r_values=ids, ordered=ordered, moves=moves)
        if kind == "goodwin":
            return Goodwin(y[:, 1:], n_obs=y.shape[0], **m)
        if kind == "pet":
            knots = None
            if "input" in m:
                try:
                    k = datasets.load(m.pop("input"), base)
                except (KeyError, OSError, ValueError) as exc:
                    raise ConfigError(f"'model.input': {exc}") from None
                knots = (k[:, 0], k[:, 1])
            for b in ("phi_bounds", "theta_bounds"):
                if b in m:
                    m[b] = tuple(m[b])
            return PetCompartmental(y[:, 1], times=y[:, 0], knots=knots, **m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    raise ConfigError(f"unknown model kind {kind!r}")


def build_run_config(cfg: dict, seed: int | None = None) -> RunConfig:
    s = copy.deepcopy(cfg.get("sampler", {}))
    sch = s.pop("schedule", {})
    bis = {k: sch.pop(k) for k in ("cess_target", "tolerance", "max_iters", "criterion")
           if k in sch}
    ker = s.pop("kernel", {})
    s.pop("pair", None)
    s.pop("fresh", None)
    est = cfg.get("estimators", {})
    rules = tuple(parse_rule(r) for r in est.get("path", DEFAULT_PATH))
    try:
        schedule = Schedule(bisection=BisectionConfig(**bis), **sch)
        return RunConfig(schedule=schedule, kernel=KernelConfig(**ker),
                         direct=est.get("direct", True), path_rules=rules,
                         seed=cfg.get("seed", 0) if seed is None else seed, **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from None


def resolved(cfg: dict, run: RunConfig | None = None, seed: int | None = None) -> dict:
    """A JSON-friendly snapshot of the configuration with defaults filled in."""
    out = {k: v for k, v in copy.deepcopy(cfg).items() if not k.startswith("_")}
    if seed is not None:
        out["seed"] = seed
    if run is not None:
        b = run.schedule.bisection
        k = run.kernel
        out["sampler"] = {
            "algorithm": run.algorithm, "n_particles": run.n_particles,
            "resample_threshold": run.resample_threshold,
            "resample_scheme": run.resample_scheme,
            "max_micro_steps": run.max_micro_steps,
            "schedule": {"kind": run.schedule.kind, "T": run.schedule.T, "p": run.schedule.p,
                         "cess_target": b.cess_target, "tolerance": b.tolerance,
                         "max_iters": b.max_iters, "criterion": b.criterion},
            "kernel": {"scale_mode": k.scale_mode, "default_scale": k.default_scale,
                       "multiplier": k.multiplier, "n_sweeps": k.n_sweeps, "clamp": k.clamp,
                       "floor": k.floor},
            **{key: cfg.get("sampler", {})[key] for key in ("pair", "fresh")
               if key in cfg.get("sampler", {})},
        }
        out["estimators"] = {"direct": run.direct,
                             "path": [f"{r.kind}:{r.refinement}" for r in run.path_rules]}
    return out

"""Run configuration: strict JSON schema plus typed defaults."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import jsonschema

from .errors import ConfigError

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_lags = {"type": "array", "items": _pos, "minItems": 6}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "model": _obj({"dim": {"type": "integer", "enum": [1, 2, 3]},
                   "alpha": _pos, "beta": _pos}, required=("dim", "alpha", "beta")),
    "horizon": _pos,
    "domain_length": _pos,
    "quadrature": _obj({"node_count": {"type": "integer", "minimum": 8},
                        "abs_tol": _pos, "rel_tol": _pos,
                        "singularity_split": {"type": "number", "exclusiveMinimum": 0,
                                              "exclusiveMaximum": 1}}),
    "kernels": _obj({"n_max": _int1, "series_n_max": _int1, "n_grid": {"type": "integer", "minimum": 0},
                     "series_points": {"type": "array", "items": _pair},
                     "series_tol": _pos}),
    "moments": _obj({"times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                     "orders": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                     "bound_orders": _int1,
                     "qmc_points": _int1, "replications": {"type": "integer", "minimum": 2},
                     "p_values": {"type": "array", "items": {"type": "number", "minimum": 2}},
                     "increment_times": {"type": "array", "items": _pos},
                     "increment_lags": {"type": "array", "items": _pos},
                     "eta": _pos}),
    "basis": _obj({"J": _int1, "M": _int1, "n_cells": _int1, "memory_budget_mib": _pos}),
    "simulation": _obj({"enabled": {"type": "boolean"},
                        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
                        "replicates": _int1, "chaos_order": {"type": "integer", "enum": [1, 2]},
                        "points": {"type": "array", "items": _pair, "minItems": 1},
                        "workers": _int1, "dump_samples": {"type": "boolean"}}),
    "regularity": _obj({"t0": _pos, "time_lags": _lags, "space_lags": _lags,
                        "margin": {"type": "number"}, "proximity": _pos,
                        "bound_times": {"type": "array", "items": _pos, "minItems": 1},
                        "bound_lags": {"type": "array", "items": _pos, "minItems": 1},
                        "etas": {"type": "array", "items": _pos, "minItems": 1},
                        "slack_limit": {"type": "number"},
                        "inequality_samples": _int1}),
    "report": _obj({"out_dir": {"type": "string"},
                    "formats": {"type": "array", "items": {"enum": ["csv", "json"]}}}),
})


def _geom(first, ratio, count):
    return [first * ratio ** k for k in range(count)]


DEFAULTS = {
    "model": {"dim": 1, "alpha": 0.5, "beta": 0.5},
    "horizon": 1.0,
    "quadrature": {"node_count": 128, "abs_tol": 1e-13, "rel_tol": 1e-10, "singularity_split": 0.75},
    "kernels": {"n_max": 20, "series_n_max": 120, "n_grid": 512,
                "series_points": [[t, g] for t in (0.5, 1.0) for g in (0.5, 1.0, 2.0)],
                "series_tol": 1e-13},
    "moments": {"times": [0.0, 0.25, 0.5, 1.0], "orders": [1, 2], "bound_orders": 5,
                "qmc_points": 16384, "replications": 8, "p_values": [2, 4],
                "increment_times": [0.25, 0.5],
                "increment_lags": _geom(2.0 ** -4, 0.5, 9), "eta": 0.5},
    "basis": {"J": 16, "M": 32, "memory_budget_mib": 1024},
    "simulation": {"enabled": True, "seed": 20240607, "replicates": 10000, "chaos_order": 2,
                   "points": [[1.0, 0.0], [1.0, 4.0], [0.5, 0.0]], "workers": 1,
                   "dump_samples": True},
    "regularity": {"t0": 1.0, "time_lags": _geom(2.0 ** -4, 0.5, 9),
                   "space_lags": _geom(2.0 ** -4, 0.5, 9), "margin": 0.05, "proximity": 0.15,
                   "bound_times": [0.25, 1.0], "bound_lags": _geom(0.25, 0.5, 9),
                   "slack_limit": 1.0, "inequality_samples": 1000000},
    "report": {"out_dir": "pam_out", "formats": ["csv", "json"]},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> dict:
    """Validate against the schema and fill defaults; raises :class:`ConfigError`."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    if "domain_length" not in cfg:
        cfg["domain_length"] = 16.0 * math.sqrt(cfg["horizon"])
    # domain checks owned by the numerical modules
    from .spectral_models import QuadratureSpec, SpatialSpectralModel, TemporalCovarianceModel

    m = cfg["model"]
    SpatialSpectralModel(m["dim"], m["alpha"])
    TemporalCovarianceModel(m["beta"])
    QuadratureSpec(**cfg["quadrature"])
    T = cfg["horizon"]
    for t in cfg["moments"]["times"]:
        if t > T:
            raise ConfigError(f"moment time {t} exceeds the horizon {T}")
    for t, _ in cfg["kernels"]["series_points"]:
        if not 0 <= t <= T:
            raise ConfigError(f"series time {t} outside [0, {T}]")
    if cfg["kernels"]["n_grid"] < 1:
        raise ConfigError("the kernel time grid must contain at least one point")
    for t, x in cfg["simulation"]["points"]:
        if not (0 <= t <= T and 0 <= x <= cfg["domain_length"]):
            raise ConfigError(f"simulation point ({t}, {x}) outside [0, T] x [0, L]")
    eta = cfg["moments"]["eta"]
    if not m["alpha"] / 2 < eta < 1:
        raise ConfigError(f"moments.eta must lie in (alpha/2, 1), got {eta}")
    return cfg


def load(path: str | Path | None) -> dict:
    if path is None:
        return validate({})
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return validate(raw)

"""Run configuration: a single JSON file of nested key/value settings.

Missing keys fall back to the synthetic-experiment defaults (sigma 0.23,
eps_y 6, bounds [0, 35], tau 0, n 10000, P 0.8), so a minimal config can be
just ``{}`` plus a points list or grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .certify import MODE_BASE, MODES
from .errors import ConfigError
from .models import KIND_SUBPROCESS, ModelSpec, OutputBounds
from .validate import ValidationSpec

_MODEL_KEYS = {"kind", "input_dim", "output_dim", "parameters", "command", "timeout"}
_BOUNDS_KEYS = {"lower", "upper"}
_VALIDATION_KEYS = {"trials", "directions", "radius_policy", "policy_value",
                    "penalty_k", "radius_grid"}
_TOP_KEYS = {"model", "points", "grid", "reference", "eps_y", "bounds", "sigma",
             "n", "target_p", "alpha", "tau", "beta", "mode", "seed", "diss",
             "groups", "validation", "out_dir"}

DEFAULTS = {
    "sigma": 0.23,
    "n": 10000,
    "target_p": 0.8,
    "alpha": 0.001,
    "tau": 0.0,
    "beta": 1.5,
    "eps_y": 6.0,
    "mode": MODE_BASE,
    "seed": 0,
    "diss": "abs-diff",
}
DEFAULT_BOUNDS = (0.0, 35.0)


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    points: np.ndarray
    reference: np.ndarray | None
    eps_y: np.ndarray
    bounds: OutputBounds
    sigma: float
    n: int
    target_p: float
    alpha: float
    tau: float
    beta: float
    mode: str
    seed: int
    diss: str
    groups: tuple[tuple[int, ...], ...] | None
    validation: ValidationSpec
    out_dir: str | None = None
    timeout: float = 30.0

    def override(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def _reject_unknown(mapping: dict, allowed: set, context: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} field(s): {', '.join(sorted(unknown))}")


def _integer_grid(low: float, high: float, dim: int) -> np.ndarray:
    """All integer points strictly inside (low, high) in every coordinate."""
    lo = int(np.floor(low)) + 1
    hi = int(np.ceil(high)) - 1
    if hi < lo:
        raise ConfigError(f"grid ({low}, {high}) contains no interior integers")
    axis = np.arange(lo, hi + 1, dtype=float)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _parse_model(raw: dict) -> tuple[ModelSpec, float]:
    _reject_unknown(raw, _MODEL_KEYS, "model")
    kind = raw.get("kind", "synthetic-sine")
    timeout = float(raw.get("timeout", 30.0))
    spec = ModelSpec(
        kind=kind,
        input_dim=int(raw.get("input_dim", 2)),
        output_dim=int(raw.get("output_dim", 1)),
        parameters=tuple(raw.get("parameters", ())),
        command=raw.get("command"),
    )
    if spec.kind == KIND_SUBPROCESS and not spec.command:
        raise ConfigError("model.command is required for the subprocess kind")
    return spec, timeout


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    _reject_unknown(raw, _TOP_KEYS, "config")
    model, timeout = _parse_model(raw.get("model", {}))

    has_points = raw.get("points") is not None
    has_grid = raw.get("grid") is not None
    if has_points and has_grid:
        raise ConfigError("give either points or grid, not both")
    if has_points:
        points = np.atleast_2d(np.asarray(raw["points"], dtype=float))
    elif has_grid:
        grid = raw["grid"]
        _reject_unknown(grid, {"min", "max"}, "grid")
        points = _integer_grid(float(grid.get("min", -1.0)),
                               float(grid.get("max", 5.0)), model.input_dim)
    else:
        points = _integer_grid(-1.0, 5.0, model.input_dim)
    if points.shape[1] != model.input_dim:
        raise ConfigError(
            f"points have dimension {points.shape[1]}, model expects {model.input_dim}")

    reference = None
    if raw.get("reference") is not None:
        reference = np.atleast_2d(np.asarray(raw["reference"], dtype=float))
        if reference.shape != (points.shape[0], model.output_dim):
            raise ConfigError("reference must provide one output vector per point")

    eps_raw = raw.get("eps_y", DEFAULTS["eps_y"])
    eps_y = np.atleast_1d(np.asarray(eps_raw, dtype=float))
    if eps_y.shape[0] == 1 and model.output_dim > 1:
        eps_y = np.full(model.output_dim, eps_y[0])
    if eps_y.shape[0] != model.output_dim:
        raise ConfigError(f"eps_y must be a scalar or length {model.output_dim}")
    if np.any(eps_y <= 0.0):
        raise ConfigError("eps_y must be positive")

    braw = raw.get("bounds", {"lower": DEFAULT_BOUNDS[0], "upper": DEFAULT_BOUNDS[1]})
    _reject_unknown(braw, _BOUNDS_KEYS, "bounds")
    try:
        bounds = OutputBounds(
            np.atleast_1d(np.asarray(braw.get("lower", DEFAULT_BOUNDS[0]), dtype=float)),
            np.atleast_1d(np.asarray(braw.get("upper", DEFAULT_BOUNDS[1]), dtype=float)),
        ).broadcast(model.output_dim)
    except Exception as exc:
        raise ConfigError(f"bounds: {exc}") from exc

    mode = raw.get("mode", DEFAULTS["mode"])
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    vraw = raw.get("validation", {})
    _reject_unknown(vraw, _VALIDATION_KEYS, "validation")
    try:
        validation = ValidationSpec(
            trials=int(vraw.get("trials", 20)),
            directions=int(vraw.get("directions", 20)),
            radius_policy=vraw.get("radius_policy", "at-certificate"),
            policy_value=vraw.get("policy_value"),
            penalty_k=float(vraw.get("penalty_k", 150.0)),
            radius_grid=tuple(vraw.get("radius_grid", ())),
        )
    except Exception as exc:
        raise ConfigError(f"validation: {exc}") from exc

    groups = raw.get("groups")
    if groups is not None:
        groups = tuple(tuple(int(i) for i in g) for g in groups)

    def _num(key, cast):
        try:
            return cast(raw.get(key, DEFAULTS[key]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key}: {exc}") from exc

    cfg = RunConfig(
        model=model,
        points=points,
        reference=reference,
        eps_y=eps_y,
        bounds=bounds,
        sigma=_num("sigma", float),
        n=_num("n", int),
        target_p=_num("target_p", float),
        alpha=_num("alpha", float),
        tau=_num("tau", float),
        beta=_num("beta", float),
        mode=mode,
        seed=_num("seed", int),
        diss=raw.get("diss", DEFAULTS["diss"]),
        groups=groups,
        validation=validation,
        out_dir=raw.get("out_dir"),
        timeout=timeout,
    )
    if not 0.0 < cfg.target_p < 1.0:
        raise ConfigError("field target_p must lie in (0, 1)")
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError("field alpha must lie in (0, 1)")
    if cfg.sigma <= 0.0:
        raise ConfigError("field sigma must be positive")
    if cfg.n < 1:
        raise ConfigError("field n must be >= 1")
    return cfg

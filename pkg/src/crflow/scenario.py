"""Scenario configuration: parsing, validation, and deterministic hashing.

A scenario is a single JSON document declaring the strategy space, the
mutation kernel, the vital rates, the initial state, and integrator
control. Every output file embeds the content hash of the effective
configuration, so reruns are byte-for-byte reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from crflow.dynamics import StepControl, SystemState
from crflow.errors import ConfigError, ValidationError
from crflow.kernel import (
    MutationKernel,
    local_mutation_kernel,
    pure_selection_kernel,
    validate_stochastic,
)
from crflow.measure import DiscreteMeasure
from crflow.rates import (
    MortalitySpec,
    UptakeSpec,
    VitalRates,
    default_truncation_level,
    truncate,
    validate_assumptions,
)
from crflow.space import StrategySpace, build_grid, euclidean_metric


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def scenario_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: scenario must be a JSON object")
    return cfg


def build_space(spec: dict) -> StrategySpace:
    if "grid" in spec:
        g = spec["grid"]
        bounds = g["bounds"]
        counts = g["counts"]
        dim = g.get("dim", len(bounds))
        return build_grid(dim, bounds, counts)
    if "points" in spec:
        points = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        if "metric" in spec:
            metric = np.asarray(spec["metric"], dtype=float)
        else:
            metric = euclidean_metric(points)
        return StrategySpace(points=points, metric=metric)
    raise ConfigError("space spec needs either 'grid' or 'points'")


def _resolve_coeff(value, space: StrategySpace, name: str):
    """Scalar, per-atom list, or affine form of the atom coordinates."""
    if isinstance(value, dict):
        if "affine" not in value:
            raise ConfigError(f"unknown coefficient form for {name}: {value}")
        aff = value["affine"]
        const = float(aff.get("const", 0.0))
        slope = np.asarray(aff.get("slope", [0.0] * space.dim), dtype=float)
        if slope.shape != (space.dim,):
            raise ConfigError(f"{name}: slope must have one entry per axis")
        return const + space.points @ slope
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    if arr.shape != (space.size,):
        raise ConfigError(f"{name}: expected {space.size} per-atom values")
    return arr


def build_kernel(spec: dict, space: StrategySpace) -> MutationKernel:
    renorm = bool(spec.get("renormalize", False))
    if "matrix" in spec:
        rows = np.asarray(spec["matrix"], dtype=float)
        report = validate_stochastic(rows, space)
        if not report.ok and not renorm:
            raise ValidationError(
                "kernel matrix is not row-stochastic: "
                + "; ".join(report.messages)
            )
        return MutationKernel(space, rows, renormalize=renorm)
    family = spec.get("family")
    if family == "pure_selection":
        return pure_selection_kernel(space)
    if family == "gaussian":
        return local_mutation_kernel(space, float(spec["width"]))
    raise ConfigError(f"unknown kernel family {family!r}")


def build_rates(spec: dict, space: StrategySpace) -> VitalRates:
    up = spec["uptake"]
    mo = spec["mortality"]
    uptake = UptakeSpec.build(
        up["family"],
        space.size,
        _resolve_coeff(up["b"], space, "uptake.b"),
        a=_resolve_coeff(up["a"], space, "uptake.a") if "a" in up else None,
    )
    mortality = MortalitySpec.build(
        mo["family"],
        space.size,
        _resolve_coeff(mo["d0"], space, "mortality.d0"),
        c=_resolve_coeff(mo["c"], space, "mortality.c") if "c" in mo else None,
    )
    return VitalRates(
        inflow=float(spec["inflow"]),
        dilution=float(spec["dilution"]),
        uptake=uptake,
        mortality=mortality,
    )


def build_control(spec: dict) -> StepControl:
    method = spec.get("method", "rk4")
    if method not in ("rk4", "adaptive", "picard"):
        raise ConfigError(f"unknown integrator {method!r}")
    return StepControl(
        method=method if method != "picard" else "rk4",
        dt=float(spec.get("dt", 1e-3)),
        t_end=float(spec["t_end"]),
        tolerance=float(spec.get("tolerance", 1e-8)),
        record_every=int(spec.get("record_every", 1)),
    )


@dataclass
class Scenario:
    """A fully validated scenario ready to run."""

    cfg: dict
    space: StrategySpace
    kernel: MutationKernel
    rates: VitalRates            # truncated at `truncation`
    state0: SystemState
    control: StepControl
    truncation: float
    method: str                  # rk4 | adaptive | picard
    picard_options: dict
    seed: int
    hash: str


def build_scenario(cfg: dict, seed_override: int | None = None) -> Scenario:
    """Validate a configuration dict and assemble the run inputs.

    Raises ConfigError for structural problems and ValidationError when the
    kernel or the rate assumptions fail their checks (override the latter
    with "allow_invalid_rates": true).
    """
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    for key in ("space", "kernel", "rates", "initial", "control"):
        if key not in cfg:
            raise ConfigError(f"scenario missing section {key!r}")
    space = build_space(cfg["space"])
    kernel = build_kernel(cfg["kernel"], space)
    rates = build_rates(cfg["rates"], space)

    init = cfg["initial"]
    S0 = float(init["S"])
    weights = np.asarray(init["weights"], dtype=float)
    if weights.shape != (space.size,):
        raise ConfigError(
            f"initial weights: expected {space.size} values, got {weights.shape}"
        )
    if S0 < 0 or np.any(weights < 0):
        raise ConfigError("initial state must lie in the nonnegative cone")
    state0 = SystemState(S0, DiscreteMeasure(space, weights))

    truncation = cfg.get("truncation")
    if truncation is None:
        truncation = default_truncation_level(rates, S0, float(weights.sum()))
    truncation = float(truncation)
    rates = truncate(rates, truncation)

    report = validate_assumptions(rates, space, truncation)
    if not report.ok and not cfg.get("allow_invalid_rates", False):
        raise ValidationError(
            "rate assumptions failed: " + "; ".join(report.messages)
        )

    control_spec = cfg["control"]
    control = build_control(control_spec)
    method = control_spec.get("method", "rk4")
    picard_options = {
        "lam": control_spec.get("lambda"),
        "tol": float(control_spec.get("picard_tol", 1e-12)),
        "nodes": int(control_spec.get("nodes", 512)),
        "max_iter": int(control_spec.get("max_iter", 200)),
    }

    return Scenario(
        cfg=cfg,
        space=space,
        kernel=kernel,
        rates=rates,
        state0=state0,
        control=control,
        truncation=truncation,
        method=method,
        picard_options=picard_options,
        seed=int(cfg.get("seed", 0)),
        hash=scenario_hash(cfg),
    )


def load_measure_file(path):
    """Measure file: a space spec plus (atom index, weight) pairs."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "space" not in doc or "weights" not in doc:
        raise ConfigError(f"{path}: measure file needs 'space' and 'weights'")
    space = build_space(doc["space"])
    w = np.zeros(space.size)
    for entry in doc["weights"]:
        idx, val = entry
        idx = int(idx)
        if not 0 <= idx < space.size:
            raise ConfigError(f"{path}: atom index {idx} out of range")
        w[idx] += float(val)
    return DiscreteMeasure(space, w)

"""Scenario configuration: strict parsing, defaults, recipe construction.

Scenarios are JSON files. Parsing is strict: any key not in the schema
fails before any computation, listing the offending paths. Every stochastic
stage draws from streams derived from the single mandatory seed, so a
scenario re-run is bit-identical.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import fields as fd
from . import sets as st
from .sets import Box


class ConfigError(ValueError):
    pass


_MISSING = object()

# schema: nested dict of key -> (default or _MISSING for required); leaves
# with value None accept any JSON payload (validated by the builder).
SCHEMA = {
    "name": _MISSING,
    "seed": _MISSING,
    "horizon": 1.0,
    "threads": 0,
    "pipeline": _MISSING,
    "domain": {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]},
    "set": {
        "kind": "none",
        "keep_ratio": 0.25,
        "depth": 10,
        "power": 1.0,
        "count": 1000,
        "embed_dim": 0,
        "time": {"kind": "interval", "a": 0.0, "b": None,
                 "keep_ratio": 0.25, "depth": 8},
        "space": {"kind": "cantor", "keep_ratio": 0.25, "depth": 10,
                  "power": 1.0, "count": 1000, "points": None},
        "drift": {"velocity": [1.0, 0.0], "exponent": 0.5},
    },
    "field": {
        "background": {"type": "zero", "velocity": None, "omega": 1.0,
                       "center": [0.0, 0.0], "matrix": None, "strength": -1.0},
        "vortices": None,
    },
    "dimension": {
        "eps_max": 0.25, "eps_min": 0.000244140625, "base": 2.0,
        "minkowski_samples": 200000, "compare_methods": True,
        "expected_dim": None, "tolerance": 0.05,
    },
    "print": {
        "alphas": [1.5], "betas": ["inf"], "eps_floor": 0.002,
        "eps_max": 0.25, "time_slices": 13, "samples": 40000, "margin": 0.1,
    },
    "conditions": {
        "p": 1.0, "q": 3.0, "holder_exponent": 1.0, "sup_section_dim": 0.0,
        "excision": 0.001, "spatial_resolution": 48, "time_slices": 9,
        "sectional": False, "fail_on_violation": False,
    },
    "flow": {
        "count": 10000, "sampling": "grid", "output_times": 17,
        "h_max": 0.00390625, "c_step": 0.1, "h_floor": 1e-08,
        "delta_min": 1e-06, "distance_mode": "auto",
        "export_max": 100, "residual_tolerance": 0.001,
        "compressibility_boxes": None, "compressibility_min_hits": 100,
    },
    "avoidance": {
        "r0": 0.25, "delta_k_min": 4, "delta_k_max": 10, "delta_base": 2.0,
        "excision": None, "samples": 200000, "tolerance": 0.1,
    },
    "transport": {
        "resolutions": [64], "time_steps_per_unit": 256,
        "interpolation": "bilinear", "boundary": "constant",
        "initial_center": [0.35, 0.0], "initial_sigma": 0.12,
        "betas": ["square"], "bump_center_time": None, "bump_center": None,
        "bump_radius_time": None, "bump_radius": None,
        "gronwall_margin": 0.01, "conservation_tolerance": 0.01,
        "cfl_bound": 8.0,
    },
    "vortex_wave": {
        "omega_center": [0.4, 0.0], "omega_sigma": 0.15, "omega_amplitude": 1.0,
        "grid_resolution": 24, "grid_lo": [-0.2, -0.6], "grid_hi": [1.0, 0.6],
        "z0": [-0.4, 0.0], "strength": 1.0, "blob_radius": None,
        "normalized": False, "h_max": 0.001953125, "output_times": 33,
        "delta_min": 1e-06, "export_max": 200,
        "r0": 0.2, "delta_k_min": 4, "delta_k_max": 8, "delta_base": 2.0,
    },
}


def _validate(node, schema, path, errors):
    if not isinstance(node, dict):
        errors.append(f"{path or '<root>'}: expected an object")
        return {}
    out = {}
    for key, value in node.items():
        if key not in schema:
            errors.append(f"{path}{key}: unknown key")
    for key, default in schema.items():
        here = f"{path}{key}"
        if key in node:
            if isinstance(default, dict):
                out[key] = _validate(node[key], default, here + ".", errors)
            else:
                out[key] = node[key]
        elif default is _MISSING:
            errors.append(f"{here}: missing required key")
        elif isinstance(default, dict):
            out[key] = _validate({}, default, here + ".", errors)
        else:
            out[key] = default
    return out


def load_config(path: str | Path) -> dict:
    raw = json.loads(Path(path).read_text())
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    errors: list[str] = []
    cfg = _validate(raw, SCHEMA, "", errors)
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    known = {"dimension", "print", "conditions", "flow", "avoidance",
             "transport", "vortex-wave"}
    bad = [p for p in cfg["pipeline"] if p not in known]
    if bad:
        raise ConfigError(f"unknown pipeline stages {bad}; known: {sorted(known)}")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer (no wall-clock entropy)")
    return cfg


def exponent(v) -> float:
    if v in ("inf", "Infinity", None):
        return math.inf
    return float(v)


def domain_box(cfg: dict) -> Box:
    return Box(np.asarray(cfg["domain"]["lo"], dtype=float),
               np.asarray(cfg["domain"]["hi"], dtype=float))


# ---------------------------------------------------------------------------
# recipe builders


def build_spatial(spec: dict, horizon: float) -> st.InitialSet:
    kind = spec["kind"]
    if kind == "cantor":
        return st.make_cantor(spec["keep_ratio"], spec["depth"])
    if kind == "reciprocal":
        return st.make_reciprocal_powers(spec["power"], spec["count"])
    if kind == "points":
        pts = np.asarray(spec["points"], dtype=float)
        return st.InitialSet(np.atleast_2d(pts), ambient_dim=np.atleast_2d(pts).shape[1],
                             generator_tag="points")
    raise ConfigError(f"unknown spatial set kind {kind!r}")


def build_set(cfg: dict):
    """Singular-set recipe -> (SpaceTimeSet | None, trajectories | None)."""
    spec = cfg["set"]
    kind = spec["kind"]
    horizon = cfg["horizon"]
    if kind == "none":
        return None, None
    if kind == "cantor":
        base = st.make_cantor(spec["keep_ratio"], spec["depth"])
        if spec["embed_dim"]:
            base = base.embed(spec["embed_dim"])
        return st.make_product((0.0, horizon), base, horizon=horizon), None
    if kind == "reciprocal":
        base = st.make_reciprocal_powers(spec["power"], spec["count"])
        if spec["embed_dim"]:
            base = base.embed(spec["embed_dim"])
        return st.make_product((0.0, horizon), base, horizon=horizon), None
    if kind == "product":
        space = build_spatial(spec["space"], horizon)
        if spec["embed_dim"]:
            space = space.embed(spec["embed_dim"])
        tspec = spec["time"]
        if tspec["kind"] == "interval":
            b = tspec["b"] if tspec["b"] is not None else horizon
            return st.make_product((float(tspec["a"]), float(b)), space, horizon=horizon), None
        if tspec["kind"] == "cantor":
            times = st.make_cantor(tspec["keep_ratio"], tspec["depth"]).points.ravel() * horizon
            return st.make_product(times, space, horizon=horizon), None
        raise ConfigError(f"unknown time factor kind {tspec['kind']!r}")
    if kind == "graph":
        space = build_spatial(spec["space"], horizon)
        if spec["embed_dim"]:
            space = space.embed(spec["embed_dim"])
        vel = np.asarray(spec["drift"]["velocity"], dtype=float)
        expo = float(spec["drift"]["exponent"])
        bundle = st.TrajectoryBundle(
            lambda t, x: x + (abs(t) ** expo) * vel,
            holder_exponent=expo,
            holder_constant=float(np.linalg.norm(vel)),
            horizon=horizon,
        )
        return st.make_graph(space, bundle), None
    if kind == "vortex_graph":
        trajectories = [v.trajectory for v in build_field(cfg).vortices]
        if not trajectories:
            raise ConfigError("vortex_graph set needs at least one vortex in the field")
        z0 = np.stack([np.atleast_1d(tr(0.0)).reshape(-1) for tr in trajectories])
        initial = st.InitialSet(z0, ambient_dim=2, generator_tag="vortex-start")
        alpha = min(tr.holder_exponent for tr in trajectories)
        K = max(tr.holder_constant for tr in trajectories) or 1e-12
        bundle = st.TrajectoryBundle(
            lambda t, x: np.stack([np.atleast_1d(tr(t)).reshape(-1) for tr in trajectories]),
            holder_exponent=alpha, holder_constant=K, horizon=horizon)
        return st.GraphSet(initial, bundle), trajectories
    raise ConfigError(f"unknown set kind {kind!r}")


def build_trajectory(spec: dict):
    kind = spec.get("type")
    if kind == "fixed":
        return fd.FixedTrajectory(np.asarray(spec["point"], dtype=float))
    if kind == "circular":
        return fd.CircularTrajectory(tuple(spec["center"]), spec["radius"],
                                     spec["omega"], spec.get("phase", 0.0))
    if kind == "piecewise_linear":
        return fd.PiecewiseLinearTrajectory(np.asarray(spec["times"], dtype=float),
                                            np.asarray(spec["points"], dtype=float))
    if kind == "power":
        return fd.PowerDriftTrajectory(np.asarray(spec["start"], dtype=float),
                                       np.asarray(spec["velocity"], dtype=float),
                                       spec["exponent"])
    raise ConfigError(f"unknown trajectory type {kind!r}")


def build_background(spec: dict, n: int):
    kind = spec["type"]
    if kind == "zero":
        return fd.ZeroBackground(n)
    if kind == "uniform":
        return fd.UniformBackground(np.asarray(spec["velocity"], dtype=float))
    if kind == "rotation":
        return fd.RotationBackground(spec["omega"], tuple(spec["center"]))
    if kind == "linear":
        return fd.LinearBackground(np.asarray(spec["matrix"], dtype=float))
    if kind == "radial":
        return fd.RadialBackground(spec["strength"], n)
    raise ConfigError(f"unknown background type {kind!r}")


def build_field(cfg: dict) -> fd.FieldSpec:
    spec = cfg["field"]
    n = len(cfg["domain"]["lo"])
    background = build_background(spec["background"], n)
    vortices = []
    for v in spec["vortices"] or []:
        allowed = {"trajectory", "circulation", "normalized"}
        extra = set(v) - allowed
        if extra:
            raise ConfigError(f"unknown vortex keys {sorted(extra)}")
        vortices.append(fd.VortexTerm(build_trajectory(v["trajectory"]),
                                      float(v["circulation"]),
                                      bool(v.get("normalized", False))))
    return fd.FieldSpec(background, tuple(vortices), n=n, horizon=cfg["horizon"])


def delta_ladder(k_min: int, k_max: int, base: float = 2.0) -> np.ndarray:
    return base ** (-np.arange(k_min, k_max + 1, dtype=float))

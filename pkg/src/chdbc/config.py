"""Strict INI run configuration.

Every section and key is optional except ``[scenario] name``; anything not
listed in :data:`SCHEMA` (or in the scenario's own key set) is rejected so
that a typo never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .grid import GridSpec
from .model import DOUBLE_WELL, ModelParams


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("empty coefficient list")
    return tuple(float(p) for p in parts)


SCHEMA = {
    "grid": {"lx": float, "ly": float, "nx": int, "ny": int},
    "params": {"epsilon": float, "sigma": float, "alpha": float, "f_coeffs": _floats, "g_coeffs": _floats},
    "stepper": {"dt": float, "t_end": float, "cadence": int, "linear_tol": float, "snapshot_every": int},
    "diagnostics": {"kappa1": float, "kappa2": float},
    "scenario": {"name": str},
    "output": {"directory": str},
}

# keys accepted in [scenario] besides ``name``, with defaults
SCENARIO_KEYS = {
    "constant-equilibrium": {"value": 1.0, "theta": 0.0},
    "spinodal": {"amplitude": 0.05, "seed": 7, "theta": 1.0, "mean": 0.0, "layer": 0.0, "curl": 0.0},
    "mean-ode": {"amplitude": 0.05, "seed": 7, "theta": 1.0, "mean": 0.0, "chi1_mean": 0.2, "curl": 0.0},
}


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    options: dict = field(default_factory=dict)

    def get(self, key: str):
        return self.options.get(key, SCENARIO_KEYS[self.name][key])


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: ModelParams
    dt: float
    t_end: float
    cadence: int
    linear_tol: float
    snapshot_every: int
    kappa1: float
    kappa2: float
    scenario: ScenarioSpec
    output: Path

    def with_output(self, path: str | Path) -> "RunConfig":
        return replace(self, output=Path(path))


def _convert(section: str, key: str, raw: str, conv):
    try:
        val = conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"[{section}] {key}: must be finite")
    return val


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    vals: dict[str, dict] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if section == "scenario" and key != "name":
                vals[section][key] = raw
                continue
            if key not in SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            vals[section][key] = _convert(section, key, raw, SCHEMA[section][key])

    sc = vals["scenario"]
    name = sc.pop("name", None)
    if name is None:
        raise ConfigError("[scenario] name is required")
    if name not in SCENARIO_KEYS:
        raise ConfigError(f"[scenario] unknown scenario {name!r}; choose from {sorted(SCENARIO_KEYS)}")
    opts = {}
    for key, raw in sc.items():
        if key not in SCENARIO_KEYS[name]:
            raise ConfigError(f"[scenario] key {key!r} is not valid for scenario {name!r}")
        conv = int if key == "seed" else float
        opts[key] = _convert("scenario", key, raw, conv)
    if "seed" in opts and opts["seed"] < 0:
        raise ConfigError("[scenario] seed must be nonnegative")
    if opts.get("amplitude", 0.0) < 0:
        raise ConfigError("[scenario] amplitude must be nonnegative")

    g = vals["grid"]
    try:
        grid = GridSpec(g.get("lx", 2 * math.pi), g.get("ly", 2 * math.pi), g.get("nx", 64), g.get("ny", 33))
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None
    p = vals["params"]
    try:
        params = ModelParams(p.get("epsilon", 1.0), p.get("sigma", 1.0), p.get("alpha", 1.0),
                             p.get("f_coeffs", DOUBLE_WELL), p.get("g_coeffs", DOUBLE_WELL))
    except ValueError as exc:
        raise ConfigError(f"[params] {exc}") from None

    st = vals["stepper"]
    dt = st.get("dt", 1e-3)
    t_end = st.get("t_end", 1.0)
    cadence = st.get("cadence", 1)
    linear_tol = st.get("linear_tol", 1e-10)
    snap = st.get("snapshot_every", 0)
    if not dt > 0:
        raise ConfigError("[stepper] dt must be positive")
    if t_end < 0:
        raise ConfigError("[stepper] t_end must be nonnegative")
    nsteps = t_end / dt
    if abs(nsteps - round(nsteps)) > 1e-9 * max(1.0, nsteps):
        raise ConfigError(f"[stepper] t_end={t_end} is not a whole number of steps of dt={dt}")
    if cadence < 1 or snap < 0 or not linear_tol > 0:
        raise ConfigError("[stepper] cadence >= 1, snapshot_every >= 0 and linear_tol > 0 are required")

    d = vals["diagnostics"]
    k1, k2 = d.get("kappa1", 1e-3), d.get("kappa2", 1e-2)
    if not (k1 > 0 and k2 > 0):
        raise ConfigError("[diagnostics] kappa1 and kappa2 must be positive")

    out = Path(vals["output"].get("directory", "run"))
    return RunConfig(grid, params, dt, t_end, cadence, linear_tol, snap, k1, k2, ScenarioSpec(name, opts), out)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))

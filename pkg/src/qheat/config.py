"""Run configuration: strict TOML ingestion with mandatory unit tags.

Every dimensioned quantity must be written as an inline table
``name = { value = ..., unit = "..." }`` with a unit from the accepted list
for that quantity; unknown keys anywhere are fatal. The unit ambiguities in
the source material make silent defaults dangerous, so nothing is inferred.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import ControllerSpec
from .engine import BathSet, EngineSpec
from .joint import JointSpec
from .learner import TemperatureSchedule
from .units import NEWTON_TO_EV_PER_NM, mass_from_grams, rate_from_per_second


class ConfigError(ValueError):
    """Configuration file failed schema validation."""


# unit name -> multiplicative factor into the internal system
UNIT_TABLES = {
    "energy": {"eV": 1.0},
    "temperature": {"K": 1.0},
    "coupling": {"eV/nm": 1.0, "N": NEWTON_TO_EV_PER_NM},
    "stiffness": {"eV/nm^2": 1.0, "N/nm": NEWTON_TO_EV_PER_NM},
    "force": {"eV/nm": 1.0, "N": NEWTON_TO_EV_PER_NM},
    "mass": {"g": None, "kg": None},  # handled by mass_from_grams
    "rate": {"eV": 1.0, "1/s": None},  # handled by rate_from_per_second
    "rate_prefactor": {"1/eV^2": 1.0},
    "position": {"nm": 1.0},
    "time": {"hbar/eV": 1.0},
}


def _convert(quantity: str, value: float, unit: str, path: str) -> float:
    table = UNIT_TABLES[quantity]
    if unit not in table:
        raise ConfigError(
            f"{path}: unit {unit!r} not accepted for {quantity} "
            f"(accepted: {sorted(table)})"
        )
    if quantity == "mass":
        grams = value if unit == "g" else value * 1e3
        return mass_from_grams(grams)
    if quantity == "rate" and unit == "1/s":
        return rate_from_per_second(value)
    return value * table[unit]


def _tagged(section: dict, key: str, quantity: str, path: str, default=None):
    if key not in section:
        return default
    raw = section.pop(key)
    if not isinstance(raw, dict) or set(raw) != {"value", "unit"}:
        raise ConfigError(
            f"{path}.{key}: dimensioned values need the form "
            '{ value = ..., unit = "..." }'
        )
    value, unit = raw["value"], raw["unit"]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key}.value: expected a number, got {value!r}")
    if not isinstance(unit, str):
        raise ConfigError(f"{path}.{key}.unit: expected a string, got {unit!r}")
    return _convert(quantity, float(value), unit, f"{path}.{key}")


def _require(section: dict, key: str, quantity: str, path: str) -> float:
    if key not in section:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return _tagged(section, key, quantity, path)


def _plain(section: dict, key: str, path: str, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return default
    value = section.pop(key)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (isinstance(value, bool) and kind is not bool):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def _no_leftovers(section: dict, path: str):
    if section:
        raise ConfigError(f"{path}: unknown key(s) {sorted(section)}")


@dataclass(frozen=True)
class GridConfig:
    x_min: float
    x_max: float
    n_points: int


@dataclass(frozen=True)
class SweepConfig:
    T13_min: float
    T13_max: float
    T23_min: float
    T23_max: float
    n_points: int


@dataclass(frozen=True)
class JointConfig:
    joint: JointSpec
    t_max: float
    dt: Optional[float]
    stop_tol: float


@dataclass(frozen=True)
class AdaptConfig:
    schedule_path: Optional[str]


@dataclass(frozen=True)
class RunConfig:
    engine: EngineSpec
    baths: BathSet
    controller: ControllerSpec
    output_dir: str
    seed: Optional[int]
    steady_x: Optional[float]
    grid: Optional[GridConfig]
    adapt: Optional[AdaptConfig]
    sweep: Optional[SweepConfig]
    joint: Optional[JointConfig]


def _parse_engine(section: dict) -> EngineSpec:
    path = "engine"
    spec = EngineSpec(
        e1=_require(section, "e1", "energy", path),
        e2=_require(section, "e2", "energy", path),
        e3=_require(section, "e3", "energy", path),
        gamma0=_require(section, "gamma0", "rate_prefactor", path),
        g1=_require(section, "g1", "coupling", path),
        g2=_require(section, "g2", "coupling", path),
        g3=_require(section, "g3", "coupling", path),
    )
    _no_leftovers(section, path)
    return spec


def _parse_baths(section: dict) -> BathSet:
    path = "baths"
    t13 = _require(section, "T13", "temperature", path)
    t23 = _require(section, "T23", "temperature", path)
    gamma12 = _tagged(section, "gamma12", "rate", path)
    _no_leftovers(section, path)
    return BathSet(T13=t13, T23=t23, gamma12=gamma12)


def _parse_controller(section: dict) -> ControllerSpec:
    path = "controller"
    ctrl = ControllerSpec(
        mass=_require(section, "mass", "mass", path),
        kappa=_require(section, "kappa", "stiffness", path),
        xi=_require(section, "xi", "rate", path),
        temperature=_require(section, "temperature", "temperature", path),
        force=_tagged(section, "force", "force", path, default=0.0),
    )
    _no_leftovers(section, path)
    return ctrl


def _parse_grid(section: dict, path: str) -> GridConfig:
    grid = GridConfig(
        x_min=_require(section, "x_min", "position", path),
        x_max=_require(section, "x_max", "position", path),
        n_points=_plain(section, "n_points", path, int, required=True),
    )
    _no_leftovers(section, path)
    if grid.n_points < 2 or grid.x_max <= grid.x_min:
        raise ConfigError(f"{path}: need n_points >= 2 and x_max > x_min")
    return grid


def _parse_sweep(section: dict) -> SweepConfig:
    path = "sweep"
    cfg = SweepConfig(
        T13_min=_require(section, "T13_min", "temperature", path),
        T13_max=_require(section, "T13_max", "temperature", path),
        T23_min=_require(section, "T23_min", "temperature", path),
        T23_max=_require(section, "T23_max", "temperature", path),
        n_points=_plain(section, "n_points", path, int, required=True),
    )
    _no_leftovers(section, path)
    if cfg.n_points < 2:
        raise ConfigError(f"{path}: n_points must be >= 2")
    return cfg


def _parse_joint(section: dict) -> JointConfig:
    path = "joint"
    fock_dim = _plain(section, "fock_dim", path, int, required=True)
    coupling_scale = _plain(section, "coupling_scale", path, float, default=1.0)
    grid_section = section.pop("grid", None)
    if grid_section is None:
        raise ConfigError(f"{path}: missing required [joint.grid] table")
    grid = _parse_grid(dict(grid_section), f"{path}.grid")
    t_max = _require(section, "t_max", "time", path)
    dt = _tagged(section, "dt", "time", path) if "dt" in section else None
    stop_tol = _plain(section, "stop_tol", path, float, default=1e-9)
    _no_leftovers(section, path)
    try:
        joint = JointSpec(
            fock_dim=fock_dim,
            coupling_scale=coupling_scale,
            x_min=grid.x_min,
            x_max=grid.x_max,
            n_points=grid.n_points,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return JointConfig(joint=joint, t_max=t_max, dt=dt, stop_tol=stop_tol)


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}")

    for name in ("engine", "baths", "controller"):
        if name not in data:
            raise ConfigError(f"{path}: missing required [{name}] section")

    engine = _parse_engine(dict(data.pop("engine")))
    try:
        baths = _parse_baths(dict(data.pop("baths")))
        controller = _parse_controller(dict(data.pop("controller")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    output = dict(data.pop("output", {}))
    output_dir = _plain(output, "dir", "output", str, default="out")
    _no_leftovers(output, "output")

    seed = _plain(data, "seed", "<top level>", int, default=None)

    steady_x = None
    if "steady" in data:
        sect = dict(data.pop("steady"))
        steady_x = _require(sect, "x", "position", "steady")
        _no_leftovers(sect, "steady")

    grid = None
    if "landscape" in data:
        grid = _parse_grid(dict(data.pop("landscape")), "landscape")

    adapt = None
    if "adapt" in data:
        sect = dict(data.pop("adapt"))
        adapt = AdaptConfig(schedule_path=_plain(sect, "schedule", "adapt", str))
        _no_leftovers(sect, "adapt")

    sweep = None
    if "sweep" in data:
        sweep = _parse_sweep(dict(data.pop("sweep")))

    joint = None
    if "joint" in data:
        joint = _parse_joint(dict(data.pop("joint")))

    _no_leftovers(data, "<top level>")
    return RunConfig(
        engine=engine,
        baths=baths,
        controller=controller,
        output_dir=output_dir,
        seed=seed,
        steady_x=steady_x,
        grid=grid,
        adapt=adapt,
        sweep=sweep,
        joint=joint,
    )


def load_schedule(path) -> TemperatureSchedule:
    """Parse a temperature schedule file ([[step]] tables, K temperatures)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"schedule file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}")

    sigma_T = _plain(data, "sigma_T", "<top level>", float, default=0.0)
    seed = _plain(data, "seed", "<top level>", int, default=None)
    steps = data.pop("step", None)
    if not steps:
        raise ConfigError(f"{path}: schedule needs at least one [[step]] table")
    times, t13s, t23s = [], [], []
    for k, raw in enumerate(steps):
        sect = dict(raw)
        where = f"step[{k}]"
        times.append(_plain(sect, "time", where, float, required=True))
        t13s.append(_plain(sect, "T13", where, float, required=True))
        t23s.append(_plain(sect, "T23", where, float, required=True))
        _no_leftovers(sect, where)
    _no_leftovers(data, "<top level>")
    try:
        return TemperatureSchedule(
            times=tuple(times), T13=tuple(t13s), T23=tuple(t23s),
            sigma_T=sigma_T, seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

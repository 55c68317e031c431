"""Experiment configuration files: TOML or JSON in, runnable objects out.

A configuration describes one experiment: a scenario section (family,
layout version, demand profile, clock), a controller section keyed by
the parameter names practitioners know from the control literature
(K_P, cycle_duration, G_T_MIN, ds_upper_val, ...), a seeds section, an
optional objective section, and an output section. The loader maps the
published spellings onto the library's keyword names and rejects
anything it does not know, so a typo fails loudly instead of silently
running defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

try:
    import tomllib as _toml
except ImportError:                       # Python < 3.11
    import tomli as _toml

from .errors import ConfigurationError
from .experiments import ControllerConfig, ObjectiveSpec, SeedSet
from .runner import FREEWAY_CONTROLLERS, URBAN_CONTROLLERS
from .scenarios import (ARTERIAL_DEMANDS, FREEWAY_DEMANDS, GEOMETRY_VERSIONS,
                        build_arterial, build_freeway_corridor)

__all__ = ["ExperimentConfig", "load_config", "parse_config", "config_hash",
           "param_key"]

_FAMILIES = ("freeway", "urban")

# published parameter spelling -> library keyword, per controller kind
_METER_KEYS = {
    "target_occupancy": "target_occupancy",
    "K_P": "k_p",
    "K_I": "k_i",
    "cycle_duration": "cycle_s",
    "min_rate": "min_rate",
    "max_rate": "max_rate",
    "initial_rate": "initial_rate",
}
_HERO_KEYS = {
    "hero_period": "period_s",
    "queue_activation_threshold_m": "activation_queue_m",
    "queue_release_threshold_m": "release_queue_m",
    "min_queue_setpoint_m": "slave_queue_setpoint_m",
    "anticipation_factor": "anticipation",
    "avg_vehicle_spacing": "vehicle_spacing_m",
}
_MP_FIXED_KEYS = {
    "cycle_duration": "cycle_s",
    "G_T_MIN": "g_min",
    "G_T_MAX": "g_max",
    "n_samples": "n_samples",
}
_MP_FLEX_KEYS = {
    "G_T_MIN": "g_min",
    "G_T_MAX": "g_max",
    "T_A": "t_a",
}
_SCOOT_KEYS = {
    "initial_cycle_length": "initial_cycle_s",
    "min_cycle_length": "cycle_min_s",
    "max_cycle_length": "cycle_max_s",
    "adaptation_cycle": "alpha_cycle",
    "adaptation_green": "alpha_green",
    "green_thresh": "green_min_s",
    "adaptation_offset": "alpha_offset",
    "offset_thresh": "offset_thresh",
    "ds_upper_val": "d_upper",
    "ds_lower_val": "d_lower",
    "adaptation_interval": "adapt_every_cycles",
}

_PARAM_KEYS = {
    "none": {"cycle_duration": "cycle_s"},
    "alinea": dict(_METER_KEYS),
    "pi_alinea": dict(_METER_KEYS),
    "metaline": dict(_METER_KEYS),
    "hero": {**_METER_KEYS, **_HERO_KEYS},
    "mp_fixed": dict(_MP_FIXED_KEYS),
    "mp_flex": dict(_MP_FLEX_KEYS),
    "scoot_scats": dict(_SCOOT_KEYS),
}
def config_hash(data: Mapping) -> str:
    """Short stable digest of one parsed configuration."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"),
                           default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def param_key(kind: str, name: str) -> str:
    """Published or library spelling of a parameter -> library keyword."""
    key_map = _PARAM_KEYS.get(kind, {})
    if name in key_map:
        return key_map[name]
    if name in key_map.values():
        return name
    accepted = sorted(set(key_map) | set(key_map.values()))
    raise ConfigurationError(
        f"{kind} has no parameter {name!r}; accepted spellings: {accepted}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully validated experiment description."""

    family: str
    scenario_kw: tuple[tuple[str, object], ...]
    controller: ControllerConfig
    seeds: SeedSet
    objective: Optional[ObjectiveSpec]
    out_dir: str
    formats: tuple[str, ...]
    hash: str
    source: str

    def build_scenario(self):
        kw = dict(self.scenario_kw)
        if self.family == "freeway":
            return build_freeway_corridor(**kw)
        return build_arterial(**kw)

    @property
    def dt(self) -> float:
        kw = dict(self.scenario_kw)
        return float(kw.get("dt", 0.5 if self.family == "freeway" else 0.25))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse a TOML (default) or JSON experiment file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    else:
        try:
            data = _toml.loads(raw.decode())
        except _toml.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    return parse_config(data, source=str(path))


def _section(data: Mapping, name: str, required: bool) -> Mapping:
    section = data.get(name)
    if section is None:
        if required:
            raise ConfigurationError(f"config needs a [{name}] section")
        return {}
    if not isinstance(section, Mapping):
        raise ConfigurationError(f"[{name}] must be a table/object")
    return section


def _parse_scenario(section: Mapping):
    family = section.get("family")
    if family not in _FAMILIES:
        raise ConfigurationError(
            f"[scenario] family must be one of {_FAMILIES}, got {family!r}")
    kw = {}
    allowed = {"family", "demand", "dt", "warmup", "horizon"}
    if family == "freeway":
        allowed.add("geometry")
        if "geometry" in section:
            geometry = section["geometry"]
            if geometry not in GEOMETRY_VERSIONS:
                raise ConfigurationError(
                    f"[scenario] unknown geometry {geometry!r}; shipped "
                    f"versions: {sorted(GEOMETRY_VERSIONS)}")
            kw["geometry"] = geometry
    for key in section:
        if key not in allowed:
            raise ConfigurationError(
                f"[scenario] unknown key {key!r}; accepted: {sorted(allowed)}")
    demands = FREEWAY_DEMANDS if family == "freeway" else ARTERIAL_DEMANDS
    if "demand" in section:
        if section["demand"] not in demands:
            raise ConfigurationError(
                f"[scenario] unknown demand {section['demand']!r}; shipped "
                f"profiles: {sorted(demands)}")
        kw["demand"] = section["demand"]
    if "dt" in section:
        kw["dt"] = float(section["dt"])
    if "warmup" in section:
        kw["warmup_s"] = float(section["warmup"])
    if "horizon" in section:
        kw["horizon_s"] = float(section["horizon"])
    return family, tuple(sorted(kw.items()))


def _check_measurement_period(section: Mapping, family: str, dt: float):
    """The published configs carry the sampling count explicitly; it is
    redundant here (one control-cycle read per cycle, one pressure read
    per second), so it is accepted only when consistent with dt."""
    if "measurement_period" not in section:
        return
    period = int(section["measurement_period"])
    if family == "freeway":
        cycle = float(section.get("cycle_duration", 60))
        expect = round(cycle / dt)
        what = "cycle_duration / dt"
    else:
        expect = round(1.0 / dt)
        what = "1 / dt"
    if period != expect:
        raise ConfigurationError(
            f"[controller] measurement_period {period} does not match "
            f"{what} = {expect}")


def _parse_controller(section: Mapping, family: str, dt: float,
                      transition_s: float = 3.0) -> ControllerConfig:
    kind = section.get("kind")
    if kind is None:
        raise ConfigurationError("[controller] needs a 'kind' key")
    known = FREEWAY_CONTROLLERS + URBAN_CONTROLLERS
    if kind not in known:
        raise ConfigurationError(
            f"[controller] unknown kind {kind!r}; pick one of {sorted(set(known))}")
    compatible = FREEWAY_CONTROLLERS if family == "freeway" else URBAN_CONTROLLERS
    if kind not in compatible:
        other = "urban" if family == "freeway" else "freeway"
        raise ConfigurationError(
            f"[controller] kind {kind!r} is a {other} controller and cannot "
            f"run on scenario family {family!r}; compatible kinds: "
            f"{compatible}")

    key_map = _PARAM_KEYS[kind]
    params = {}
    gains = {}
    for key, value in section.items():
        if key in ("kind", "measurement_period"):
            continue
        if key == "T_L":
            if float(value) != transition_s:
                raise ConfigurationError(
                    f"[controller] T_L = {value} but phase transitions last "
                    f"{transition_s:g} s in this model")
            continue
        if kind == "metaline" and key in ("K_P", "K_I") and \
                isinstance(value, (list, tuple)):
            gains["k_p" if key == "K_P" else "k_i"] = value
            continue
        if kind == "metaline" and key == "target_occupancies":
            gains["targets"] = value
            continue
        if key not in key_map:
            raise ConfigurationError(
                f"[controller] {kind} takes no key {key!r}; accepted: "
                f"{sorted(key_map)}")
        params[key_map[key]] = float(value)
    _check_measurement_period(section, family, dt)
    return ControllerConfig(kind, params=tuple(sorted(params.items())),
                            gains=tuple(sorted(gains.items())))


def _parse_seeds(section: Mapping) -> SeedSet:
    if "list" in section and ("count" in section or "base" in section):
        raise ConfigurationError(
            "[seeds] give either an explicit list or count/base, not both")
    for key in section:
        if key not in ("list", "count", "base"):
            raise ConfigurationError(f"[seeds] unknown key {key!r}")
    if "list" in section:
        return SeedSet(tuple(int(s) for s in section["list"]))
    count = int(section.get("count", 20))
    base = int(section.get("base", 0))
    return SeedSet.default(n=count, start=base)


def _parse_objective(section: Mapping) -> Optional[ObjectiveSpec]:
    if not section:
        return None
    return ObjectiveSpec(tuple((k, float(v)) for k, v in section.items()))


def _parse_output(section: Mapping):
    for key in section:
        if key not in ("directory", "formats"):
            raise ConfigurationError(f"[output] unknown key {key!r}")
    out_dir = str(section.get("directory", "out"))
    formats = section.get("formats", ["csv"])
    if isinstance(formats, str):
        formats = [formats]
    for fmt in formats:
        if fmt not in ("csv", "table"):
            raise ConfigurationError(
                f"[output] unknown format {fmt!r}; use csv or table")
    return out_dir, tuple(formats)


def parse_config(data: Mapping, source: str = "<memory>") -> ExperimentConfig:
    """Validate a parsed mapping and bind it to runnable objects."""
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{source}: config root must be a table")
    for key in data:
        if key not in ("scenario", "controller", "seeds", "objective",
                       "output"):
            raise ConfigurationError(f"{source}: unknown section [{key}]")
    family, scenario_kw = _parse_scenario(_section(data, "scenario", True))
    dt = dict(scenario_kw).get("dt", 0.5 if family == "freeway" else 0.25)
    controller = _parse_controller(_section(data, "controller", True), family,
                                   dt)
    seeds = _parse_seeds(_section(data, "seeds", False))
    objective = _parse_objective(_section(data, "objective", False))
    out_dir, formats = _parse_output(_section(data, "output", False))
    return ExperimentConfig(
        family=family, scenario_kw=scenario_kw, controller=controller,
        seeds=seeds, objective=objective, out_dir=out_dir, formats=formats,
        hash=config_hash(data), source=source)

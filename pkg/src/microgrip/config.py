"""Study configuration: YAML in, fully resolved and validated settings out.

A minimal file only names what differs from the defaults::

    design: model1          # or {model: model2, overrides: {arm_width: 25}}
    study: simulate         # or {kind: sweep, voltages: [0, 0.1, 0.2]}
    voltage: 0.25           # shorthand for study.voltage

``StudyConfig.dump()`` writes the resolved form; parsing that text again gives
an equal ``StudyConfig``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, fields
from importlib import resources

import yaml

from .design import DesignError, GripperDesign, build_design, validate_design
from .materials import AIR_CONVECTION, AMBIENT_TEMPERATURE, Environment, MaterialProps, validate_material
from .physics import MeshSettings, material_library
from .studies import (DEFAULT_H_GRID, DEFAULT_VOLTAGES, MAX_VOLTAGE, OPERATING_VOLTAGE, REQUIRED_CLOSURE,
                      VOLTAGE_LIMIT)

STUDY_KINDS = ("simulate", "sweep", "env-sweep", "grip", "optimize", "compare", "verify")
OUTPUT_FORMATS = ("csv", "vtk")
DESIGN_MODELS = ("model1", "model2", "stack")
OPTIMIZE_SPACES = ("models", "placement", "variables")
OPTIMIZE_METHODS = ("grid", "golden-section", "nelder-mead")
DEFAULT_OBJECT_DIAMETER = 5.0
CLOSURE_TARGETS = (5.0, 10.0, 15.0)


class ConfigError(ValueError):
    pass


def load_calibration() -> dict:
    """The shipped heater calibration (see ``data/calibration.yaml``)."""
    text = resources.files("microgrip").joinpath("data/calibration.yaml").read_text()
    return yaml.safe_load(text)


def default_materials() -> dict:
    cal = load_calibration()
    return {cal["material"]: {"electrical_conductivity": float(cal["electrical_conductivity"])}}


# ------------------------------------------------------------------ coercion

def _float(path, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    return v


def _int(path, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return int(v)


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true or false, got {v!r}")
    return v


def _str(path, v):
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    return v


def _opt_float(path, v):
    return None if v is None else _float(path, v)


def _floats(path, v):
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{path}: expected a list of numbers")
    return [_float(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _choice(options):
    def check(path, v):
        v = _str(path, v)
        if v not in options:
            raise ConfigError(f"{path}: {v!r} is not one of {', '.join(options)}")
        return v
    return check


def _formats(path, v):
    if isinstance(v, str):
        v = [v]
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{path}: expected a list of formats")
    out = [_choice(OUTPUT_FORMATS)(f"{path}[{i}]", x) for i, x in enumerate(v)]
    return sorted(set(out), key=OUTPUT_FORMATS.index)


def _mapping(path, v):
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected a mapping")
    for k in v:
        if not isinstance(k, str):
            raise ConfigError(f"{path}: keys must be strings, got {k!r}")
    return v


def _ranges(path, v):
    v = _mapping(path, v)
    out = {}
    for name, rng in v.items():
        r = _floats(f"{path}.{name}", rng)
        if len(r) != 2:
            raise ConfigError(f"{path}.{name}: expected [low, high]")
        out[name] = r
    return out


def _overrides(path, v):
    v = _mapping(path, v)
    out = {}
    for k, x in v.items():
        out[k] = _float(f"{path}.{k}", x) if not isinstance(x, str) else x
    return out


# section -> key -> (coercer, default); nested dicts are sub-sections
_SCHEMA = {
    "design": {
        "model": (_choice(DESIGN_MODELS), "model1"),
        "overrides": (_overrides, {}),
    },
    "mesh": {
        "resolution": (_float, MeshSettings.resolution),
        "order": (_int, MeshSettings.order),
    },
    "environment": {
        "ambient_temperature": (_float, AMBIENT_TEMPERATURE),
        "convection_coefficient": (_float, AIR_CONVECTION),
    },
    "study": {
        "kind": (_choice(STUDY_KINDS), "simulate"),
        "voltage": (_float, OPERATING_VOLTAGE),
        "voltages": (_floats, list(DEFAULT_VOLTAGES)),
        "h_values": (_floats, list(DEFAULT_H_GRID)),
        "object_diameter": (_opt_float, None),
        "closure_targets": (_floats, list(CLOSURE_TARGETS)),
        "optimize": {
            "space": (_choice(OPTIMIZE_SPACES), "models"),
            "method": (_choice(OPTIMIZE_METHODS), "grid"),
            "budget": (_int, 5),
            "variables": (_ranges, {}),
            "operating_voltage": (_float, OPERATING_VOLTAGE),
            "v_max": (_float, MAX_VOLTAGE),
            "required_closure": (_float, REQUIRED_CLOSURE),
            "precondition": (_bool, True),
            "placement_low": (_float, 0.1),
            "placement_high": (_float, 0.9),
        },
        "verify": {
            "include_slow": (_bool, True),
        },
    },
    "output": {
        "directory": (_str, "out"),
        "formats": (_formats, ["csv"]),
    },
    "seed": (_int, 0),
    "threads": (_int, 1),
}

_MATERIAL_FIELDS = {f.name: f for f in fields(MaterialProps)}


def _resolve(schema: dict, data, path: str) -> dict:
    data = _mapping(path or "config", data)
    unknown = [k for k in data if k not in schema and not (not path and k == "materials")]
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key '{where}{unknown[0]}'")
    out = {}
    for key, spec in schema.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = _resolve(spec, data.get(key), sub)
        else:
            coerce, default = spec
            out[key] = coerce(sub, data[key]) if key in data else copy.deepcopy(default)
    return out


def _resolve_materials(data) -> dict:
    data = _mapping("materials", data)
    out = {}
    for name, block in default_materials().items():
        out[name] = dict(block)
    for name, block in data.items():
        block = _mapping(f"materials.{name}", block)
        entry = out.setdefault(name, {})
        for k, v in block.items():
            if k not in _MATERIAL_FIELDS or k == "name":
                raise ConfigError(f"unknown key 'materials.{name}.{k}'")
            entry[k] = _opt_float(f"materials.{name}.{k}", v)
    # names sorted so the echoed file does not depend on input order
    return {k: out[k] for k in sorted(out)}


def _expand_shorthand(data: dict) -> dict:
    data = dict(data)
    if isinstance(data.get("design"), str):
        data["design"] = {"model": data["design"]}
    if isinstance(data.get("study"), str):
        data["study"] = {"kind": data["study"]}
    for key in ("voltage", "voltages", "object_diameter"):
        if key in data:
            study = dict(_mapping("study", data.get("study")))
            if key in study:
                raise ConfigError(f"{key} given both at top level and in study")
            study[key] = data.pop(key)
            data["study"] = study
    return data


# ------------------------------------------------------------------ resolved config

@dataclass(frozen=True)
class StudyConfig:
    design: dict
    materials: dict
    mesh: dict
    environment: dict
    study: dict
    output: dict
    seed: int
    threads: int

    def to_dict(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)

    def with_changes(self, **changes) -> StudyConfig:
        """New resolved config with top-level keys or ``section.key`` entries replaced."""
        data = self.to_dict()
        for key, value in changes.items():
            section, _, sub = key.partition("__")
            if sub:
                data[section][sub] = value
            else:
                data[section] = value
        return from_dict(data)

    def mesh_settings(self) -> MeshSettings:
        return MeshSettings(self.mesh["resolution"], self.mesh["order"])

    def env(self) -> Environment:
        return Environment(self.environment["ambient_temperature"], self.environment["convection_coefficient"])

    def material_overrides(self) -> dict:
        return {name: {k: v for k, v in block.items()} for name, block in self.materials.items()}

    def material_library(self) -> dict[str, MaterialProps]:
        return material_library(self.material_overrides())

    def build_design(self) -> GripperDesign:
        return build_design(self.design["model"], dict(self.design["overrides"]))


def _validate(cfg: StudyConfig):
    problems = []
    try:
        lib = cfg.material_library()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"materials: {exc}") from None
    for name, props in lib.items():
        problems += [f"materials.{name}: {p}" for p in validate_material(props)]
    try:
        d = cfg.build_design()
        problems += [f"design: {p}" for p in validate_design(d, lib)]
    except (DesignError, TypeError, KeyError) as exc:
        problems.append(f"design: {exc}")
    if not cfg.mesh["resolution"] > 0:
        problems.append("mesh.resolution must be > 0")
    if cfg.mesh["order"] not in (1, 2):
        problems.append("mesh.order must be 1 or 2")
    problems += [f"environment: {p}" for p in cfg.env().validate()]
    st = cfg.study
    volts = st["voltages"]
    if not volts:
        problems.append("study.voltages must not be empty")
    if any(b < a for a, b in zip(volts, volts[1:])):
        problems.append("study.voltages must be sorted ascending")
    for v in volts + [st["voltage"]]:
        if not 0.0 <= v <= VOLTAGE_LIMIT:
            problems.append(f"voltage {v} outside [0, {VOLTAGE_LIMIT}] V")
            break
    if not st["h_values"]:
        problems.append("study.h_values must not be empty")
    if any(h < AIR_CONVECTION for h in st["h_values"]):
        problems.append(f"study.h_values must be >= {AIR_CONVECTION}")
    if st["object_diameter"] is not None and not st["object_diameter"] > 0:
        problems.append("study.object_diameter must be > 0")
    opt = st["optimize"]
    if opt["budget"] < 3:
        problems.append("study.optimize.budget must be >= 3")
    if not 0 < opt["operating_voltage"] <= opt["v_max"] <= VOLTAGE_LIMIT:
        problems.append(f"study.optimize needs 0 < operating_voltage <= v_max <= {VOLTAGE_LIMIT}")
    if not 0 < opt["placement_low"] <= opt["placement_high"] < 1:
        problems.append("study.optimize needs 0 < placement_low <= placement_high < 1")
    if opt["space"] == "variables" and not opt["variables"]:
        problems.append("study.optimize.variables is empty")
    if cfg.threads < 1:
        problems.append("threads must be >= 1")
    if problems:
        raise ConfigError("; ".join(problems))


def from_dict(data) -> StudyConfig:
    """Resolve and validate an already-parsed mapping."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    data = _expand_shorthand(data)
    resolved = _resolve(_SCHEMA, data, "")
    cfg = StudyConfig(materials=_resolve_materials(data.get("materials")), **resolved)
    _validate(cfg)
    return cfg


def parse_config(text: str) -> StudyConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ConfigError(f"syntax error at line {mark.line + 1}, column {mark.column + 1}: {problem}") from None
        raise ConfigError(f"syntax error: {problem}") from None
    return from_dict(data)


def load_config(path) -> StudyConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def default_config() -> StudyConfig:
    return from_dict({})

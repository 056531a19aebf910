"""Experiment configuration: JSON schema validation and object construction."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..fespace import PAIRING_ALIASES, PAIRINGS
from ..physics import FluxParams, StressParams
from ..solver import ModelParams, SolverConfig
from ..varexp import ScalarExponentLaw

_EXPR = {"type": ["string", "number"]}
_VEC = {"type": "array", "items": _EXPR, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "domain": {"enum": ["unit_square"]},
                "n": {"type": "integer", "minimum": 1},
                "pattern": {"enum": ["diagonal", "crisscross"]},
                "path": {"type": "string"},
            },
        },
        "levels": {"type": "integer", "minimum": 1},
        "pairing": {"enum": sorted(PAIRINGS) + sorted(PAIRING_ALIASES)},
        "stress": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nu0": {"type": "number", "exclusiveMinimum": 0},
                "kappa1": {"type": "number", "exclusiveMinimum": 0},
                "kappa2": {"type": "number", "exclusiveMinimum": 0},
                "c_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
        },
        "flux": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k0": {"type": "number", "exclusiveMinimum": 0}, "k1": {"type": "number", "minimum": 0}},
        },
        "law": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["type"],
                 "properties": {"type": {"const": "rational"}, "a": {"type": "number"}, "b": {"type": "number"}}},
                {"type": "object", "additionalProperties": False, "required": ["type", "points"],
                 "properties": {"type": {"const": "table"},
                                "points": {"type": "array", "minItems": 2,
                                           "items": {"type": "array", "items": {"type": "number"},
                                                     "minItems": 2, "maxItems": 2}}}},
            ]
        },
        "exponent": {"type": ["number", "null"], "exclusiveMinimum": 1},
        "convection": {"type": "boolean"},
        "c_d": _EXPR,
        "f": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["type", "value"],
                 "properties": {"type": {"const": "expression"}, "value": _VEC}},
                {"type": "object", "additionalProperties": False, "required": ["type"],
                 "properties": {"type": {"const": "manufactured"}, "u": _VEC, "stream": {"type": "string"},
                                "p": _EXPR, "c": _EXPR}},
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "picard_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_outer": {"type": "integer", "minimum": 1},
                "linearization": {"enum": ["picard", "newton-after-picard", "newton"]},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "linear_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_inner": {"type": "integer", "minimum": 1},
                "newton_switch": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

DEFAULTS = {
    "mesh": {"domain": "unit_square", "n": 4, "pattern": "diagonal"},
    "levels": 1,
    "pairing": "P2_P0",
    "stress": {"nu0": 1.0, "kappa1": 1.0, "kappa2": 1.0, "c_range": [0.0, 1.0]},
    "flux": {"k0": 1.0, "k1": 0.0},
    "law": {"type": "rational", "a": 1.6, "b": 0.3},
    "exponent": None,
    "convection": True,
    "c_d": 0.0,
    "f": {"type": "expression", "value": [0, 0]},
    "solver": {},
    "output": "synfem_out",
    "seed": 0,
}


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` is the JSON pointer of the offending entry."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate(raw: dict):
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(_pointer(e.absolute_path), e.message)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("/", "configuration must be a JSON object")
        validate(raw)
        merged = _merge(DEFAULTS, raw)
        if "path" in raw.get("mesh", {}):
            merged["mesh"] = dict(raw["mesh"])
        base_dir = Path(base_dir)
        if "path" in merged["mesh"] and not (base_dir / merged["mesh"]["path"]).exists():
            raise ConfigError("/mesh/path", f"file not found: {merged['mesh']['path']}")
        try:
            SolverConfig(**merged["solver"])
        except ValueError as exc:
            raise ConfigError("/solver", str(exc)) from None
        lo, hi = merged["stress"]["c_range"]
        if not lo < hi:
            raise ConfigError("/stress/c_range", "lower bound must be below upper bound")
        return cls(merged, base_dir)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError("", f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(raw, path.parent)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def law(self) -> ScalarExponentLaw:
        return ScalarExponentLaw.from_config(self.raw["law"])

    @property
    def params(self) -> ModelParams:
        s = self.raw["stress"]
        stress = StressParams.from_config(s, self.law, s["c_range"])
        return ModelParams(stress, FluxParams.from_config(self.raw["flux"]), self.raw["convection"])

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(**self.raw["solver"])

    @property
    def manufactured(self) -> bool:
        return self.raw["f"]["type"] == "manufactured"

    @property
    def output(self) -> Path:
        out = Path(self.raw["output"])
        return out if out.is_absolute() else self.base_dir / out

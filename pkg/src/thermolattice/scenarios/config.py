"""JSON run configuration: schema, defaults and a validating loader."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from ..operators import CHANNELS, FAMILIES

SCENARIOS = ("quench", "rethermalize", "perturb", "diagnostics", "certify")


class ConfigError(ValueError):
    pass


_HAMILTONIAN = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": list(FAMILIES)},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
    },
    "additionalProperties": False,
}

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "thermolattice run configuration",
    "type": "object",
    "required": ["scenario"],
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "lattice": {
            "type": "object",
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "local_dim": {"const": 2},
                "metric": {"enum": ["manhattan", "chebyshev"]},
                "periodic": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "hamiltonians": {
            "type": "object",
            "properties": {
                "initial": _HAMILTONIAN,
                "final": _HAMILTONIAN,
                "perturbation": {
                    "type": "object",
                    "required": ["strength"],
                    "properties": {
                        "pauli": {"enum": ["X", "Y", "Z"]},
                        "strength": {"type": "number"},
                        "aggregate_exponent": {"type": ["number", "null"]},
                        "disorder_seed": {"type": ["integer", "null"]},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "state": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["ground", "thermal", "product", "plus"]},
                "beta": {"type": "number", "minimum": 0},
                "bits": {"type": "string", "pattern": "^[01]*$"},
            },
            "additionalProperties": False,
        },
        "channel": {
            "type": "object",
            "required": ["name", "sites"],
            "properties": {
                "name": {"enum": list(CHANNELS)},
                "sites": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "params": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "subsystem": {
            "type": "object",
            "properties": {
                "l": {"type": "integer", "minimum": 1},
                "regions": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                },
            },
            "additionalProperties": False,
        },
        "analysis": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 2},
                "T_override": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "size_sweep": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                "correlation_iters": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "transport": {
            "type": "object",
            "properties": {
                "site": {"type": ["integer", "string"]},
                "observable": {"enum": ["number", "X", "Y", "Z"]},
                "unitary": {"enum": ["X", "Y", "Z"]},
            },
            "additionalProperties": False,
        },
        "certify": {
            "type": "object",
            "properties": {
                "d": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "alpha": _NUM_LIST,
                "l": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "xi": _NUM_LIST,
                "K": _NUM_LIST,
                "d_loc": {"type": "integer", "minimum": 2},
                "log_base": {"enum": ["e", "10", "2"]},
                "N": _NUM_LIST,
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULTS: dict[str, Any] = {
    "lattice": {"dim": 1, "n": 8, "local_dim": 2, "metric": "manhattan", "periodic": False},
    "subsystem": {"l": 1, "regions": []},
    "analysis": {"samples": 2000, "T_override": None, "alpha": 0.2, "size_sweep": [], "correlation_iters": 50},
}


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    lattice: dict
    hamiltonians: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    channel: dict | None = None
    subsystem: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    transport: dict | None = None
    certify: dict | None = None

    @property
    def seed(self) -> int:
        return int(self.analysis["seed"])

    @property
    def sizes(self) -> list[int]:
        return list(self.analysis.get("size_sweep") or [self.lattice["n"]])

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "lattice": self.lattice,
            "hamiltonians": self.hamiltonians,
            "subsystem": self.subsystem,
            "analysis": self.analysis,
        }
        if self.state:
            out["state"] = self.state
        for key in ("channel", "transport", "certify"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    def replace(self, **analysis) -> "ScenarioConfig":
        """Copy with updated analysis entries (``seed``, ``size_sweep`` ...)."""
        return from_dict(_merge(self.to_dict(), {"analysis": analysis}))


def _check_references(cfg: dict) -> None:
    sc = cfg["scenario"]
    ham = cfg.get("hamiltonians", {})
    need = {
        "quench": ("initial", "final"),
        "rethermalize": ("final",),
        "perturb": ("initial",),
        "diagnostics": ("final",),
        "certify": (),
    }[sc]
    for name in need:
        if name not in ham:
            raise ConfigError(f"scenario {sc!r} needs hamiltonians.{name}")
    if sc == "perturb" and "final" not in ham and "perturbation" not in ham:
        raise ConfigError("perturb needs hamiltonians.final or hamiltonians.perturbation")
    if sc in ("rethermalize",) and "channel" not in cfg:
        raise ConfigError("rethermalize needs a channel")
    if sc in ("rethermalize", "perturb") and cfg.get("state", {}).get("kind", "thermal") != "thermal":
        raise ConfigError(f"{sc} starts from a thermal state")
    if sc in ("rethermalize", "perturb") and "beta" not in cfg.get("state", {}):
        raise ConfigError(f"{sc} needs state.beta")
    if sc == "quench" and cfg.get("state", {}).get("kind", "ground") != "ground":
        raise ConfigError("quench starts from the ground state of hamiltonians.initial")
    if sc == "certify" and "certify" not in cfg:
        raise ConfigError("certify needs a parameter grid")
    if sc != "certify" and "seed" not in cfg.get("analysis", {}):
        raise ConfigError("analysis.seed is mandatory for Monte-Carlo scenarios")
    state = cfg.get("state", {})
    if state.get("kind") == "thermal" and "beta" not in state:
        raise ConfigError("thermal state needs beta")


def from_dict(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Validate ``raw`` against :data:`SCHEMA`, fill defaults and check cross references."""
    try:
        jsonschema.validate(dict(raw), SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    _check_references(cfg)
    if cfg["scenario"] == "certify":
        cfg["analysis"].setdefault("seed", 0)
    state = cfg.setdefault("state", {})
    if not state and cfg["scenario"] != "certify":
        state["kind"] = {"quench": "ground", "diagnostics": "plus"}.get(cfg["scenario"], "thermal")
    return ScenarioConfig(
        scenario=cfg["scenario"],
        lattice=cfg["lattice"],
        hamiltonians=cfg.get("hamiltonians", {}),
        state=state,
        channel=cfg.get("channel"),
        subsystem=cfg["subsystem"],
        analysis=cfg["analysis"],
        transport=cfg.get("transport"),
        certify=cfg.get("certify"),
    )


def load_config(source: str | Path | Mapping[str, Any]) -> ScenarioConfig:
    """Load a config from a JSON file path or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return from_dict(source)
    path = Path(source)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_dict(raw)


#: ready-to-run configuration per scenario, used when no ``--config`` is given
EXAMPLES: dict[str, dict[str, Any]] = {
    "quench": {
        "scenario": "quench",
        "lattice": {"dim": 1, "n": 8},
        "hamiltonians": {
            "initial": {"family": "tfim", "params": {"J": 1.0, "g": 2.0}},
            "final": {"family": "tfim", "params": {"J": 1.0, "g": 1.0, "hz": 0.1}},
        },
        "state": {"kind": "ground"},
        "subsystem": {"l": 1, "regions": [[0], [0, 1]]},
        "analysis": {"samples": 2000, "alpha": 0.2, "seed": 7, "size_sweep": [6, 8, 10]},
    },
    "rethermalize": {
        "scenario": "rethermalize",
        "lattice": {"dim": 1, "n": 8},
        "hamiltonians": {"final": {"family": "tfim", "params": {"J": 1.0, "h": 0.9, "hz": 0.3}}},
        "state": {"kind": "thermal", "beta": 0.5},
        "channel": {"name": "depolarizing", "sites": [0], "params": {"p": 1.0}},
        "subsystem": {"l": 1},
        "analysis": {"samples": 400, "alpha": 0.2, "seed": 7, "size_sweep": [6, 8]},
    },
    "perturb": {
        "scenario": "perturb",
        "lattice": {"dim": 1, "n": 8},
        "hamiltonians": {
            "initial": {"family": "tfim", "params": {"J": 1.0, "h": 0.9, "hz": 0.3}},
            "perturbation": {"pauli": "X", "strength": 0.05},
        },
        "state": {"kind": "thermal", "beta": 0.5},
        "subsystem": {"l": 1},
        "analysis": {"samples": 400, "alpha": 0.2, "seed": 7, "size_sweep": [6, 8]},
    },
    "diagnostics": {
        "scenario": "diagnostics",
        "lattice": {"dim": 1, "n": 8},
        "hamiltonians": {"final": {"family": "xx_chain", "params": {"J": 1.0}}},
        "state": {"kind": "plus"},
        "transport": {"site": "center", "observable": "number", "unitary": "Z"},
        "analysis": {"seed": 7, "size_sweep": [6, 8, 10]},
    },
    "certify": {
        "scenario": "certify",
        "certify": {"d": [1], "alpha": [0.1, 0.2, 0.25], "l": [1, 2], "xi": [1.0], "K": [1.0], "N": [1e6, 1e7]},
    },
}

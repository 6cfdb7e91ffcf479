"""Uniform carrier for evaluated inequalities and JSON helpers."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any

import numpy as np

#: trace distances are half the trace norm throughout
TRACE_CONVENTION = "trace distance = (1/2)||.||_1"
LOG_CONVENTION = "natural log (nats)"

# kinds of report: a proved inequality failing is a bug, a premise failing is not
PROVED = "proved"
PREMISES = "premises"
CONDITIONAL = "conditional"


@dataclass
class Premise:
    name: str
    satisfied: bool
    value: float


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    holds: bool
    premises: list[Premise] = field(default_factory=list)
    convention_notes: dict[str, str] = field(default_factory=dict)
    inputs_digest: str = ""
    kind: str = PROVED
    tolerance: float = 0.0
    vacuous: bool = False
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def premises_ok(self) -> bool:
        return all(p.satisfied for p in self.premises)

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def default_conventions(**extra: str) -> dict[str, str]:
    out = {"trace_distance": TRACE_CONVENTION, "log": LOG_CONVENTION}
    out.update(extra)
    return out


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; ``nan`` becomes ``null`` and infinities the strings ``"inf"``/``"-inf"``."""
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def digest(*arrays, **meta) -> str:
    """SHA-256 over array bytes and a canonical JSON of ``meta`` (first 16 hex digits)."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(canonical_json(meta).encode())
    return h.hexdigest()[:16]

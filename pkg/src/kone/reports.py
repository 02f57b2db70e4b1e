"""JSON-lines check reports with floats written to 17 significant digits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Report:
    check: str
    name: str
    lhs: float
    rhs: float
    se: float
    tolerance: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def record(self, seed, config) -> dict:
        """Self-describing report line: the result plus seed, config hash and the config itself."""
        return {"check": self.check, "name": self.name, "lhs": self.lhs, "rhs": self.rhs, "se": self.se,
                "tolerance": self.tolerance, "pass": bool(self.passed), "seed": seed,
                "config_hash": config.hash, "config": config.to_dict(), "extra": self.extra}


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def encode(obj) -> str:
    """Compact JSON with every float at 17 significant digits; keys keep insertion order."""
    if isinstance(obj, dict):
        return "{" + ",".join(json.dumps(str(k)) + ":" + encode(v) for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return encode(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(records) -> str:
    return "".join(encode(r) + "\n" for r in records)


def loads(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def within(lhs: float, rhs: float, se: float, k: float = 3.0) -> tuple[float, bool]:
    """Tolerance ``k se`` and whether ``|lhs - rhs|`` meets it (exact agreement when ``se == 0``)."""
    tol = k * se if se > 0 else 1e-12 * max(1.0, abs(rhs))
    return float(tol), bool(abs(lhs - rhs) <= tol)

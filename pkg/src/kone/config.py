"""INI run configuration validated against the shipped schema.

Errors carry the file, line and ``[section] key`` they refer to.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .measure import Window

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


class ConfigError(ValueError):
    def __init__(self, msg: str, source: str = "<config>", line: int | None = None,
                 section: str | None = None, key: str | None = None):
        where = source if line is None else f"{source}:{line}"
        field_ = f" [{section}] {key}" if key else (f" [{section}]" if section else "")
        super().__init__(f"{where}:{field_} {msg}")
        self.line, self.section, self.key = line, section, key


def load_schema() -> dict:
    return json.loads(resources.files("kone").joinpath("config_schema.json").read_text())


def parse_window(text: str, periodic: bool = False) -> Window:
    lo, hi = [], []
    for part in text.split(","):
        a, sep, b = part.strip().partition("..")
        if not sep:
            raise ValueError(f"bad window axis {part!r}, expected lo..hi")
        lo.append(float(a))
        hi.append(float(b))
    return Window(tuple(lo), tuple(hi), periodic)


def format_window(w) -> str:
    if isinstance(w, Window):
        return ",".join(f"{a!r}..{b!r}" for a, b in zip(w.lo, w.hi))
    return str(w)


def _convert(spec: dict, raw):
    t = spec["type"]
    if t == "int":
        v = int(raw) if not isinstance(raw, int) else raw
    elif t == "float":
        v = float(raw)
    elif t == "bool":
        if isinstance(raw, bool):
            v = raw
        elif str(raw).strip().lower() in ("1", "true", "yes", "on"):
            v = True
        elif str(raw).strip().lower() in ("0", "false", "no", "off"):
            v = False
        else:
            raise ValueError(f"not a boolean: {raw!r}")
    elif t == "list":
        v = [p.strip() for p in raw.split(",") if p.strip()] if isinstance(raw, str) else list(raw)
    elif t == "window":
        parse_window(raw)
        v = str(raw).replace(" ", "")
    else:
        v = str(raw)
    if "min" in spec and t in ("int", "float") and v < spec["min"]:
        raise ValueError(f"{v} is below the minimum {spec['min']}")
    if "max" in spec and t in ("int", "float") and v > spec["max"]:
        raise ValueError(f"{v} is above the maximum {spec['max']}")
    if "choices" in spec:
        bad = [x for x in (v if t == "list" else [v]) if x not in spec["choices"]]
        if bad:
            raise ValueError(f"{bad[0]!r} is not one of {spec['choices']}")
    return v


@dataclass
class RunConfig:
    """Typed values for every schema field; unspecified fields take schema defaults."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section].get(key)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls.from_dict({})

    @classmethod
    def from_dict(cls, d: dict, source: str = "<dict>", lines: dict | None = None) -> "RunConfig":
        schema = load_schema()
        lines = lines or {}
        out = {}
        for sec in d:
            if sec not in schema:
                raise ConfigError("unknown section", source, lines.get((sec, None)), sec)
        for sec, fields_ in schema.items():
            given = d.get(sec, {})
            for key in given:
                if key not in fields_:
                    raise ConfigError("unknown key", source, lines.get((sec, key)), sec, key)
            vals = {}
            for key, spec in fields_.items():
                if given.get(key) is not None:
                    try:
                        vals[key] = _convert(spec, given[key])
                    except (TypeError, ValueError) as e:
                        raise ConfigError(str(e), source, lines.get((sec, key)), sec, key) from None
                elif "default" in spec:
                    vals[key] = _convert(spec, spec["default"])
                else:
                    vals[key] = None
            out[sec] = vals
        return cls(out)

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        lines, sec = {}, None
        for i, line in enumerate(text.splitlines(), 1):
            if line.strip().startswith(("#", ";")):
                continue
            m = _SECTION.match(line)
            if m:
                sec = m.group(1).strip()
                lines[(sec, None)] = i
                continue
            m = _KEY.match(line)
            if m and sec is not None:
                lines[(sec, m.group(1).strip())] = i
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source)
        except configparser.DuplicateOptionError as e:
            raise ConfigError("duplicate key", source, e.lineno, e.section, e.option) from None
        except configparser.DuplicateSectionError as e:
            raise ConfigError("duplicate section", source, e.lineno, e.section) from None
        except configparser.MissingSectionHeaderError as e:
            raise ConfigError("key outside any section", source, e.lineno) from None
        except configparser.ParsingError as e:
            line = e.errors[0][0] if e.errors else None
            raise ConfigError("cannot parse line", source, line) from None
        d = {s: dict(cp.items(s)) for s in cp.sections()}
        return cls.from_dict(d, source, lines)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.parse(f.read(), str(path))

    def replace(self, section: str, **kw) -> "RunConfig":
        d = self.to_dict()
        d[section].update(kw)
        return RunConfig.from_dict(d)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.values))

    def dumps(self) -> str:
        schema = load_schema()
        out = []
        for sec, vals in self.values.items():
            out.append(f"[{sec}]")
            for key, v in vals.items():
                if v is None:
                    continue
                t = schema[sec][key]["type"]
                if t == "list":
                    v = ",".join(v)
                elif t == "float":
                    v = repr(float(v))
                elif t == "bool":
                    v = "true" if v else "false"
                out.append(f"{key} = {v}")
            out.append("")
        return "\n".join(out)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    # builders
    def window(self, periodic: bool | None = None) -> Window:
        m = self.values["measure"]
        return parse_window(m["window"], m["periodic"] if periodic is None else periodic)

    def density(self):
        from .density import ExponentialFamily, gamma
        m = self.values["measure"]
        return gamma() if m["family"] == "gamma" else ExponentialFamily(m["alpha"], m["beta"])

    def potential(self):
        return potential_from(self.values["potential"])


def potential_from(p: dict):
    """Build a pair potential from ``kind`` plus parameters; ``kind = none`` gives ``None``."""
    import numpy as np

    from . import potential as pot
    kind = p.get("kind", "bump")
    if kind == "none":
        return None
    if kind == "bump":
        return pot.bump(float(p.get("R", 1.0)), float(p.get("height", 1.0)), float(p.get("delta", 0.5)))
    if kind == "ring":
        return pot.ring(float(p.get("R", 1.0)), float(p.get("height", 100.0)), float(p.get("depth", 0.5)),
                        float(p.get("r_well", 0.8)), float(p.get("delta", 0.3)))
    if kind == "table":
        data = np.loadtxt(p["table"], ndmin=2)
        return pot.table(data[:, 0], data[:, 1], float(p.get("delta", 0.5)))
    raise ValueError(f"unknown potential kind {kind!r}")


def parse_potential_spec(spec: str) -> dict:
    """``"bump:R=1,height=2,delta=0.5"`` -> ``{"kind": "bump", "R": 1.0, ...}``; ``table:path`` reads a file."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    out: dict = {"kind": kind}
    if kind == "table":
        path, _, opts = rest.partition(",")
        out["table"] = path
        rest = opts
    for item in filter(None, (x.strip() for x in rest.split(","))):
        k, sep, v = item.partition("=")
        if not sep:
            raise ValueError(f"bad potential parameter {item!r}")
        out[k.strip()] = float(v)
    return out

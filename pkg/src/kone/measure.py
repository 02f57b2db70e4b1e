"""Discrete measures, marked configurations and the text format they share."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``.

    ``periodic`` makes the box a torus for distance computations
    (minimum-image convention).
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    periodic: bool = False

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise MeasureError("window bounds must have equal, nonzero length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise MeasureError(f"degenerate window {lo}..{hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, d: int, periodic: bool = False) -> "Window":
        return cls((lo,) * d, (hi,) * d, periodic)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def lengths(self) -> np.ndarray:
        return self.hi_arr - self.lo_arr

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lo_arr) & (x <= self.hi_arr), axis=1)

    def distance_to_boundary(self, x) -> np.ndarray:
        """Distance from points inside the box to its boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.min(np.minimum(x - self.lo_arr, self.hi_arr - x), axis=1)

    def with_periodic(self, periodic: bool) -> "Window":
        return Window(self.lo, self.hi, periodic)


def _check_atoms(positions: np.ndarray, weights: np.ndarray) -> None:
    if positions.ndim != 2 or weights.ndim != 1 or positions.shape[0] != weights.shape[0]:
        raise MeasureError(f"shape mismatch: positions {positions.shape}, weights {weights.shape}")
    if not np.all(np.isfinite(positions)):
        raise MeasureError("non-finite position")
    if not np.all(np.isfinite(weights)):
        raise MeasureError("non-finite weight")
    if np.any(weights <= 0.0):
        raise MeasureError("weights must be strictly positive")
    if positions.shape[0] > 1:
        uniq = np.unique(positions, axis=0)
        if uniq.shape[0] != positions.shape[0]:
            raise MeasureError("duplicate atom positions")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite purely atomic measure ``sum_i s_i delta_{x_i}`` inside a window.

    Immutable. ``meta`` carries sampler bookkeeping (truncation level,
    expected ignored mass) and is not part of equality.
    """

    positions: np.ndarray
    weights: np.ndarray
    window: Window
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.size == 0:
            pos = pos.reshape(0, self.window.dim)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        _check_atoms(pos, w)
        if pos.shape[1] != self.window.dim:
            raise MeasureError(f"positions have dim {pos.shape[1]}, window has dim {self.window.dim}")
        if not np.all(self.window.contains(pos)) and pos.shape[0]:
            raise MeasureError("atom outside window")
        total = float(np.sum(w))
        if not np.isfinite(total):
            raise MeasureError("local mass is not finite")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def empty(cls, window: Window) -> "DiscreteMeasure":
        return cls(np.zeros((0, window.dim)), np.zeros(0), window)

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.window == other.window
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self):
        return f"DiscreteMeasure(n={len(self)}, mass={self.total_mass:.6g}, window={self.window})"

    @classmethod
    def _trusted(cls, positions, weights, window, meta=None) -> "DiscreteMeasure":
        # internal constructor for arrays already known to satisfy the invariants
        obj = object.__new__(cls)
        positions.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(obj, "positions", positions)
        object.__setattr__(obj, "weights", weights)
        object.__setattr__(obj, "window", window)
        object.__setattr__(obj, "meta", {} if meta is None else meta)
        return obj

    def add_atom(self, s: float, x) -> "DiscreteMeasure":
        """Return ``eta + s delta_x``."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        s = float(s)
        if x.shape[1] != self.dim or not (s > 0.0 and np.isfinite(s)) or not np.all(np.isfinite(x)):
            raise MeasureError(f"invalid atom ({s}, {x.ravel()})")
        if not self.window.contains(x)[0]:
            raise MeasureError("atom outside window")
        if len(self) and np.any(np.all(self.positions == x, axis=1)):
            raise MeasureError("duplicate atom positions")
        return DiscreteMeasure._trusted(
            np.vstack([self.positions, x]), np.append(self.weights, s), self.window
        )

    def restrict(self, box: Window) -> "DiscreteMeasure":
        keep = box.contains(self.positions) if len(self) else np.zeros(0, bool)
        return DiscreteMeasure(self.positions[keep], self.weights[keep], self.window)


@dataclass(frozen=True, eq=False)
class MarkedConfiguration:
    """Locally finite set of marked points ``(s, x)`` with pairwise distinct sites ``x``."""

    s: np.ndarray
    x: np.ndarray
    window: Window | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        s = np.asarray(self.s, dtype=float).reshape(-1)
        if x.size == 0:
            d = self.window.dim if self.window is not None else (x.shape[1] if x.ndim == 2 else 1)
            x = x.reshape(0, d)
        _check_atoms(x, s)
        object.__setattr__(self, "s", _frozen(s))
        object.__setattr__(self, "x", _frozen(x))

    def __len__(self) -> int:
        return int(self.s.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkedConfiguration):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.x, other.x)

    def __repr__(self):
        return f"MarkedConfiguration(n={len(self)}, dim={self.dim})"


def to_configuration(eta: DiscreteMeasure) -> MarkedConfiguration:
    """Inverse of the atom map: ``sum_i s_i delta_{x_i} -> {(s_i, x_i)}``."""
    return MarkedConfiguration(eta.weights, eta.positions, eta.window)


def from_configuration(gamma: MarkedConfiguration, window: Window | None = None) -> DiscreteMeasure:
    """Map a marked configuration to the measure ``sum_i s_i delta_{x_i}``.

    Without a window (neither argument nor carried by ``gamma``) the
    bounding box of the sites is used.
    """
    window = window or gamma.window
    if window is None:
        if len(gamma) == 0:
            raise MeasureError("cannot infer a window for an empty configuration")
        lo = gamma.x.min(axis=0)
        hi = gamma.x.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        window = Window(tuple(lo), tuple(hi))
    return DiscreteMeasure(gamma.x, gamma.s, window)


def pair_hat(phi, eta: DiscreteMeasure) -> float:
    """``sum over atoms of phi(s_x, x)``; ``phi`` is vectorised over atoms."""
    if len(eta) == 0:
        return 0.0
    return float(np.sum(phi(eta.weights, eta.positions)))


def pair(f, eta: DiscreteMeasure) -> float:
    """``integral of f d eta = sum_i s_i f(x_i)``; ``f`` is vectorised over points."""
    if len(eta) == 0:
        return 0.0
    return float(np.sum(eta.weights * f(eta.positions)))


def local_mass(gamma, box: Window) -> float:
    """Total weight of points whose site lies in ``box``."""
    if isinstance(gamma, DiscreteMeasure):
        s, x = gamma.weights, gamma.positions
    else:
        s, x = gamma.s, gamma.x
    if len(s) == 0:
        return 0.0
    return float(np.sum(s[box.contains(x)]))


# -- text format -----------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps(eta: DiscreteMeasure) -> str:
    """One atom per line ``s x_1 ... x_d`` after a ``# d=<dim> window=...`` header."""
    out = io.StringIO()
    w = eta.window
    axes = ",".join(f"{_fmt(a)}..{_fmt(b)}" for a, b in zip(w.lo, w.hi))
    out.write(f"# d={w.dim} window={axes}\n")
    for s, x in zip(eta.weights, eta.positions):
        out.write(" ".join([_fmt(s), *(_fmt(c) for c in x)]) + "\n")
    return out.getvalue()


def _parse_header(line: str, periodic: bool) -> Window:
    fields = dict(tok.split("=", 1) for tok in line.lstrip("#").split() if "=" in tok)
    try:
        d = int(fields["d"])
        axes = fields["window"].split(",")
        lo, hi = zip(*(a.split("..") for a in axes))
    except (KeyError, ValueError) as exc:
        raise MeasureError(f"bad header line: {line!r}") from exc
    if len(lo) != d:
        raise MeasureError(f"header declares d={d} but window has {len(lo)} axes")
    return Window(tuple(map(float, lo)), tuple(map(float, hi)), periodic)


def loads(text: str, periodic: bool = False) -> list[DiscreteMeasure]:
    """Parse one or more measures; each block starts with its header line."""
    measures = []
    window = None
    rows: list[list[float]] = []

    def flush():
        if window is None:
            return
        arr = np.array(rows, dtype=float).reshape(-1, window.dim + 1)
        measures.append(DiscreteMeasure(arr[:, 1:], arr[:, 0], window))

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "d=" in line:
                flush()
                window = _parse_header(line, periodic)
                rows = []
            continue
        if window is None:
            raise MeasureError(f"line {lineno}: atom before header")
        vals = line.split()
        if len(vals) != window.dim + 1:
            raise MeasureError(f"line {lineno}: expected {window.dim + 1} columns, got {len(vals)}")
        rows.append([float(v) for v in vals])
    flush()
    return measures


def save(path, measures) -> None:
    if isinstance(measures, DiscreteMeasure):
        measures = [measures]
    Path(path).write_text("".join(dumps(m) for m in measures))


def load(path, periodic: bool = False) -> list[DiscreteMeasure]:
    return loads(Path(path).read_text(), periodic)

"""Radial finite-range pair potentials and their energies.

A potential ``phi(x, y) = psi(|x - y|)`` stores ``psi`` on ``[0, R]`` as a
piecewise cubic in ``scipy.interpolate.PPoly`` layout; it vanishes for
``r > R``. The same arrays feed the compiled kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PPoly
from scipy.special import gamma as gamma_fn

from . import _backend
from .measure import DiscreteMeasure, Window


def unit_ball_volume(d: int) -> float:
    return float(math.pi ** (d / 2) / gamma_fn(d / 2 + 1))


def c2_epsilon(d: int, R: float, delta: float) -> float:
    """``2 v_d d^(d/2) (R / delta + 1)``."""
    return float(2.0 * unit_ball_volume(d) * d ** (d / 2) * (R / delta + 1.0))


class PairPotential:
    """Symmetric radial potential with range ``R`` and (C2) radius ``delta``."""

    def __init__(self, pp: PPoly, R: float, delta: float, name: str = "table", params: dict | None = None):
        if pp.c.shape[0] > 4:
            raise ValueError("potential pieces must be at most cubic")
        c = np.zeros((4, pp.c.shape[1]))
        c[4 - pp.c.shape[0]:] = pp.c
        if not np.isclose(pp.x[0], 0.0) or not np.isclose(pp.x[-1], R):
            raise ValueError("breakpoints must span [0, R]")
        self.breaks = np.ascontiguousarray(pp.x[:-1], dtype=float)
        self.coeffs = np.ascontiguousarray(c, dtype=float)
        self.pp = PPoly(c, pp.x)
        self.R = float(R)
        self.delta = float(delta)
        self.name = name
        self.params = dict(params or {})
        if not (0.0 < self.delta <= self.R):
            raise ValueError("need 0 < delta <= R")

    def __repr__(self):
        return f"PairPotential({self.name}, R={self.R}, delta={self.delta}, {self.params})"

    # radial profile
    def psi(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        return np.where(r <= self.R, self.pp(np.clip(r, 0.0, self.R)), 0.0)

    def dpsi(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        return np.where(r <= self.R, self.pp.derivative()(np.clip(r, 0.0, self.R)), 0.0)

    def __call__(self, x, y) -> np.ndarray:
        d = np.atleast_2d(x) - np.atleast_2d(y)
        return self.psi(np.linalg.norm(d, axis=1))

    def grad_x(self, x, y) -> np.ndarray:
        """``nabla_x phi(x, y) = psi'(r) (x - y) / r``."""
        d = np.atleast_2d(np.asarray(x, float)) - np.atleast_2d(np.asarray(y, float))
        r = np.linalg.norm(d, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(r > 0, self.dpsi(r) / r, 0.0)
        return c[:, None] * d

    # extrema from the critical points of each cubic piece
    def _critical_values(self, lo: float, hi: float) -> np.ndarray:
        pts = [lo, hi, *self.pp.x]
        pts += list(self.pp.derivative().roots(extrapolate=False))
        pts = np.array([p for p in pts if lo <= p <= hi])
        return self.pp(pts)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._critical_values(0.0, self.R))))

    @property
    def neg_sup_norm(self) -> float:
        return float(max(0.0, -np.min(self._critical_values(0.0, self.R))))

    def inf_within(self, delta: float) -> float:
        return float(np.min(self._critical_values(0.0, delta)))

    def kernel_args(self) -> tuple:
        return self.R, self.breaks, self.coeffs


def bump(R: float = 1.0, height: float = 1.0, delta: float | None = None) -> PairPotential:
    """Repulsive ``height (1 - 3t^2 + 2t^3)``, ``t = r / R``."""
    c = np.array([[2.0 * height / R**3], [-3.0 * height / R**2], [0.0], [height]])
    return PairPotential(PPoly(c, [0.0, R]), R, delta if delta is not None else R / 2,
                         "bump", {"R": R, "height": height})


def ring(R: float = 1.0, height: float = 100.0, depth: float = 0.5, r_well: float = 0.8,
         delta: float = 0.3) -> PairPotential:
    """Hard-ish core with an attractive well of ``depth`` at ``r_well``, flat at 0, ``r_well`` and ``R``."""
    if not 0.0 < r_well < R:
        raise ValueError("need 0 < r_well < R")
    h = CubicHermiteSpline([0.0, r_well, R], [height, -depth, 0.0], [0.0, 0.0, 0.0])
    return PairPotential(PPoly(h.c, h.x), R, delta, "ring",
                         {"R": R, "height": height, "depth": depth, "r_well": r_well})


def table(r, values, delta: float) -> PairPotential:
    """Cubic spline through a tabulated radial profile on ``[0, R]``; ``values[-1]`` should be 0."""
    r = np.asarray(r, float)
    cs = CubicSpline(r, values, bc_type=((1, 0.0), (1, 0.0)))
    return PairPotential(PPoly(cs.c, cs.x), float(r[-1]), delta, "table",
                         {"r": r.tolist(), "values": list(map(float, values))})


def zero_potential(R: float = 1.0) -> PairPotential:
    """``phi = 0``; excluded by (C2), available for reference-measure code paths."""
    return PairPotential(PPoly(np.zeros((4, 1)), [0.0, R]), R, R, "zero", {"R": R})


@dataclass
class C2Result:
    epsilon: float
    inf_phi: float
    neg_sup: float
    margin: float
    passed: bool


def check_c2(phi: PairPotential, d: int, delta: float | None = None) -> C2Result:
    """(C2) with the potential's ``delta``: ``inf_{r <= delta} psi > eps ||psi^-||``."""
    delta = phi.delta if delta is None else delta
    eps = c2_epsilon(d, phi.R, delta)
    inf_phi = phi.inf_within(delta)
    neg = phi.neg_sup_norm
    margin = inf_phi - eps * neg
    return C2Result(eps, inf_phi, neg, margin, bool(margin > 0))


# -- energies ------------------------------------------------------------------

def _kernel_arrays(eta: DiscreteMeasure):
    return (np.ascontiguousarray(eta.positions, dtype=float),
            np.ascontiguousarray(eta.weights, dtype=float))


def _boundary_arrays(xi: DiscreteMeasure | None, d: int):
    if xi is None or len(xi) == 0:
        return np.zeros((0, d)), np.zeros(0)
    return _kernel_arrays(xi)


def check_boundary(xi: DiscreteMeasure | None, window: Window) -> None:
    if xi is not None and len(xi):
        lo, hi = window.lo_arr, window.hi_arr
        inside = np.all((xi.positions > lo) & (xi.positions < hi), axis=1)
        if np.any(inside):
            raise ValueError("boundary atoms must lie outside the window")


def interaction_fields(eta: DiscreteMeasure, phi: PairPotential, xi: DiscreteMeasure | None = None,
                       backend=None):
    """Per-atom ``u_i = sum_{j != i} s_j phi(x_i, x_j)`` (boundary atoms included), ``nabla u_i``
    and the boundary part of ``u_i``."""
    k = backend or _backend.kernels
    pos, w = _kernel_arrays(eta)
    bpos, bw = _boundary_arrays(xi, eta.dim)
    win = eta.window
    return k.interaction_fields(pos, w, len(eta), bpos, bw, win.lo_arr, win.hi_arr, win.periodic,
                                *phi.kernel_args())


def hamiltonian_local(eta: DiscreteMeasure, phi: PairPotential, xi: DiscreteMeasure | None = None,
                      backend=None) -> float:
    """``1/2 sum_{i != j} s_i s_j phi(x_i, x_j) + sum_{i, b} s_i s_b phi(x_i, x_b)``."""
    k = backend or _backend.kernels
    pos, w = _kernel_arrays(eta)
    bpos, bw = _boundary_arrays(xi, eta.dim)
    win = eta.window
    return float(k.hamiltonian(pos, w, len(eta), bpos, bw, win.lo_arr, win.hi_arr, win.periodic,
                               *phi.kernel_args()))


def local_field(x, eta: DiscreteMeasure, phi: PairPotential, skip: int = -1,
                xi: DiscreteMeasure | None = None, backend=None):
    """``(sum_j s_j phi(x, x_j), its x-gradient)`` over atoms other than ``skip``."""
    k = backend or _backend.kernels
    pos, w = _kernel_arrays(eta)
    bpos, bw = _boundary_arrays(xi, eta.dim)
    win = eta.window
    u, g = k.local_field(pos, w, len(eta), np.ascontiguousarray(x, dtype=float), skip, bpos, bw,
                         win.lo_arr, win.hi_arr, win.periodic, *phi.kernel_args())
    return float(u), np.asarray(g)


def relative_energy(s: float, x, eta: DiscreteMeasure, phi: PairPotential,
                    xi: DiscreteMeasure | None = None) -> float:
    """``s sum_j s_j phi(x, x_j)``: energy of inserting ``s delta_x`` into ``eta``."""
    return float(s) * local_field(x, eta, phi, -1, xi)[0]

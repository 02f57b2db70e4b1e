"""Polynomial smoothstep ramps and compactly supported plateau bumps.

A smoothstep of order ``N`` is the unique polynomial of degree ``2N + 1`` on
[0, 1] going from 0 to 1 with its first ``N`` derivatives vanishing at both
ends, so the ramp glued to constants is ``C^N``.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import Polynomial


@lru_cache(maxsize=None)
def _smoothstep_poly(order: int) -> tuple[Polynomial, Polynomial, Polynomial]:
    if order < 0:
        raise ValueError("smoothstep order must be >= 0")
    coef = np.zeros(2 * order + 2)
    for k in range(order + 1):
        coef[order + 1 + k] = comb(order + k, k) * comb(2 * order + 1, order - k) * (-1) ** k
    p = Polynomial(coef)
    return p, p.deriv(1), p.deriv(2)


@lru_cache(maxsize=None)
def _coefs(order: int) -> tuple[np.ndarray, ...]:
    """Highest-degree-first coefficients for ``np.polyval``."""
    return tuple(q.coef[::-1].copy() for q in _smoothstep_poly(order))


def smoothstep(u, order: int = 1, nder: int = 0):
    """Smoothstep ramp (or its ``nder``-th derivative, ``nder <= 2``) clamped outside [0, 1]."""
    u = np.asarray(u, dtype=float)
    c = _coefs(order)[nder]
    inside = (u > 0.0) & (u < 1.0)
    out = np.where(inside, np.polyval(c, np.clip(u, 0.0, 1.0)), 0.0)
    if nder == 0:
        out = np.where(u >= 1.0, 1.0, out)
    return out


def max_slope(order: int) -> float:
    """Maximum of the ramp derivative, attained at u = 1/2 by symmetry."""
    return float(_smoothstep_poly(order)[1](0.5))


class Plateau:
    """1-d bump: 0 outside [lo, hi], 1 on [lo_flat, hi_flat], smoothstep ramps in between.

    ``lo_flat == hi_flat`` gives a single peak.
    """

    def __init__(self, lo: float, lo_flat: float, hi_flat: float, hi: float, order: int = 2):
        if not (lo < lo_flat <= hi_flat < hi):
            raise ValueError(f"need lo < lo_flat <= hi_flat < hi, got {(lo, lo_flat, hi_flat, hi)}")
        self.lo, self.lo_flat, self.hi_flat, self.hi = float(lo), float(lo_flat), float(hi_flat), float(hi)
        self.order = order

    @classmethod
    def peak(cls, lo: float, hi: float, order: int = 2) -> "Plateau":
        mid = 0.5 * (lo + hi)
        return cls(lo, mid, mid, hi, order)

    def __repr__(self):
        return f"Plateau({self.lo!r}, {self.lo_flat!r}, {self.hi_flat!r}, {self.hi!r}, order={self.order})"

    def derivs(self, t):
        """Return value, first and second derivative at ``t``."""
        t = np.asarray(t, dtype=float)
        a = self.lo_flat - self.lo
        b = self.hi - self.hi_flat
        up = (t - self.lo) / a
        down = (t - self.hi_flat) / b
        on_up = t < self.lo_flat
        u = np.where(on_up, up, down)
        inside = (u > 0.0) & (u < 1.0)
        uc = np.clip(u, 0.0, 1.0)
        c0, c1, c2 = _coefs(self.order)
        r0 = np.where(inside, np.polyval(c0, uc), np.where(u >= 1.0, 1.0, 0.0))
        r1 = np.where(inside, np.polyval(c1, uc), 0.0)
        r2 = np.where(inside, np.polyval(c2, uc), 0.0)
        v = np.where(on_up, r0, 1.0 - r0)
        d1 = np.where(on_up, r1 / a, -r1 / b)
        d2 = np.where(on_up, r2 / a**2, -r2 / b**2)
        return v, d1, d2

    def __call__(self, t):
        return self.derivs(t)[0]

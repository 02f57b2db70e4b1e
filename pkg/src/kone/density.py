"""Weight densities ``l(s, x)`` defining Levy intensities ``sigma(ds, dx) = l(s, x) / s ds dx``.

The exponential family ``l = beta(x) exp(-s / alpha(x))`` is sampled exactly.
In the variable ``t = s / alpha`` the truncated weight law has density
``e^-t / t``, whose mass on ``[a, b]`` is ``E1(a) - E1(b)``.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import exp1

from .measure import Window

QUAD_EPSREL = 1e-9


class DensityError(RuntimeError):
    pass


def _nquad(f, window: Window) -> float:
    ranges = list(zip(window.lo, window.hi))
    val, err = integrate.nquad(lambda *x: f(np.array(x)), ranges, opts={"epsrel": QUAD_EPSREL, "limit": 200})
    if not np.isfinite(val) or err > max(1e-6 * abs(val), 1e-12):
        raise DensityError(f"quadrature did not converge (value {val}, error {err})")
    return float(val)


def sample_e1(t_lo: float, t_hi: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from the density ``e^-t / t`` restricted to ``[t_lo, t_hi]`` (``t_hi`` may be inf).

    The interval is split at ``c = max(t_lo, 1)``. Below ``c`` a log-uniform
    proposal is thinned by ``e^-(t - t_lo)``; above it a shifted exponential
    is thinned by ``c / t``. Both pieces are chosen by their exact masses.
    """
    if not (0.0 < t_lo < t_hi):
        raise ValueError(f"need 0 < t_lo < t_hi, got {t_lo}, {t_hi}")
    c = min(max(t_lo, 1.0), t_hi)
    m1 = float(exp1(t_lo) - exp1(c)) if c > t_lo else 0.0
    m2 = float(exp1(c) - exp1(t_hi)) if t_hi > c else 0.0
    n1 = rng.binomial(size, m1 / (m1 + m2)) if m2 > 0 else size
    out = np.empty(size)
    out[:n1] = _low_piece(t_lo, c, n1, rng)
    out[n1:] = _high_piece(c, t_hi, size - n1, rng)
    rng.shuffle(out)
    return out


def _low_piece(a, b, n, rng):
    got = np.empty(0)
    la, lb = math.log(a), math.log(b)
    while got.size < n:
        m = int(1.2 * (n - got.size) / max(math.exp(-(b - a)), 0.3)) + 8
        t = np.exp(rng.uniform(la, lb, m))
        keep = rng.random(m) < np.exp(-(t - a))
        got = np.concatenate([got, t[keep]])
    return got[:n]


def _high_piece(c, b, n, rng):
    got = np.empty(0)
    while got.size < n:
        m = int(1.5 * (n - got.size)) + 8
        if math.isinf(b):
            t = c + rng.exponential(size=m)
        else:
            t = c - np.log1p(-rng.random(m) * -np.expm1(-(b - c)))
        keep = rng.random(m) < c / t
        got = np.concatenate([got, t[keep]])
    return got[:n]


class WeightDensity:
    """Interface: ``l``, ``dlog_ds`` and ``grad_x_log`` are vectorised over atoms."""

    family = "custom"
    homogeneous = False
    samplable = False

    def l(self, s, x):
        raise NotImplementedError

    def dlog_ds(self, s, x):
        raise NotImplementedError

    def grad_x_log(self, s, x):
        raise NotImplementedError

    def intensity(self, s, x):
        """Density of ``sigma`` with respect to ``ds dx``."""
        s = np.asarray(s, float)
        return self.l(s, x) / s

    def check_integrability(self, window: Window, s_max: float = np.inf) -> dict:
        """Numerical ``int l ds dx`` and ``int s l ds dx`` over the window."""
        def inner(x, p):
            v, _ = integrate.quad(lambda s: s**p * float(self.l(s, x[None, :])[0]), 0.0, s_max,
                                  epsrel=QUAD_EPSREL, limit=200)
            return v
        m0 = _nquad(lambda x: inner(x, 0), window)
        m1 = _nquad(lambda x: inner(x, 1), window)
        return {"int_l": m0, "int_sl": m1, "finite": bool(np.isfinite(m0) and np.isfinite(m1))}


class ExponentialFamily(WeightDensity):
    """``l(s, x) = beta(x) exp(-s / alpha(x))``.

    ``alpha`` and ``beta`` are positive constants or callables on ``(n, d)``
    position arrays. Callables need ``grad_alpha`` / ``grad_beta`` for the
    calculus; they default to zero (constant fields).
    """

    samplable = True

    def __init__(self, alpha=1.0, beta=1.0, grad_alpha: Callable | None = None,
                 grad_beta: Callable | None = None):
        self.homogeneous = not (callable(alpha) or callable(beta))
        self._alpha, self._beta = alpha, beta
        self._galpha, self._gbeta = grad_alpha, grad_beta
        if self.homogeneous:
            if not (alpha > 0 and beta > 0):
                raise ValueError("alpha and beta must be positive")
            self.family = "gamma" if alpha == 1.0 and beta == 1.0 else "exp"
        else:
            self.family = "exp"

    def __repr__(self):
        return f"ExponentialFamily(alpha={self._alpha!r}, beta={self._beta!r})"

    def alpha(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        a = self._alpha(x) if callable(self._alpha) else np.full(x.shape[0], float(self._alpha))
        return np.asarray(a, float)

    def beta(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        b = self._beta(x) if callable(self._beta) else np.full(x.shape[0], float(self._beta))
        return np.asarray(b, float)

    def _grad(self, g, x):
        x = np.atleast_2d(np.asarray(x, float))
        return np.zeros_like(x) if g is None else np.asarray(g(x), float)

    def l(self, s, x):
        return self.beta(x) * np.exp(-np.asarray(s, float) / self.alpha(x))

    def dlog_ds(self, s, x):
        return -1.0 / self.alpha(x) * np.ones_like(np.asarray(s, float))

    def grad_x_log(self, s, x):
        a, b = self.alpha(x), self.beta(x)
        s = np.asarray(s, float).reshape(-1)
        return (self._grad(self._gbeta, x) / b[:, None]
                + (s / a**2)[:, None] * self._grad(self._galpha, x))

    # -- truncated masses -------------------------------------------------

    def sigma_mass(self, window: Window, s_lo: float, s_hi: float = np.inf) -> float:
        """``sigma([s_lo, s_hi] x window)``."""
        if not (0.0 < s_lo < s_hi):
            raise ValueError("need 0 < s_lo < s_hi")
        if self.homogeneous:
            a, b = float(self._alpha), float(self._beta)
            return window.volume * b * float(exp1(s_lo / a) - exp1(s_hi / a))
        return _nquad(lambda x: float(self._band_density(x[None, :], s_lo, s_hi)[0]), window)

    def ignored_mass(self, window: Window, s_min: float) -> float:
        """Expected weight carried by atoms below ``s_min``: ``int_0^s_min l ds dx``."""
        def f(x):
            a, b = self.alpha(x), self.beta(x)
            return b * a * -np.expm1(-s_min / a)
        if self.homogeneous:
            return window.volume * float(f(np.zeros((1, window.dim)))[0])
        return _nquad(lambda x: float(f(x[None, :])[0]), window)

    def _band_density(self, x, s_lo, s_hi):
        a, b = self.alpha(x), self.beta(x)
        return b * (exp1(s_lo / a) - exp1(s_hi / a))

    def check_integrability(self, window: Window, s_max: float = np.inf) -> dict:
        out = super().check_integrability(window, s_max)
        # int_0^inf l / s ds diverges for every x: log singularity at 0
        out["diverges_at_zero"] = True
        return out

    # -- sampling ------------------------------------------------------------

    def sample_x(self, window: Window, s_lo: float, s_hi: float, size: int, rng,
                 grid: int = 33) -> np.ndarray:
        """Positions i.i.d. with density proportional to ``sigma([s_lo, s_hi] x dx)``."""
        lo, hi = window.lo_arr, window.hi_arr
        if self.homogeneous:
            return rng.uniform(lo, hi, (size, window.dim))
        axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, window.dim)
        bound = 1.25 * float(np.max(self._band_density(mesh, s_lo, s_hi)))
        got = np.empty((0, window.dim))
        while got.shape[0] < size:
            m = 2 * (size - got.shape[0]) + 8
            x = rng.uniform(lo, hi, (m, window.dim))
            dens = self._band_density(x, s_lo, s_hi)
            if np.any(dens > bound):
                raise DensityError("rejection bound violated; refine the grid")
            got = np.vstack([got, x[rng.random(m) * bound < dens]])
        return got[:size]

    def sample_s(self, x, s_lo: float, s_hi: float, rng) -> np.ndarray:
        """One weight per position from ``sigma(ds | x)`` restricted to ``[s_lo, s_hi]``."""
        a = self.alpha(x)
        if self.homogeneous:
            return a[0] * sample_e1(s_lo / a[0], s_hi / a[0], a.size, rng)
        return np.array([ai * sample_e1(s_lo / ai, s_hi / ai, 1, rng)[0] for ai in a])

    def sample_sigma(self, window: Window, s_lo: float, s_hi: float, size: int, rng):
        """``size`` i.i.d. draws ``(s, x)`` from normalised ``sigma`` on ``[s_lo, s_hi] x window``."""
        x = self.sample_x(window, s_lo, s_hi, size, rng)
        return self.sample_s(x, s_lo, s_hi, rng), x


def gamma() -> ExponentialFamily:
    """Gamma measure intensity, ``l(s, x) = e^-s``."""
    return ExponentialFamily(1.0, 1.0)


class CustomDensity(WeightDensity):
    """User-supplied ``l`` with log-derivatives; usable by the calculus but not samplable."""

    def __init__(self, l: Callable, dlog_ds: Callable, grad_x_log: Callable):
        self._l, self._ds, self._gx = l, dlog_ds, grad_x_log

    def l(self, s, x):
        return np.asarray(self._l(np.asarray(s, float), np.atleast_2d(x)), float)

    def dlog_ds(self, s, x):
        return np.asarray(self._ds(np.asarray(s, float), np.atleast_2d(x)), float)

    def grad_x_log(self, s, x):
        return np.asarray(self._gx(np.asarray(s, float), np.atleast_2d(x)), float)

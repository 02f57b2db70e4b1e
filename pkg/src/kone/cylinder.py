"""Cylinder functions ``F(eta) = g(<<phi_1, eta>>, ..., <<phi_N, eta>>)``.

Inner functions are ``amp * s^p * A(s) * prod_i B_i(x_i)`` with plateau bumps
``A``, ``B_i``; every derivative the calculus needs is computed in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measure import DiscreteMeasure, Window
from .smooth import Plateau


@dataclass
class InnerDerivs:
    """Derivatives of one inner function at ``k`` atoms."""

    value: np.ndarray   # (k,)
    ds: np.ndarray      # (k,)
    dss: np.ndarray     # (k,)
    grad_x: np.ndarray  # (k, d)
    hess_x: np.ndarray  # (k, d, d)
    dsx: np.ndarray     # (k, d)

    @property
    def lap_x(self) -> np.ndarray:
        return np.trace(self.hess_x, axis1=1, axis2=2)


class TestFunction:
    """``phi(s, x) = amp * s^p * A(s) * prod_i B_i(x_i)``, compactly supported in ``(0, inf) x R^d``."""

    __test__ = False  # keeps pytest from collecting it

    def __init__(self, s_bump: Plateau, x_bumps: list, amp: float = 1.0, power: float = 0.0):
        if s_bump.lo <= 0:
            raise ValueError("s-support must stay away from 0")
        self.s_bump = s_bump
        self.x_bumps = list(x_bumps)
        self.amp = float(amp)
        self.power = float(power)

    @classmethod
    def box(cls, s_lo: float, s_hi: float, lo, hi, amp: float = 1.0, power: float = 0.0,
            flat: float = 0.0, order: int = 2) -> "TestFunction":
        """Bump supported on ``[s_lo, s_hi] x [lo, hi]``; ``flat`` is the plateau fraction of each side."""
        def plateau(a, b):
            m, h = 0.5 * (a + b), 0.5 * flat * (b - a)
            return Plateau(a, m - h, m + h, b, order)
        return cls(plateau(s_lo, s_hi), [plateau(a, b) for a, b in zip(lo, hi)], amp, power)

    def __repr__(self):
        return f"TestFunction(amp={self.amp}, power={self.power}, s={self.s_bump}, x={self.x_bumps})"

    @property
    def dim(self) -> int:
        return len(self.x_bumps)

    @property
    def s_support(self) -> tuple[float, float]:
        return self.s_bump.lo, self.s_bump.hi

    @property
    def x_support(self) -> Window:
        return Window(tuple(b.lo for b in self.x_bumps), tuple(b.hi for b in self.x_bumps))

    def _s_part(self, s):
        a, da, dda = self.s_bump.derivs(s)
        p = self.power
        if p == 0.0:
            return self.amp * a, self.amp * da, self.amp * dda
        sp = s**p
        v = sp * a
        d1 = p * s ** (p - 1) * a + sp * da
        d2 = p * (p - 1) * s ** (p - 2) * a + 2 * p * s ** (p - 1) * da + sp * dda
        return self.amp * v, self.amp * d1, self.amp * d2

    def __call__(self, s, x) -> np.ndarray:
        s = np.asarray(s, float).reshape(-1)
        x = np.atleast_2d(np.asarray(x, float))
        out = self._s_part(s)[0]
        for i, b in enumerate(self.x_bumps):
            out = out * b(x[:, i])
        return out

    def derivs(self, s, x) -> InnerDerivs:
        s = np.asarray(s, float).reshape(-1)
        x = np.atleast_2d(np.asarray(x, float))
        k, d = x.shape
        S, S1, S2 = self._s_part(s)
        B = np.empty((k, d))
        B1 = np.empty((k, d))
        B2 = np.empty((k, d))
        for i, b in enumerate(self.x_bumps):
            B[:, i], B1[:, i], B2[:, i] = b.derivs(x[:, i])
        X = np.prod(B, axis=1)
        gradX = np.empty((k, d))
        hessX = np.empty((k, d, d))
        for i in range(d):
            others = np.prod(np.delete(B, i, axis=1), axis=1)
            gradX[:, i] = B1[:, i] * others
            hessX[:, i, i] = B2[:, i] * others
            for j in range(i + 1, d):
                rest = np.prod(np.delete(B, [i, j], axis=1), axis=1)
                hessX[:, i, j] = hessX[:, j, i] = B1[:, i] * B1[:, j] * rest
        return InnerDerivs(S * X, S1 * X, S2 * X, S[:, None] * gradX,
                           S[:, None, None] * hessX, S1[:, None] * gradX)


# -- outer functions ------------------------------------------------------------

class Outer:
    """Smooth ``g: R^N -> R`` with gradient and Hessian.

    The ``*_rows`` variants evaluate at every row of an ``(m, N)`` array.
    """

    name = "outer"

    def value(self, y):
        raise NotImplementedError

    def grad(self, y):
        raise NotImplementedError

    def hess(self, y):
        raise NotImplementedError

    def value_rows(self, Y):
        return np.array([self.value(y) for y in Y])

    def grad_rows(self, Y):
        return np.array([self.grad(y) for y in Y]).reshape(Y.shape)

    def hess_rows(self, Y):
        return np.array([self.hess(y) for y in Y]).reshape(Y.shape + Y.shape[1:])


class Linear(Outer):
    name = "linear"

    def __init__(self, coef, const: float = 0.0):
        self.coef = np.asarray(coef, float)
        self.const = float(const)

    def value(self, y):
        return float(self.coef @ y + self.const)

    def grad(self, y):
        return self.coef.copy()

    def hess(self, y):
        return np.zeros((y.size, y.size))

    def value_rows(self, Y):
        return Y @ self.coef + self.const

    def grad_rows(self, Y):
        return np.broadcast_to(self.coef, Y.shape).copy()

    def hess_rows(self, Y):
        return np.zeros(Y.shape + Y.shape[1:])


class Constant(Outer):
    name = "constant"

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def value(self, y):
        return self.c

    def grad(self, y):
        return np.zeros(y.size)

    def hess(self, y):
        return np.zeros((y.size, y.size))

    def value_rows(self, Y):
        return np.full(Y.shape[0], self.c)

    def grad_rows(self, Y):
        return np.zeros(Y.shape)

    def hess_rows(self, Y):
        return np.zeros(Y.shape + Y.shape[1:])


class Sin(Outer):
    """``sin(a . y + b)``."""

    name = "sin"

    def __init__(self, a, b: float = 0.0):
        self.a = np.asarray(a, float)
        self.b = float(b)

    def value(self, y):
        return float(np.sin(self.a @ y + self.b))

    def grad(self, y):
        return np.cos(self.a @ y + self.b) * self.a

    def hess(self, y):
        return -np.sin(self.a @ y + self.b) * np.outer(self.a, self.a)

    def value_rows(self, Y):
        return np.sin(Y @ self.a + self.b)

    def grad_rows(self, Y):
        return np.cos(Y @ self.a + self.b)[:, None] * self.a

    def hess_rows(self, Y):
        return -np.sin(Y @ self.a + self.b)[:, None, None] * np.outer(self.a, self.a)


class Tanh(Outer):
    """``tanh(a . y + b)``."""

    name = "tanh"

    def __init__(self, a, b: float = 0.0):
        self.a = np.asarray(a, float)
        self.b = float(b)

    def value(self, y):
        return float(np.tanh(self.a @ y + self.b))

    def grad(self, y):
        return (1.0 - np.tanh(self.a @ y + self.b) ** 2) * self.a

    def hess(self, y):
        t = np.tanh(self.a @ y + self.b)
        return -2.0 * t * (1.0 - t**2) * np.outer(self.a, self.a)

    def value_rows(self, Y):
        return np.tanh(Y @ self.a + self.b)

    def grad_rows(self, Y):
        return (1.0 - np.tanh(Y @ self.a + self.b) ** 2)[:, None] * self.a

    def hess_rows(self, Y):
        t = np.tanh(Y @ self.a + self.b)
        return (-2.0 * t * (1.0 - t**2))[:, None, None] * np.outer(self.a, self.a)


class Gaussian(Outer):
    """``exp(-|y - c|^2 / 2)``."""

    name = "gaussian"

    def __init__(self, centre):
        self.c = np.asarray(centre, float)

    def value(self, y):
        return float(np.exp(-0.5 * np.sum((y - self.c) ** 2)))

    def grad(self, y):
        return -(y - self.c) * self.value(y)

    def hess(self, y):
        r = y - self.c
        return (np.outer(r, r) - np.eye(y.size)) * self.value(y)

    def value_rows(self, Y):
        return np.exp(-0.5 * np.sum((Y - self.c) ** 2, axis=1))

    def grad_rows(self, Y):
        return -(Y - self.c) * self.value_rows(Y)[:, None]

    def hess_rows(self, Y):
        R = Y - self.c
        return (R[:, :, None] * R[:, None, :] - np.eye(Y.shape[1])) * self.value_rows(Y)[:, None, None]


class Product(Outer):
    """``y_0 * y_1``."""

    name = "product"

    def value(self, y):
        return float(y[0] * y[1])

    def grad(self, y):
        g = np.zeros(y.size)
        g[0], g[1] = y[1], y[0]
        return g

    def hess(self, y):
        h = np.zeros((y.size, y.size))
        h[0, 1] = h[1, 0] = 1.0
        return h

    def value_rows(self, Y):
        return Y[:, 0] * Y[:, 1]

    def grad_rows(self, Y):
        G = np.zeros(Y.shape)
        G[:, 0], G[:, 1] = Y[:, 1], Y[:, 0]
        return G

    def hess_rows(self, Y):
        H = np.zeros(Y.shape + Y.shape[1:])
        H[:, 0, 1] = H[:, 1, 0] = 1.0
        return H


class CylinderFunction:
    """``F(eta) = g(<<phi_1, eta>>, ..., <<phi_N, eta>>)``."""

    def __init__(self, outer: Outer, inner: list, name: str | None = None):
        self.g = outer
        self.phis = list(inner)
        self.name = name or outer.name

    def __repr__(self):
        return f"CylinderFunction({self.name}, N={len(self.phis)})"

    @property
    def N(self) -> int:
        return len(self.phis)

    def pairings(self, eta: DiscreteMeasure) -> np.ndarray:
        if len(eta) == 0:
            return np.zeros(self.N)
        return np.array([float(np.sum(p(eta.weights, eta.positions))) for p in self.phis])

    def __call__(self, eta: DiscreteMeasure) -> float:
        return self.g.value(self.pairings(eta))

    def inner_derivs(self, s, x) -> list[InnerDerivs]:
        return [p.derivs(s, x) for p in self.phis]

    @property
    def support(self) -> tuple[float, float, Window]:
        """Bounding box ``(s_lo, s_hi, x-box)`` of all inner supports."""
        s_lo = min(p.s_support[0] for p in self.phis)
        s_hi = max(p.s_support[1] for p in self.phis)
        lo = np.min([p.x_support.lo_arr for p in self.phis], axis=0)
        hi = np.max([p.x_support.hi_arr for p in self.phis], axis=0)
        return s_lo, s_hi, Window(tuple(lo), tuple(hi))


def battery(window: Window, s_min: float = 1e-3, margin: float = 0.0, order: int = 4,
            s_scale: float = 1.0) -> dict[str, CylinderFunction]:
    """Built-in cylinder functions with supports inside ``window`` shrunk by ``margin``.

    Weight supports start above ``2 s_min``; ``s_scale`` stretches their upper
    ends. Ramps are ``C^order``; the weak error of one Euler step is first
    order only for ``order >= 4``.
    """
    lo = window.lo_arr + margin
    hi = window.hi_arr - margin
    L = hi - lo
    mid = 0.5 * (lo + hi)
    s0 = max(2 * s_min, 0.05)
    k = float(s_scale)
    phi_a = TestFunction.box(s0, 2.5 * k, lo + 0.05 * L, hi - 0.05 * L, flat=0.3, order=order)
    phi_b = TestFunction.box(0.3, 4.0 * k, lo + 0.05 * L, mid + 0.2 * L, power=1.0, flat=0.2, order=order)
    phi_c = TestFunction.box(s0, 1.5 * k, mid - 0.2 * L, hi - 0.05 * L, amp=2.0, flat=0.0, order=order)
    return {
        "linear": CylinderFunction(Linear([1.0]), [phi_a], "linear"),
        "linear2": CylinderFunction(Linear([0.5, -1.0], 0.2), [phi_b, phi_c], "linear2"),
        "sin": CylinderFunction(Sin([0.7, 0.4], 0.3), [phi_a, phi_b], "sin"),
        "tanh": CylinderFunction(Tanh([0.5, -0.3], 0.1), [phi_b, phi_c], "tanh"),
        "gaussian": CylinderFunction(Gaussian([0.5, 0.2]), [phi_a, phi_c], "gaussian"),
        "product": CylinderFunction(Product(), [phi_a, phi_c], "product"),
        "constant": CylinderFunction(Constant(1.5), [phi_a], "constant"),
    }


BATTERY_PAIRS = [("linear", "linear"), ("linear", "sin"), ("sin", "tanh"),
                 ("gaussian", "linear2"), ("product", "gaussian"), ("tanh", "product")]

"""Sampling the completely random measure with intensity ``sigma`` and checking its identities."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import exp1

from .density import QUAD_EPSREL, DensityError, ExponentialFamily, WeightDensity
from .measure import DiscreteMeasure, Window
from .rng import make_rng, map_replicas
from .smooth import Plateau
from .stats import mean_se


@dataclass(frozen=True)
class CrmSampleParams:
    s_min: float
    window: Window
    seed: int = 0

    def __post_init__(self):
        if not self.s_min > 0:
            raise ValueError("s_min must be positive")


def _require_samplable(l: WeightDensity):
    if not getattr(l, "samplable", False):
        raise DensityError(f"{type(l).__name__} cannot be sampled; use an ExponentialFamily")


def sample_crm(l: WeightDensity, p: CrmSampleParams, rng=None) -> DiscreteMeasure:
    """Poisson process of atoms on ``[s_min, inf) x window`` with intensity ``sigma``.

    ``meta`` records the truncation level, the sampled ``sigma`` mass and the
    expected weight of the ignored atoms below ``s_min``.
    """
    _require_samplable(l)
    rng = make_rng(p.seed if rng is None else rng)
    mass = l.sigma_mass(p.window, p.s_min)
    n = int(rng.poisson(mass))
    if n:
        s, x = l.sample_sigma(p.window, p.s_min, np.inf, n, rng)
    else:
        s, x = np.zeros(0), np.zeros((0, p.window.dim))
    meta = {"s_min": p.s_min, "sigma_mass": mass, "expected_ignored_mass": l.ignored_mass(p.window, p.s_min)}
    return DiscreteMeasure(x, s, p.window, meta)


def sample_crm_batch(l: WeightDensity, p: CrmSampleParams, n: int, n_workers: int | None = None) -> list:
    """``n`` independent samples; replica ``i`` uses the ``i``-th stream spawned from ``p.seed``."""
    _require_samplable(l)
    mass = l.sigma_mass(p.window, p.s_min)
    ignored = l.ignored_mass(p.window, p.s_min)
    meta = {"s_min": p.s_min, "sigma_mass": mass, "expected_ignored_mass": ignored}
    dim = p.window.dim

    def one(_, rng):
        k = int(rng.poisson(mass))
        if k:
            s, x = l.sample_sigma(p.window, p.s_min, np.inf, k, rng)
        else:
            s, x = np.zeros(0), np.zeros((0, dim))
        return DiscreteMeasure(x, s, p.window, dict(meta))

    return map_replicas(one, p.seed, n, n_workers)


# -- Laplace functional -----------------------------------------------------------

@dataclass
class StepFunction:
    """Nonnegative ``f = sum_i v_i 1_{B_i}`` over disjoint boxes ``B_i``."""

    boxes: list
    values: list

    def __post_init__(self):
        if len(self.boxes) != len(self.values) or any(v < 0 for v in self.values):
            raise ValueError("need one nonnegative value per box")

    @classmethod
    def constant(cls, window: Window, value: float) -> "StepFunction":
        return cls([window], [float(value)])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        out = np.zeros(x.shape[0])
        for box, v in zip(self.boxes, self.values):
            out = np.where(box.contains(x), v, out)
        return out


def _intersect(a: Window, b: Window) -> Window | None:
    lo = np.maximum(a.lo_arr, b.lo_arr)
    hi = np.minimum(a.hi_arr, b.hi_arr)
    if np.any(lo >= hi):
        return None
    return Window(tuple(lo), tuple(hi))


def laplace_functional(l: ExponentialFamily, f: StepFunction, window: Window,
                       s_min: float | None = None) -> float:
    """``E exp(-<f, eta>) = exp(int (e^{-s f(x)} - 1) d sigma)``.

    The inner ``s`` integral is ``-beta log(1 + alpha f)`` for the full
    measure and ``beta (E1(s_min (f + 1/alpha)) - E1(s_min / alpha))`` when
    atoms below ``s_min`` are dropped.
    """
    def inner(x, v):
        a, b = l.alpha(x), l.beta(x)
        if s_min is None:
            return -b * np.log1p(a * v)
        return b * (exp1(s_min * (v + 1.0 / a)) - exp1(s_min / a))

    total = 0.0
    for box, v in zip(f.boxes, f.values):
        part = _intersect(box, window)
        if part is None or v == 0:
            continue
        if l.homogeneous:
            total += part.volume * float(inner(np.zeros((1, part.dim)), v)[0])
        else:
            val, err = integrate.nquad(lambda *x: float(inner(np.array([x]), v)[0]),
                                       list(zip(part.lo, part.hi)), opts={"epsrel": QUAD_EPSREL})
            if not np.isfinite(val):
                raise DensityError("Laplace functional quadrature failed")
            total += val
    return float(np.exp(total))


# -- Mecke identity --------------------------------------------------------------------

@dataclass
class AtomFunctional:
    """``F(s, x, eta)`` vanishing unless ``s in [s_lo, s_hi]`` and ``x in box``.

    ``fn(s, x, eta)`` is vectorised over atoms: ``s`` has shape ``(k,)``,
    ``x`` shape ``(k, d)``, and the result shape ``(k,)``. ``eta_free``
    marks functionals that ignore ``eta``; their inserted-atom side is then
    evaluated in one vectorised call.
    """

    fn: Callable
    s_lo: float
    s_hi: float
    box: Window
    name: str = "F"
    eta_free: bool = False

    def __call__(self, s, x, eta) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_1d(s), np.atleast_2d(x), eta), float)

    def atom_sum(self, eta) -> float:
        """``sum over atoms of eta of F(s_x, x, eta)``."""
        if len(eta) == 0:
            return 0.0
        return float(np.sum(self(eta.weights, eta.positions, eta)))

    def inserted(self, s: float, x, eta) -> float:
        """``F(s, x, eta + s delta_x)``."""
        return float(self(s, x, eta.add_atom(s, x))[0])


class ProductBump:
    """Smooth product bump ``A(s) prod_i B_i(x_i)`` peaking at the centre of ``[s_lo, s_hi] x box``."""

    def __init__(self, s_lo: float, s_hi: float, box: Window, order: int = 2):
        self.s_factor = Plateau.peak(s_lo, s_hi, order)
        self.x_factors = [Plateau.peak(a, b, order) for a, b in zip(box.lo, box.hi)]
        self.s_lo, self.s_hi, self.box = s_lo, s_hi, box

    def __call__(self, s, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = self.s_factor(np.asarray(s, float))
        for k, p in enumerate(self.x_factors):
            out = out * p(x[:, k])
        return out


def bump_sx(s_lo: float, s_hi: float, box: Window, order: int = 2) -> ProductBump:
    return ProductBump(s_lo, s_hi, box, order)


def _quad(f, a, b, points=None) -> float:
    val, err = integrate.quad(f, a, b, epsrel=QUAD_EPSREL, epsabs=0.0, limit=200, points=points)
    return float(val)


def sigma_integral(l: WeightDensity, f: Callable, s_lo: float, s_hi: float, box: Window) -> float:
    """``int f d sigma`` over ``[s_lo, s_hi] x box`` by adaptive quadrature.

    A ``ProductBump`` against a homogeneous density separates into 1-d
    integrals; anything else goes through nested quadrature.
    """
    if isinstance(f, ProductBump) and getattr(l, "homogeneous", False):
        x0 = np.zeros((1, box.dim))
        ps = f.s_factor
        total = _quad(lambda s: float(ps(s) * l.l(np.array([s]), x0)[0]) / s, s_lo, s_hi,
                      points=[ps.lo_flat, ps.hi_flat])
        for (a, b), p in zip(zip(box.lo, box.hi), f.x_factors):
            total *= _quad(lambda t: float(p(t)), a, b, points=[p.lo_flat, p.hi_flat])
        return total

    def g(*args):
        s, x = args[0], np.array([args[1:]])
        return float(f(np.array([s]), x)[0] * l.l(np.array([s]), x)[0] / s)
    ranges = [(s_lo, s_hi), *zip(box.lo, box.hi)]
    val, err = integrate.nquad(g, ranges, opts={"epsrel": QUAD_EPSREL, "limit": 100})
    return float(val)


def mecke_battery(window: Window, s_min: float) -> list[AtomFunctional]:
    """Three test functionals: Campbell (no ``eta`` dependence), zero, and one coupled to ``eta(window)``."""
    lo, hi = window.lo_arr, window.hi_arr
    inner = Window(tuple(lo + 0.1 * (hi - lo)), tuple(hi - 0.1 * (hi - lo)))
    s_lo, s_hi = max(2 * s_min, 0.05), 2.0
    f = bump_sx(s_lo, s_hi, inner)
    campbell = AtomFunctional(lambda s, x, eta: f(s, x), s_lo, s_hi, inner, "campbell", eta_free=True)
    campbell.integrand = f
    return [
        campbell,
        AtomFunctional(lambda s, x, eta: np.zeros(s.shape), s_lo, s_hi, inner, "zero", eta_free=True),
        AtomFunctional(lambda s, x, eta: s * eta.total_mass * f(s, x), s_lo, s_hi, inner, "mass_coupled"),
    ]


@dataclass
class MeckeReport:
    name: str
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    se: float
    n: int
    passed: bool = field(default=False)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def paired_report(name, lhs_i, rhs_i, k: float = 3.0, se_fn=mean_se) -> MeckeReport:
    """Report built from per-sample paired terms; the combined SE is that of the differences."""
    lhs_i, rhs_i = np.asarray(lhs_i, float), np.asarray(rhs_i, float)
    lhs, se_l = se_fn(lhs_i)
    rhs, se_r = se_fn(rhs_i)
    _, se = se_fn(lhs_i - rhs_i)
    passed = bool(abs(lhs - rhs) <= k * se) if se > 0 else bool(abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs)))
    return MeckeReport(name, lhs, rhs, se_l, se_r, se, lhs_i.size, passed)


def sigma_insertions(l: WeightDensity, F: AtomFunctional, n: int, draws: int, rng):
    """``(mass, s, x)`` importance draws from normalised ``sigma`` on the support of ``F``."""
    mass = l.sigma_mass(F.box, F.s_lo, F.s_hi)
    s, x = l.sample_sigma(F.box, F.s_lo, F.s_hi, n * draws, rng)
    return mass, s.reshape(n, draws), x.reshape(n, draws, -1)


def mecke_check(l: WeightDensity, F: AtomFunctional, p: CrmSampleParams, n: int,
                samples: list | None = None, draws: int = 1) -> MeckeReport:
    """Compare ``E sum_atoms F(s, x, eta)`` with ``E int F(s, x, eta + s delta_x) d sigma``."""
    if n < 2:
        raise ValueError("need at least two samples")
    if F.s_lo < p.s_min:
        raise ValueError("F must vanish below the truncation level")
    if samples is None:
        samples = sample_crm_batch(l, p, n)
    rng = make_rng(np.random.SeedSequence([p.seed, 0x4D45]))
    mass, s_ins, x_ins = sigma_insertions(l, F, len(samples), draws, rng)
    lhs_i = np.array([F.atom_sum(eta) for eta in samples])
    if F.eta_free:
        n = len(samples)
        vals = F(s_ins.reshape(-1), x_ins.reshape(n * draws, -1), None)
        rhs_i = mass * vals.reshape(n, draws).mean(axis=1)
    else:
        rhs_i = np.empty(len(samples))
        for i, eta in enumerate(samples):
            rhs_i[i] = mass * np.mean([F.inserted(s, x, eta) for s, x in zip(s_ins[i], x_ins[i])])
    return paired_report(F.name, lhs_i, rhs_i)

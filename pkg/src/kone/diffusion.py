"""Euler-Maruyama simulation of the cone diffusion on a periodic window.

Each atom ``(s, x)`` follows

    dx = [(1/s) nabla_x log l - nabla u] dt + sqrt(2 / s) dB
    ds = [s d_s log l - s u] dt + sqrt(2 s) dW

with ``u`` the field of the other atoms. Positions wrap around the torus and
weights are reflected into ``[s_min, s_max]``. Atoms are neither created nor
destroyed, so each atom count is preserved; the grand-canonical Gibbs law
is a mixture of invariant laws.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .calculus import AtomBatch, atom_terms, batch_pairings, fields, generator_apply
from .cylinder import CylinderFunction
from .density import QUAD_EPSREL, WeightDensity
from .measure import DiscreteMeasure, Window
from .potential import PairPotential
from .rng import make_rng, map_replicas
from .stats import mean_se


@dataclass
class DiffusionParams:
    dt: float = 1e-3
    s_min: float = 0.1
    s_max: float = 50.0

    def __post_init__(self):
        if not (self.dt > 0 and 0 < self.s_min < self.s_max):
            raise ValueError("need dt > 0 and 0 < s_min < s_max")


@dataclass
class SimulationState:
    pos: np.ndarray
    w: np.ndarray
    window: Window
    t: float = 0.0
    steps: int = 0
    reflections: int = 0

    @classmethod
    def from_measure(cls, eta: DiscreteMeasure) -> "SimulationState":
        if not eta.window.periodic:
            raise ValueError("the diffusion runs on a periodic window")
        if eta.dim == 1:
            warnings.warn("d = 1: the position noise is one-dimensional and mixing is slow", stacklevel=2)
        return cls(np.array(eta.positions, float), np.array(eta.weights, float), eta.window)

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure._trusted(self.pos.copy(), self.w.copy(), self.window)

    @property
    def reflection_fraction(self) -> float:
        events = self.steps * self.w.size
        return self.reflections / events if events else 0.0


def drift(eta: DiscreteMeasure, l: WeightDensity, phi: PairPotential | None) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom drift ``(b_x, b_s)``."""
    s, x = eta.weights, eta.positions
    u, gu = fields(eta, phi)
    bx = np.asarray(l.grad_x_log(s, x), float) / s[:, None] - gu
    bs = s * np.asarray(l.dlog_ds(s, x), float) - s * u
    return bx, bs


def reflect(s: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, int]:
    """Fold ``s`` back into ``[lo, hi]``; returns the folded array and the number of folds."""
    s = s.copy()
    count = 0
    while True:
        below, above = s < lo, s > hi
        k = int(below.sum() + above.sum())
        if k == 0:
            return s, count
        count += k
        s[below] = 2 * lo - s[below]
        s[above] = 2 * hi - s[above]


def _em_update(x, s, bx, bs, dt: float, zx, zs, p: DiffusionParams, window: Window):
    """Euler-Maruyama update from drifts; the noise may carry leading replica axes."""
    x_new = x + bx * dt + np.sqrt(2.0 * dt / s)[:, None] * zx
    s_new = s + bs * dt + np.sqrt(2.0 * s * dt) * zs
    s_new, k = reflect(s_new, p.s_min, p.s_max)
    lo, L = window.lo_arr, window.lengths
    return lo + np.mod(x_new - lo, L), s_new, k


def em_step(state: SimulationState, l: WeightDensity, phi: PairPotential | None, p: DiffusionParams,
            rng=None, noise: tuple | None = None, dt: float | None = None) -> None:
    """One Euler-Maruyama step in place.

    ``noise = (z_x, z_s)`` injects the standard normal increments (shapes
    ``(n, d)`` and ``(n,)``); otherwise they are drawn from ``rng``.
    """
    dt = p.dt if dt is None else dt
    n, d = state.pos.shape
    if n == 0:
        state.t += dt
        state.steps += 1
        return
    if noise is None:
        zx = rng.standard_normal((n, d))
        zs = rng.standard_normal(n)
    else:
        zx, zs = noise
    eta = DiscreteMeasure._trusted(state.pos, state.w, state.window)
    bx, bs = drift(eta, l, phi)
    state.pos, state.w, k = _em_update(state.pos, state.w, bx, bs, dt, zx, zs, p, state.window)
    state.reflections += k
    state.t += dt
    state.steps += 1


@dataclass
class Trajectory:
    t: np.ndarray
    values: dict
    final: DiscreteMeasure
    reflection_fraction: float


def run_trajectory(eta0: DiscreteMeasure, l: WeightDensity, phi: PairPotential | None, p: DiffusionParams,
                   T: float, seed=0, observables: dict | None = None, record_every: int = 1) -> Trajectory:
    """Simulate up to time ``T`` and record ``observables`` (name -> callable on measures)."""
    rng = make_rng(seed)
    state = SimulationState.from_measure(eta0)
    steps = int(round(T / p.dt))
    observables = observables or {}
    ts, vals = [0.0], {k: [f(eta0)] for k, f in observables.items()}
    for k in range(1, steps + 1):
        em_step(state, l, phi, p, rng)
        if k % record_every == 0 or k == steps:
            ts.append(state.t)
            eta = state.measure()
            for name, f in observables.items():
                vals[name].append(f(eta))
    return Trajectory(np.array(ts), {k: np.array(v) for k, v in vals.items()}, state.measure(),
                      state.reflection_fraction)


def coupled_endpoints(eta0: DiscreteMeasure, l, phi, p: DiffusionParams, T: float, rng):
    """Endpoints at ``T`` of the fine (``dt``) and coarse (``2 dt``) schemes driven by the same Brownian path."""
    fine = SimulationState.from_measure(eta0)
    coarse = SimulationState.from_measure(eta0)
    n, d = fine.pos.shape
    steps = int(round(T / (2 * p.dt)))
    for _ in range(steps):
        z1 = (rng.standard_normal((n, d)), rng.standard_normal(n))
        z2 = (rng.standard_normal((n, d)), rng.standard_normal(n))
        em_step(fine, l, phi, p, noise=z1)
        em_step(fine, l, phi, p, noise=z2)
        zc = ((z1[0] + z2[0]) / math.sqrt(2.0), (z1[1] + z2[1]) / math.sqrt(2.0))
        em_step(coarse, l, phi, p, noise=zc, dt=2 * p.dt)
    return fine.measure(), coarse.measure(), fine.reflection_fraction


@dataclass
class DriftReport:
    check: str
    name: str
    lhs: float
    rhs: float
    se: float
    budget: float
    ks_p: float
    passed: bool
    flags: list = field(default_factory=list)


def evolve_replicas(samples: list, l, phi, p: DiffusionParams, T: float, seed=0, n_workers=None):
    """Fine and coarse endpoints for every replica; replica ``i`` uses stream ``i`` of ``seed``."""
    out = map_replicas(lambda i, rng: coupled_endpoints(samples[i], l, phi, p, T, rng), seed,
                       len(samples), n_workers)
    fine = [o[0] for o in out]
    coarse = [o[1] for o in out]
    refl = float(np.mean([o[2] for o in out]))
    return fine, coarse, refl


def stationarity_check(samples: list, l, phi, p: DiffusionParams, T: float, observables: dict, seed=0,
                       k: float = 3.0, ks_alpha: float = 0.01, evolved=None) -> list[DriftReport]:
    """Start from stationary samples, run to ``T`` and compare observable laws at 0 and ``T``.

    Passes when the KS p-value exceeds ``ks_alpha`` and the mean drift is
    within ``k`` SE plus the discretisation budget ``|drift(dt) - drift(2 dt)|``
    from the coupled coarse run.
    """
    fine, coarse, refl = evolved if evolved is not None else evolve_replicas(samples, l, phi, p, T, seed)
    flags = ["reflections"] if refl > 0.01 else []
    reports = []
    for name, f in observables.items():
        v0 = np.array([f(e) for e in samples])
        v1 = np.array([f(e) for e in fine])
        v2 = np.array([f(e) for e in coarse])
        drift_, se = mean_se(v1 - v0)
        budget = abs(drift_ - float(np.mean(v2 - v0)))
        ks = stats.ks_2samp(v0, v1).pvalue if np.ptp(np.concatenate([v0, v1])) > 0 else 1.0
        ok = ks > ks_alpha and abs(drift_) <= k * se + budget
        reports.append(DriftReport("stationarity", name, float(np.mean(v1)), float(np.mean(v0)), se, budget,
                                   float(ks), bool(ok), list(flags)))
    return reports


def reversibility_check(samples: list, l, phi, p: DiffusionParams, T: float, pairs: list, seed=0,
                        k: float = 3.0, evolved=None) -> list[DriftReport]:
    """``E F(eta_0) G(eta_T) = E G(eta_0) F(eta_T)`` from stationary starts, paired per replica."""
    fine, coarse, refl = evolved if evolved is not None else evolve_replicas(samples, l, phi, p, T, seed)
    flags = ["reflections"] if refl > 0.01 else []
    reports = []
    for F, G in pairs:
        F0 = np.array([F(e) for e in samples])
        G0 = np.array([G(e) for e in samples])
        F1, G1 = np.array([F(e) for e in fine]), np.array([G(e) for e in fine])
        F2, G2 = np.array([F(e) for e in coarse]), np.array([G(e) for e in coarse])
        a, b = F0 * G1, G0 * F1
        diff, se = mean_se(a - b)
        budget = abs(diff - float(np.mean(F0 * G2 - G0 * F2)))
        ok = abs(diff) <= k * se + budget
        reports.append(DriftReport("reversibility", f"{F.name}|{G.name}", float(np.mean(a)), float(np.mean(b)),
                                   se, budget, float("nan"), bool(ok), list(flags)))
    return reports


# -- generator consistency --------------------------------------------------------------

def _taylor(F: CylinderFunction, eta: DiscreteMeasure):
    """Gradient and Hessian of ``F`` in the coordinates ``(x_i, s_i)`` of the atoms it sees."""
    t = atom_terms(F, eta, second=False)
    s, x = eta.weights, eta.positions
    n, d = x.shape
    der = F.inner_derivs(s, x)
    m = d + 1
    D = np.zeros((F.N, n, m))
    blocks = np.zeros((n, m, m))
    for j, Dj in enumerate(der):
        D[j, :, :d] = Dj.grad_x
        D[j, :, d] = Dj.ds
        blocks[:, :d, :d] += t.g1[j] * Dj.hess_x
        blocks[:, :d, d] += t.g1[j] * Dj.dsx
        blocks[:, d, :d] += t.g1[j] * Dj.dsx
        blocks[:, d, d] += t.g1[j] * Dj.dss
    active = np.flatnonzero(np.any(D != 0, axis=(0, 2)) | np.any(blocks != 0, axis=(1, 2)))
    Da = D[:, active, :].reshape(F.N, -1)
    g = Da.T @ t.g1
    H = Da.T @ t.g2 @ Da
    for a, i in enumerate(active):
        H[a * m:(a + 1) * m, a * m:(a + 1) * m] += blocks[i]
    return active, g, H


@dataclass
class GeneratorReport:
    dts: list
    estimates: list      # per start, per dt
    ses: list            # per start, per dt
    errors: list         # mean over starts of |estimate - LF|, per dt
    LF: list             # per start
    start_slopes: list
    slope: float
    passed: bool


def _one_step_values(F: CylinderFunction, eta0: DiscreteMeasure, bx, bs, dt, zx, zs, p) -> np.ndarray:
    """``F`` after one Euler step from ``eta0`` for each noise replica (leading axis of ``zx``, ``zs``)."""
    P, n, d = zx.shape
    x, s, _ = _em_update(eta0.positions, eta0.weights, bx, bs, dt, zx, zs, p, eta0.window)
    B = AtomBatch(s.reshape(-1), x.reshape(-1, d), np.repeat(np.arange(P), n), P, None, None)
    return F.g.value_rows(batch_pairings(F, B))


def generator_consistency(F: CylinderFunction, starts, l, phi, dts=(4e-3, 2e-3, 1e-3),
                          n_pairs: int = 20_000, seed=0, s_min: float = 1e-3, s_max: float = 1e6,
                          slope_range=(0.7, 1.3)) -> GeneratorReport:
    """One-step weak error ``|(E F(eta_dt) - F(eta_0)) / dt - L F(eta_0)|`` against ``dt``.

    The increment is split as the quadratic Taylor polynomial ``C`` of ``F``
    in the moved coordinates, whose mean is known in closed form, plus the
    remainder ``F(eta_dt) - F(eta_0) - C``, averaged over antithetic noise
    pairs. The error is averaged over the start configurations ``starts``
    (one measure or a list): a single start can have a near-vanishing
    first-order coefficient, which hides the order behind the next term.
    """
    starts = [starts] if isinstance(starts, DiscreteMeasure) else list(starts)
    rng = make_rng(np.random.SeedSequence([int(seed), 0x4745]))
    p0 = DiffusionParams(min(dts), s_min, s_max)
    LFs, est, ses = [], [], []
    for eta0 in starts:
        s = eta0.weights
        n, d = eta0.positions.shape
        LF = generator_apply(F, eta0, l, phi)
        bx, bs = drift(eta0, l, phi)
        active, g, H = _taylor(F, eta0)
        b = np.concatenate([bx[active], bs[active, None]], axis=1).reshape(-1)
        var = np.concatenate([np.repeat((2.0 / s[active])[:, None], d, axis=1), (2.0 * s[active])[:, None]],
                             axis=1).reshape(-1)
        F0 = F(eta0)
        e_k, se_k = [], []
        for dt in dts:
            EC = dt * g @ b + 0.5 * (dt**2 * b @ H @ b + dt * float(np.sum(var * np.diag(H))))
            zx, zs = rng.standard_normal((n_pairs, n, d)), rng.standard_normal((n_pairs, n))
            z = np.concatenate([zx[:, active], zs[:, active, None]], axis=2).reshape(n_pairs, -1)
            rem = np.zeros(n_pairs)
            for sign in (1.0, -1.0):
                A = _one_step_values(F, eta0, bx, bs, dt, sign * zx, sign * zs, p0) - F0
                D = dt * b + sign * np.sqrt(dt * var) * z
                rem += 0.5 * (A - (D @ g + 0.5 * np.einsum("ri,ij,rj->r", D, H, D)))
            mu, se = mean_se(rem)
            e_k.append(float((EC + mu) / dt))
            se_k.append(float(se / dt))
        LFs.append(float(LF))
        est.append(e_k)
        ses.append(se_k)
    abs_err = np.abs(np.array(est) - np.array(LFs)[:, None])
    logdt = np.log(dts)
    start_slopes = [float(np.polyfit(logdt, np.log(np.maximum(e, 1e-300)), 1)[0]) for e in abs_err]
    errs = abs_err.mean(axis=0)
    slope = float(np.polyfit(logdt, np.log(errs), 1)[0])
    ok = slope_range[0] <= slope <= slope_range[1]
    return GeneratorReport(list(dts), est, ses, [float(e) for e in errs], LFs, start_slopes, slope, bool(ok))


def generator_start(window: Window, seed=0, gap: float = 0.8) -> DiscreteMeasure:
    """A start configuration for the generator test.

    Two interacting heavy atoms ``gap`` apart near the centre, plus light
    atoms scattered over the window.
    """
    rng = make_rng(np.random.SeedSequence([int(seed), 0x4753]))
    lo, L = window.lo_arr, window.lengths
    c = lo + L * rng.uniform(0.4, 0.6, window.dim)
    u = rng.standard_normal(window.dim)
    off = 0.5 * gap * u / np.linalg.norm(u)
    heavy_x = np.array([c - off, c + off])
    heavy_s = rng.uniform(0.8, 1.2, 2)
    light_x = lo + L * rng.uniform(0.0, 1.0, (6, window.dim))
    light_s = rng.uniform(0.002, 0.005, 6)
    return DiscreteMeasure(np.vstack([heavy_x, light_x]), np.concatenate([heavy_s, light_s]), window)


# -- single-atom stationary law ----------------------------------------------------------

def stationary_weight_cdf(l: WeightDensity, s_min: float, s_max: float, x=None):
    """CDF of the invariant weight law ``l(s, x) / s`` on ``[s_min, s_max]`` for one free atom."""
    x0 = np.zeros((1, 1)) if x is None else np.atleast_2d(x)

    def dens(s):
        return float(l.l(np.array([s]), x0)[0]) / s

    def q(a, b):
        return integrate.quad(dens, a, b, epsrel=QUAD_EPSREL, limit=200)[0]

    # lower integrals below the pivot, upper tails above it
    pivot = min(max(1.0, s_min), s_max)
    lower, upper = q(s_min, pivot), q(pivot, s_max)
    Z = lower + upper

    def one(t):
        t = min(max(t, s_min), s_max)
        return q(s_min, t) / Z if t <= pivot else 1.0 - q(t, s_max) / Z

    def cdf(v):
        return np.array([one(t) for t in np.atleast_1d(np.asarray(v, float))])
    return cdf

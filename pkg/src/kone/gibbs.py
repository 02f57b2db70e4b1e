"""Metropolis-Hastings sampling of finite-volume Gibbs measures.

The target on configurations in a window ``Lambda`` with boundary atoms
``xi`` has density ``exp(-H(eta | xi))`` with respect to the Poisson process
with intensity ``sigma`` restricted to ``[s_min, inf) x Lambda``. Moves:
birth from normalised ``sigma``, death of a uniform atom, independent
redraw of one weight from ``sigma(ds | x)``, and a Gaussian position jump.

Homogeneous exponential densities run in the compiled block kernel; the
generic path (any samplable density) runs ``gibbs_step`` in Python. Both
consume the same pre-drawn random streams, so for homogeneous densities
they produce identical chains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .crm import AtomFunctional, MeckeReport, paired_report
from .density import ExponentialFamily, WeightDensity
from .measure import DiscreteMeasure, Window
from .potential import PairPotential, check_boundary, hamiltonian_local, zero_potential
from .rng import make_rng
from .stats import batch_means_se, ess, gelman_rubin

MOVES = ("birth", "death", "resample", "move")


class GibbsError(RuntimeError):
    pass


@dataclass
class McmcParams:
    s_min: float = 1e-3
    move_probs: tuple = (0.25, 0.25, 0.25, 0.25)
    jump_scale: float = 0.2
    burnin: int = 10_000
    thin: int = 200
    block: int = 1000
    check_every: int = 1000
    backend: str | None = None

    def __post_init__(self):
        pr = np.asarray(self.move_probs, float)
        if pr.shape != (4,) or np.any(pr < 0) or not math.isclose(pr.sum(), 1.0):
            raise ValueError("move_probs must be four nonnegative numbers summing to 1")
        if pr[0] == 0 or pr[1] == 0:
            raise ValueError("birth and death must both have positive probability")
        if not self.s_min > 0:
            raise ValueError("s_min must be positive")

    @property
    def cum_probs(self) -> np.ndarray:
        c = np.cumsum(self.move_probs)
        c[-1] = 1.0
        return c


class GibbsChainState:
    """Mutable chain state: atom buffers, boundary atoms, cached energy, move counters."""

    def __init__(self, eta: DiscreteMeasure, phi: PairPotential | None = None,
                 xi: DiscreteMeasure | None = None, capacity: int | None = None):
        check_boundary(xi, eta.window)
        if eta.window.periodic and xi is not None and len(xi):
            raise ValueError("periodic windows take no boundary atoms")
        self.window = eta.window
        self.phi = phi
        self.kphi = phi if phi is not None else zero_potential()
        self.xi = xi
        d = eta.dim
        cap = max(capacity or 0, 64, 2 * len(eta))
        self.pos = np.zeros((cap, d))
        self.w = np.zeros(cap)
        self.nbox = np.array([len(eta)], dtype=np.intp)
        self.pos[: len(eta)] = eta.positions
        self.w[: len(eta)] = eta.weights
        if xi is not None and len(xi):
            self.bpos = np.ascontiguousarray(xi.positions, dtype=float)
            self.bw = np.ascontiguousarray(xi.weights, dtype=float)
        else:
            self.bpos, self.bw = np.zeros((0, d)), np.zeros(0)
        self.energy = np.array([0.0])
        self.counts = np.zeros((4, 2), dtype=np.int64)
        self.steps = 0
        self.recompute_energy()

    @property
    def n(self) -> int:
        return int(self.nbox[0])

    @property
    def interacting(self) -> bool:
        return self.phi is not None

    def measure(self) -> DiscreteMeasure:
        n = self.n
        return DiscreteMeasure(self.pos[:n].copy(), self.w[:n].copy(), self.window)

    def full_energy(self) -> float:
        if not self.interacting or self.n == 0:
            return 0.0
        return hamiltonian_local(self.measure(), self.phi, self.xi)

    def recompute_energy(self) -> float:
        self.energy[0] = self.full_energy()
        return float(self.energy[0])

    def check_energy(self, rtol: float = 1e-8) -> None:
        fresh = self.full_energy()
        if not np.isfinite(fresh):
            raise GibbsError("non-finite energy")
        if abs(fresh - self.energy[0]) > rtol * max(1.0, abs(fresh)):
            raise GibbsError(f"energy cache drifted: cached {self.energy[0]!r}, recomputed {fresh!r}")
        self.energy[0] = fresh

    def grow(self) -> None:
        cap = 2 * self.w.shape[0]
        pos = np.zeros((cap, self.pos.shape[1]))
        w = np.zeros(cap)
        pos[: self.n] = self.pos[: self.n]
        w[: self.n] = self.w[: self.n]
        self.pos, self.w = pos, w

    def field(self, x, skip: int) -> float:
        if not self.interacting:
            return 0.0
        u, _ = _backend.kernels.local_field(
            self.pos, self.w, self.n, np.ascontiguousarray(x, dtype=float), skip, self.bpos, self.bw,
            self.window.lo_arr, self.window.hi_arr, self.window.periodic, *self.kphi.kernel_args())
        return float(u)

    def acceptance_rates(self) -> dict:
        return {m: (float(c[1] / c[0]) if c[0] else float("nan")) for m, c in zip(MOVES, self.counts)}


# -- acceptance ratios ---------------------------------------------------------------------

def birth_mass(l: WeightDensity, window: Window, p: McmcParams) -> float:
    """``m p_death / p_birth`` with ``m`` the truncated ``sigma`` mass of the window."""
    return l.sigma_mass(window, p.s_min) * p.move_probs[1] / p.move_probs[0]


def log_accept_birth(log_m: float, n: int, dH: float) -> float:
    return log_m - math.log(float(n + 1)) - dH


def log_accept_death(log_m: float, n: int, dH: float) -> float:
    return math.log(float(n)) - log_m - dH


def log_accept_resample(dH: float) -> float:
    return -dH


def log_accept_move(dH: float, log_l_ratio: float = 0.0) -> float:
    return -dH + log_l_ratio


def log_target(eta: DiscreteMeasure, l: WeightDensity, phi: PairPotential | None,
               xi: DiscreteMeasure | None = None) -> float:
    """Log density of the Gibbs law w.r.t. ``sum_n Leb^n / n!`` on the truncated domain, up to a constant."""
    if len(eta) == 0:
        return 0.0
    H = hamiltonian_local(eta, phi, xi) if phi is not None else 0.0
    return float(np.sum(np.log(l.intensity(eta.weights, eta.positions)))) - H


# -- single step, generic path -----------------------------------------------------------------

@dataclass
class Draw:
    """Random inputs consumed by one step."""

    u_move: float
    u_index: float
    u_accept: float
    birth_s: float
    birth_x: np.ndarray
    resample_s: float | None
    jump: np.ndarray


def gibbs_step(state: GibbsChainState, l: WeightDensity, p: McmcParams, draw: Draw, mass: float,
               rng=None) -> int:
    """One MH move in place; returns the move index. ``rng`` redraws weights for inhomogeneous ``l``."""
    log_m = math.log(mass)
    mv = 0
    cum = p.cum_probs
    while mv < 3 and draw.u_move >= cum[mv]:
        mv += 1
    state.counts[mv, 0] += 1
    state.steps += 1
    la = math.log(draw.u_accept) if draw.u_accept > 0.0 else -math.inf
    n = state.n
    if mv == 0:
        if n >= state.w.shape[0]:
            state.grow()
        dH = draw.birth_s * state.field(draw.birth_x, -1)
        if la < log_accept_birth(log_m, n, dH):
            state.pos[n] = draw.birth_x
            state.w[n] = draw.birth_s
            state.nbox[0] = n + 1
            state.energy[0] = state.energy[0] + dH
            state.counts[mv, 1] += 1
        return mv
    if n == 0:
        return mv
    i = min(int(draw.u_index * n), n - 1)
    u0 = state.field(state.pos[i], i)
    if mv == 1:
        dH = -state.w[i] * u0
        if la < log_accept_death(log_m, n, dH):
            state.pos[i] = state.pos[n - 1]
            state.w[i] = state.w[n - 1]
            state.nbox[0] = n - 1
            state.energy[0] = state.energy[0] + dH
            state.counts[mv, 1] += 1
    elif mv == 2:
        s_new = draw.resample_s
        if s_new is None:
            s_new = float(l.sample_s(state.pos[i:i + 1], p.s_min, np.inf, rng)[0])
        dH = (s_new - state.w[i]) * u0
        if la < log_accept_resample(dH):
            state.w[i] = s_new
            state.energy[0] = state.energy[0] + dH
            state.counts[mv, 1] += 1
    else:
        win = state.window
        lo, hi = win.lo_arr, win.hi_arr
        xn = state.pos[i] + draw.jump
        if win.periodic:
            L = hi - lo
            xn = xn - L * np.floor((xn - lo) / L)
        elif np.any(xn < lo) or np.any(xn > hi):
            return mv
        dH = state.w[i] * (state.field(xn, i) - u0)
        lr = 0.0
        if not getattr(l, "homogeneous", False):
            s = state.w[i:i + 1]
            lr = float(np.log(l.l(s, xn[None, :])[0]) - np.log(l.l(s, state.pos[i:i + 1])[0]))
        if la < log_accept_move(dH, lr):
            state.pos[i] = xn
            state.energy[0] = state.energy[0] + dH
            state.counts[mv, 1] += 1
    return mv


# -- blocks --------------------------------------------------------------------------------------------

def _streams(l: WeightDensity, window: Window, p: McmcParams, K: int, rng) -> dict:
    d = window.dim
    u_move = rng.random(K)
    u_index = rng.random(K)
    u_accept = rng.random(K)
    birth_s, birth_x = l.sample_sigma(window, p.s_min, np.inf, K, rng)
    if getattr(l, "homogeneous", False):
        resample_s = l.sample_s(np.zeros((K, d)), p.s_min, np.inf, rng)
    else:
        resample_s = None
    jump = rng.normal(0.0, p.jump_scale, (K, d))
    return dict(u_move=u_move, u_index=u_index, u_accept=u_accept, birth_s=birth_s,
                birth_x=np.ascontiguousarray(birth_x), resample_s=resample_s, jump=jump)


def _use_kernel(l: WeightDensity, p: McmcParams) -> bool:
    return p.backend != "python" and isinstance(l, ExponentialFamily) and l.homogeneous


def run_block(state: GibbsChainState, l: WeightDensity, p: McmcParams, K: int, rng, mass: float) -> None:
    """Advance the chain by ``K`` steps."""
    st = _streams(l, state.window, p, K, rng)
    if _use_kernel(l, p):
        k = _backend.get(p.backend if p.backend in ("compiled", "fallback") else None)
        win = state.window
        done = 0
        while done < K:
            sl = slice(done, K)
            step = k.mh_block(state.pos, state.w, state.nbox, state.bpos, state.bw,
                              win.lo_arr, win.hi_arr, win.periodic, *state.kphi.kernel_args(),
                              state.energy, p.cum_probs, mass,
                              st["u_move"][sl], st["u_index"][sl], st["u_accept"][sl],
                              st["birth_s"][sl], st["birth_x"][sl], st["resample_s"][sl],
                              np.ascontiguousarray(st["jump"][sl]), state.counts, state.interacting)
            done += step
            state.steps += step
            if done < K:
                state.grow()
        return
    for t in range(K):
        rs = None if st["resample_s"] is None else float(st["resample_s"][t])
        draw = Draw(float(st["u_move"][t]), float(st["u_index"][t]), float(st["u_accept"][t]),
                    float(st["birth_s"][t]), st["birth_x"][t], rs, st["jump"][t])
        gibbs_step(state, l, p, draw, mass, rng)


def run_chain(state: GibbsChainState, l: WeightDensity, p: McmcParams, steps: int, rng, mass=None) -> None:
    """Advance ``steps`` steps in blocks, checking the energy cache every ``p.check_every`` steps."""
    mass = birth_mass(l, state.window, p) if mass is None else mass
    left = steps
    since = state.steps % p.check_every
    while left > 0:
        K = min(p.block, left, p.check_every - since)
        run_block(state, l, p, K, rng, mass)
        left -= K
        since += K
        if since >= p.check_every:
            state.check_energy()
            since = 0


@dataclass
class GibbsRun:
    samples: list
    energy: np.ndarray
    counts: np.ndarray
    acceptance: dict
    ess_energy: float
    final_state: GibbsChainState = field(repr=False)

    @property
    def diagnostics(self) -> dict:
        return {"acceptance": self.acceptance, "ess_energy": self.ess_energy,
                "mean_atoms": float(np.mean([len(s) for s in self.samples])) if self.samples else 0.0}


def sample_gibbs(window: Window, xi: DiscreteMeasure | None, phi: PairPotential | None, l: WeightDensity,
                 p: McmcParams, n: int, seed=0, init: DiscreteMeasure | None = None) -> GibbsRun:
    """``n`` thinned samples after ``p.burnin`` steps; ``phi=None`` runs the non-interacting chain."""
    rng = make_rng(seed)
    eta0 = init if init is not None else DiscreteMeasure.empty(window)
    state = GibbsChainState(eta0, phi, xi)
    mass = birth_mass(l, window, p)
    run_chain(state, l, p, p.burnin, rng, mass)
    samples, energy = [], np.empty(n)
    for k in range(n):
        run_chain(state, l, p, p.thin, rng, mass)
        samples.append(state.measure())
        energy[k] = state.energy[0]
    return GibbsRun(samples, energy, state.counts.copy(), state.acceptance_rates(), ess(energy), state)


def gelman_rubin_energy(window, xi, phi, l, p, n, seeds, inits) -> float:
    """Potential scale reduction of the energy trace over chains started from ``inits``."""
    runs = [sample_gibbs(window, xi, phi, l, p, n, seed=s, init=i) for s, i in zip(seeds, inits)]
    return gelman_rubin([r.energy for r in runs])


# -- oracles and identities ------------------------------------------------------------------------

def rejection_sample(l: WeightDensity, phi: PairPotential, window: Window, s_min: float, n: int, seed=0,
                     xi: DiscreteMeasure | None = None, max_tries: int = 10_000_000) -> list:
    """Exact draws from the Gibbs law by thinning the truncated Poisson process with ``e^-H``.

    Needs ``H >= 0``, i.e. a nonnegative potential.
    """
    from .crm import CrmSampleParams, sample_crm

    if phi.neg_sup_norm > 0:
        raise ValueError("rejection oracle needs a nonnegative potential")
    rng = make_rng(seed)
    p = CrmSampleParams(s_min, window)
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > max_tries:
            raise GibbsError("rejection oracle exceeded its try budget")
        eta = sample_crm(l, p, rng)
        H = hamiltonian_local(eta, phi, xi) if len(eta) > 1 or xi is not None else 0.0
        if rng.random() < math.exp(-H):
            out.append(eta)
    return out


def check_nz_support(F: AtomFunctional, window: Window, phi: PairPotential | None, s_min: float,
                     require_interior: bool = True) -> None:
    lo, hi = window.lo_arr, window.hi_arr
    blo, bhi = F.box.lo_arr, F.box.hi_arr
    if np.any(blo < lo) or np.any(bhi > hi):
        raise ValueError(f"support of {F.name} leaves the window")
    if F.s_lo < s_min:
        raise ValueError(f"support of {F.name} reaches below s_min")
    if require_interior and not window.periodic and phi is not None:
        gap = min(np.min(blo - lo), np.min(hi - bhi))
        if gap <= phi.R:
            raise ValueError(f"support of {F.name} is within range R of the window boundary")


def nz_check(samples: list, l: WeightDensity, phi: PairPotential | None, F: AtomFunctional, s_min: float,
             seed=0, draws: int = 4, xi: DiscreteMeasure | None = None, require_interior: bool = True,
             n_batches: int = 20) -> MeckeReport:
    """Compare ``E sum_atoms F`` with ``E int exp(-s u_eta(x)) F(s, x, eta + s delta_x) d sigma``.

    ``u_eta(x)`` is the field of ``eta`` (and ``xi``) at ``x``. Errors use
    batch means of the paired per-sample differences.
    """
    if not samples:
        raise ValueError("empty sample set")
    window = samples[0].window
    check_nz_support(F, window, phi, s_min, require_interior)
    rng = make_rng(np.random.SeedSequence([int(seed), 0x4E5A]))
    mass = l.sigma_mass(F.box, F.s_lo, F.s_hi)
    n = len(samples)
    s_ins, x_ins = l.sample_sigma(F.box, F.s_lo, F.s_hi, n * draws, rng)
    s_ins, x_ins = s_ins.reshape(n, draws), x_ins.reshape(n, draws, -1)
    kphi = phi if phi is not None else zero_potential()
    lhs_i = np.empty(n)
    rhs_i = np.empty(n)
    for i, eta in enumerate(samples):
        lhs_i[i] = F.atom_sum(eta)
        if phi is not None:
            pos = np.ascontiguousarray(eta.positions)
            w = np.ascontiguousarray(eta.weights)
            bpos = np.zeros((0, eta.dim)) if xi is None else np.ascontiguousarray(xi.positions)
            bw = np.zeros(0) if xi is None else np.ascontiguousarray(xi.weights)
        acc = 0.0
        for s, x in zip(s_ins[i], x_ins[i]):
            v = F.inserted(s, x, eta)
            if v != 0.0 and phi is not None:
                u, _ = _backend.kernels.local_field(pos, w, len(eta), x, -1, bpos, bw, window.lo_arr,
                                                    window.hi_arr, window.periodic, *kphi.kernel_args())
                v *= math.exp(-s * u)
            acc += v
        rhs_i[i] = mass * acc / draws
    return paired_report(F.name, lhs_i, rhs_i, se_fn=lambda v: batch_means_se(v, n_batches))


def nz_battery(window: Window, R: float, s_min: float) -> list[AtomFunctional]:
    """Five functionals supported at distance > ``R`` from the boundary of ``window``."""
    from .crm import bump_sx

    lo, hi = window.lo_arr, window.hi_arr
    m = 1.05 * R
    box = Window(tuple(lo + m), tuple(hi - m))
    s_lo = max(2 * s_min, 0.05)
    f = bump_sx(s_lo, 2.0, box)
    g = bump_sx(0.5, 3.0, box)
    centre = 0.5 * (lo + hi)
    near = Window(tuple(centre - 0.5), tuple(centre + 0.5))

    def local_mass(eta, x, r=0.5):
        if len(eta) == 0:
            return np.zeros(len(x))
        d = np.linalg.norm(x[:, None, :] - eta.positions[None, :, :], axis=2)
        return (eta.weights[None, :] * (d <= r)).sum(axis=1)

    def mass_in(eta, box_):
        return float(eta.weights[box_.contains(eta.positions)].sum()) if len(eta) else 0.0

    return [
        AtomFunctional(lambda s, x, eta: f(s, x), s_lo, 2.0, box, "bump"),
        AtomFunctional(lambda s, x, eta: s * f(s, x), s_lo, 2.0, box, "weighted_bump"),
        AtomFunctional(lambda s, x, eta: f(s, x) * math.exp(-mass_in(eta, near)), s_lo, 2.0, box, "mass_damped"),
        AtomFunctional(lambda s, x, eta: f(s, x) * local_mass(eta, x), s_lo, 2.0, box, "neighbour_mass"),
        AtomFunctional(lambda s, x, eta: s**2 * g(s, x), 0.5, 3.0, box, "heavy_band"),
    ]

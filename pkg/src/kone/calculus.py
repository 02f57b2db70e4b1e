"""Gradient, square field, generator and Dirichlet-form estimators on discrete measures.

For an atom ``(s, x)`` of ``eta`` the cone gradient of ``F`` is
``((1/s) nabla_x F, nabla_s F)`` and the tangent inner product is
``sum_x s (<v, v'> + h h')``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _backend
from .cylinder import CylinderFunction
from .density import ExponentialFamily, WeightDensity
from .measure import DiscreteMeasure, Window
from .potential import PairPotential, interaction_fields, zero_potential
from .rng import make_rng
from .stats import batch_means_se, mean_se


@dataclass
class AtomTerms:
    """Per-atom chain-rule pieces of ``F`` at ``eta``.

    From ``batch_terms`` the outer pieces gain a leading measure axis.
    """

    y: np.ndarray        # (N,) pairings
    g1: np.ndarray       # (N,) outer gradient
    g2: np.ndarray       # (N, N) outer Hessian
    grad_x: np.ndarray   # (n, d) nabla_x F
    grad_s: np.ndarray   # (n,)   nabla_s F
    lap_x: np.ndarray    # (n,)   Delta_x F
    lap_s: np.ndarray    # (n,)   second s-derivative of F


def atom_terms(F: CylinderFunction, eta: DiscreteMeasure, second: bool = True) -> AtomTerms:
    s, x = eta.weights, eta.positions
    n, d = x.shape
    if n == 0:
        y = np.zeros(F.N)
        z = np.zeros(0)
        return AtomTerms(y, F.g.grad(y), F.g.hess(y), np.zeros((0, d)), z, z, z)
    der = F.inner_derivs(s, x)
    y = np.array([float(np.sum(D.value)) for D in der])
    g1 = np.asarray(F.g.grad(y), float)
    g2 = np.asarray(F.g.hess(y), float)
    GX = np.stack([D.grad_x for D in der])      # (N, n, d)
    GS = np.stack([D.ds for D in der])          # (N, n)
    grad_x = np.einsum("j,jnd->nd", g1, GX)
    grad_s = g1 @ GS
    if not second:
        return AtomTerms(y, g1, g2, grad_x, grad_s, np.zeros(n), np.zeros(n))
    lap_x = np.einsum("jk,jnd,knd->n", g2, GX, GX) + g1 @ np.stack([D.lap_x for D in der])
    lap_s = np.einsum("jk,jn,kn->n", g2, GS, GS) + g1 @ np.stack([D.dss for D in der])
    return AtomTerms(y, g1, g2, grad_x, grad_s, lap_x, lap_s)


def grad_atoms(F: CylinderFunction, eta: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom ``(nabla_x F, nabla_s F)`` by the chain rule."""
    t = atom_terms(F, eta, second=False)
    return t.grad_x, t.grad_s


@dataclass
class TangentVector:
    """Per-atom pairs ``(v_x, h_x)`` attached to the atoms of a reference measure."""

    v: np.ndarray
    h: np.ndarray
    weights: np.ndarray

    def inner(self, other: "TangentVector") -> float:
        if self.weights.shape != other.weights.shape or not np.array_equal(self.weights, other.weights):
            raise ValueError("tangent vectors live over different measures")
        return float(np.sum(self.weights * (np.sum(self.v * other.v, axis=1) + self.h * other.h)))

    def norm2(self) -> float:
        return self.inner(self)


def gradK(F: CylinderFunction, eta: DiscreteMeasure) -> TangentVector:
    gx, gs = grad_atoms(F, eta)
    s = eta.weights
    return TangentVector(gx / s[:, None], gs, s)


def square_field(F: CylinderFunction, eta: DiscreteMeasure) -> float:
    """``sum (1/s) |nabla_x F|^2 + s |nabla_s F|^2``."""
    gx, gs = grad_atoms(F, eta)
    s = eta.weights
    return float(np.sum(np.sum(gx * gx, axis=1) / s + s * gs * gs))


def tangent_product(F: CylinderFunction, G: CylinderFunction, eta: DiscreteMeasure) -> float:
    """``<grad F, grad G>`` in the tangent space at ``eta``."""
    fx, fs = grad_atoms(F, eta)
    gx, gs = grad_atoms(G, eta)
    s = eta.weights
    return float(np.sum(np.sum(fx * gx, axis=1) / s + s * fs * gs))


def _is_gamma(l) -> bool:
    return isinstance(l, ExponentialFamily) and l.family == "gamma"


def fields(eta: DiscreteMeasure, phi: PairPotential | None, xi: DiscreteMeasure | None = None):
    """``u_i`` and ``nabla u_i``; zero without a potential."""
    if phi is None or len(eta) == 0:
        return np.zeros(len(eta)), np.zeros((len(eta), eta.dim))
    u, g, _ = interaction_fields(eta, phi, xi)
    return np.asarray(u), np.asarray(g)


def generator_terms(F: CylinderFunction, eta: DiscreteMeasure, l: WeightDensity,
                    phi: PairPotential | None = None, xi: DiscreteMeasure | None = None,
                    fast: bool = True, terms: AtomTerms | None = None) -> np.ndarray:
    """Per-atom contributions to ``L F(eta)``.

    Six terms per atom: ``(1/s) Delta_x F``, ``(1/s) <nabla_x log l, nabla_x F>``,
    ``-<nabla u, nabla_x F>``, ``s Delta_s F``, ``s (d_s log l) nabla_s F`` and
    ``-u s nabla_s F``, with ``u`` the field of the other atoms. ``fast`` uses
    the closed form ``s (Delta_s F - nabla_s F)`` for the gamma density.
    """
    if len(eta) == 0:
        return np.zeros(0)
    t = atom_terms(F, eta) if terms is None else terms
    u, gu = fields(eta, phi, xi)
    return _generator_atoms(t, eta.weights, eta.positions, u, gu, l, fast)


def _generator_atoms(t, s, x, u, gu, l, fast: bool) -> np.ndarray:
    inter = -np.sum(gu * t.grad_x, axis=1) - u * s * t.grad_s
    if fast and _is_gamma(l):
        return t.lap_x / s + inter + s * (t.lap_s - t.grad_s)
    dls = np.asarray(l.dlog_ds(s, x), float)
    glx = np.asarray(l.grad_x_log(s, x), float)
    if not (np.all(np.isfinite(dls)) and np.all(np.isfinite(glx))):
        raise ValueError("weight density is not differentiable at an atom")
    # grouped so that l = e^-s reproduces the fast path bit for bit
    return (t.lap_x / s + np.sum(glx * t.grad_x, axis=1) / s + inter
            + s * (t.lap_s + dls * t.grad_s))


def generator_apply(F: CylinderFunction, eta: DiscreteMeasure, l: WeightDensity,
                    phi: PairPotential | None = None, xi: DiscreteMeasure | None = None,
                    fast: bool = True) -> float:
    return float(np.sum(generator_terms(F, eta, l, phi, xi, fast)))


# -- batched evaluation over many measures -----------------------------------------------

CHUNK = 256


@dataclass
class AtomBatch:
    """Atoms of several measures stacked; ``idx`` maps each atom to its measure."""

    s: np.ndarray
    x: np.ndarray
    idx: np.ndarray
    n: int
    u: np.ndarray
    gu: np.ndarray

    def sums(self, v) -> np.ndarray:
        """Per-measure sums of a per-atom array."""
        return np.bincount(self.idx, weights=v, minlength=self.n)


def stack_atoms(samples: list, phi: PairPotential | None = None, xi: DiscreteMeasure | None = None) -> AtomBatch:
    d = samples[0].dim
    counts = [len(e) for e in samples]
    s = np.concatenate([e.weights for e in samples])
    x = np.concatenate([e.positions for e in samples]).reshape(-1, d)
    idx = np.repeat(np.arange(len(samples)), counts)
    if phi is None:
        u, gu = np.zeros(s.size), np.zeros((s.size, d))
    else:
        fs = [fields(e, phi, xi) for e in samples]
        u = np.concatenate([f[0] for f in fs])
        gu = np.concatenate([f[1] for f in fs]).reshape(-1, d)
    return AtomBatch(s, x, idx, len(samples), u, gu)


def _chunks(n: int, size: int = CHUNK):
    return [slice(a, min(a + size, n)) for a in range(0, n, size)]


def batch_pairings(F: CylinderFunction, B: AtomBatch) -> np.ndarray:
    """``(n, N)`` pairings of every measure in the batch."""
    if B.s.size == 0:
        return np.zeros((B.n, F.N))
    return np.stack([B.sums(p(B.s, B.x)) for p in F.phis], axis=1)


def batch_terms(F: CylinderFunction, B: AtomBatch, second: bool = True) -> AtomTerms:
    """``atom_terms`` for every atom of the batch; ``y``, ``g1``, ``g2`` are per measure."""
    M, d = B.x.shape
    if M == 0:
        Y = np.zeros((B.n, F.N))
        z = np.zeros(0)
        return AtomTerms(Y, F.g.grad_rows(Y), F.g.hess_rows(Y), np.zeros((0, d)), z, z, z)
    der = F.inner_derivs(B.s, B.x)
    Y = np.stack([B.sums(D.value) for D in der], axis=1)
    g1 = F.g.grad_rows(Y)
    G1 = g1[B.idx]
    GX = np.stack([D.grad_x for D in der], axis=1)   # (M, N, d)
    GS = np.stack([D.ds for D in der], axis=1)       # (M, N)
    grad_x = np.einsum("mj,mjd->md", G1, GX)
    grad_s = np.sum(G1 * GS, axis=1)
    if not second:
        return AtomTerms(Y, g1, None, grad_x, grad_s, np.zeros(M), np.zeros(M))
    g2 = F.g.hess_rows(Y)
    G2 = g2[B.idx]
    LX = np.stack([D.lap_x for D in der], axis=1)
    SS = np.stack([D.dss for D in der], axis=1)
    lap_x = np.einsum("mjk,mjd,mkd->m", G2, GX, GX) + np.sum(G1 * LX, axis=1)
    lap_s = np.einsum("mjk,mj,mk->m", G2, GS, GS) + np.sum(G1 * SS, axis=1)
    return AtomTerms(Y, g1, g2, grad_x, grad_s, lap_x, lap_s)


def _tangent_atoms(tf: AtomTerms, tg: AtomTerms, s: np.ndarray) -> np.ndarray:
    return np.sum(tf.grad_x * tg.grad_x, axis=1) / s + s * tf.grad_s * tg.grad_s


# -- Dirichlet form estimators ---------------------------------------------------------

@dataclass
class Estimate:
    estimate: float
    se: float
    n: int


def _se_fn(chain: bool, n_batches: int):
    return (lambda v: batch_means_se(v, n_batches)) if chain else mean_se


def energy_form_terms(F, G, samples) -> np.ndarray:
    """Per-sample ``<grad F, grad G>``."""
    if not samples:
        raise ValueError("empty sample set")
    out = np.empty(len(samples))
    for sl in _chunks(len(samples)):
        B = stack_atoms(samples[sl])
        out[sl] = B.sums(_tangent_atoms(batch_terms(F, B, False), batch_terms(G, B, False), B.s))
    return out


def energy_form_mc(F: CylinderFunction, G: CylinderFunction, samples: list, chain: bool = False,
                   n_batches: int = 20) -> Estimate:
    """Sample mean of ``<grad F, grad G>`` over ``samples``."""
    a = energy_form_terms(F, G, samples)
    est, se = _se_fn(chain, n_batches)(a)
    return Estimate(est, se, a.size)


def _union_support(F: CylinderFunction, G: CylinderFunction):
    fs, fh, fb = F.support
    gs, gh, gb = G.support
    lo = np.minimum(fb.lo_arr, gb.lo_arr)
    hi = np.maximum(fb.hi_arr, gb.hi_arr)
    return min(fs, gs), max(fh, gh), Window(tuple(lo), tuple(hi))


def _inserted_grads(F: CylinderFunction, Y: np.ndarray, s: np.ndarray, x: np.ndarray):
    """``(nabla_x F, nabla_s F)`` at inserted atoms ``(s_k, x_k)`` of ``eta_k + s_k delta_{x_k}``.

    ``Y`` holds the pairings of each ``eta_k``, one row per inserted atom.
    """
    der = F.inner_derivs(s, x)
    g1 = F.g.grad_rows(Y + np.stack([D.value for D in der], axis=1))
    gx = np.einsum("kj,kjd->kd", g1, np.stack([D.grad_x for D in der], axis=1))
    gs = np.sum(g1 * np.stack([D.ds for D in der], axis=1), axis=1)
    return gx, gs


def energy_form_nz_terms(F, G, samples, l: WeightDensity, phi: PairPotential | None = None,
                         xi: DiscreteMeasure | None = None, draws: int = 4, seed=0) -> np.ndarray:
    """Per-sample estimates of ``int e^{-s u_eta(x)} s [ (1/s^2) <nabla_x F, nabla_x G> + F_s G_s ] d sigma``."""
    if not samples:
        raise ValueError("empty sample set")
    s_lo, s_hi, box = _union_support(F, G)
    rng = make_rng(np.random.SeedSequence([int(seed), 0x4546]))
    mass = l.sigma_mass(box, s_lo, s_hi)
    n = len(samples)
    S, X = l.sample_sigma(box, s_lo, s_hi, n * draws, rng)
    S, X = S.reshape(n, draws), X.reshape(n, draws, -1)
    out = np.empty(n)
    d = X.shape[2]
    for sl in _chunks(n):
        B = stack_atoms(samples[sl])
        m = sl.stop - sl.start
        rep = np.repeat(np.arange(m), draws)
        s, x = S[sl].reshape(-1), X[sl].reshape(-1, d)
        fx, fs = _inserted_grads(F, batch_pairings(F, B)[rep], s, x)
        gx, gs = _inserted_grads(G, batch_pairings(G, B)[rep], s, x)
        v = s * (np.sum(fx * gx, axis=1) / s**2 + fs * gs)
        if phi is not None:
            v *= _insertion_weights(samples[sl], rep, s, x, v != 0.0, phi, xi)
        out[sl] = mass * v.reshape(m, draws).sum(axis=1) / draws
    return out


def _insertion_weights(samples, rep, s, x, need, phi: PairPotential, xi) -> np.ndarray:
    """``exp(-s_k u_{eta}(x_k))`` for the inserted atoms flagged in ``need``."""
    out = np.ones(s.size)
    bpos = np.zeros((0, x.shape[1])) if xi is None else np.ascontiguousarray(xi.positions)
    bw = np.zeros(0) if xi is None else np.ascontiguousarray(xi.weights)
    for k in np.flatnonzero(need):
        eta = samples[rep[k]]
        win = eta.window
        u, _ = _backend.kernels.local_field(np.ascontiguousarray(eta.positions), np.ascontiguousarray(eta.weights),
                                            len(eta), np.ascontiguousarray(x[k]), -1, bpos, bw, win.lo_arr,
                                            win.hi_arr, win.periodic, *phi.kernel_args())
        out[k] = math.exp(-s[k] * u)
    return out


def energy_form_nz(F, G, samples, l, phi=None, xi=None, draws: int = 4, seed=0, chain: bool = False,
                   n_batches: int = 20) -> Estimate:
    """The same form written as a ``sigma x mu`` double integral, by importance sampling."""
    b = energy_form_nz_terms(F, G, samples, l, phi, xi, draws, seed)
    est, se = _se_fn(chain, n_batches)(b)
    return Estimate(est, se, b.size)


@dataclass
class IbpReport:
    F: str
    G: str
    E_form: float
    pairing: float
    residual: float
    se: float
    n: int
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def ibp_check(F: CylinderFunction, G: CylinderFunction, samples: list, l: WeightDensity,
              phi: PairPotential | None = None, xi: DiscreteMeasure | None = None, chain: bool = False,
              n_batches: int = 20, k: float = 3.0) -> IbpReport:
    """``E <grad F, grad G> + E[(L F) G]``, which vanishes by integration by parts."""
    if not samples:
        raise ValueError("empty sample set")
    a = np.empty(len(samples))
    c = np.empty(len(samples))
    for sl in _chunks(len(samples)):
        B = stack_atoms(samples[sl], phi, xi)
        tf = batch_terms(F, B)
        tg = batch_terms(G, B, second=False)
        a[sl] = B.sums(_tangent_atoms(tf, tg, B.s))
        c[sl] = B.sums(_generator_atoms(tf, B.s, B.x, B.u, B.gu, l, True)) * G.g.value_rows(tg.y)
    se_fn = _se_fn(chain, n_batches)
    E, _ = se_fn(a)
    C, _ = se_fn(c)
    res, se = se_fn(a + c)
    ok = abs(res) <= k * se if se > 0 else abs(res) <= 1e-12
    return IbpReport(F.name, G.name, E, -C, res, se, len(samples), bool(ok))


@dataclass
class DualReport:
    F: str
    G: str
    direct: float
    nz: float
    se: float
    n: int
    passed: bool


def dual_energy_check(F, G, samples, l, phi=None, xi=None, draws: int = 4, seed=0, chain: bool = False,
                      n_batches: int = 20, k: float = 3.0) -> DualReport:
    """Direct tangent-form estimate against the inserted-atom form, paired per sample."""
    a = energy_form_terms(F, G, samples)
    b = energy_form_nz_terms(F, G, samples, l, phi, xi, draws, seed)
    se_fn = _se_fn(chain, n_batches)
    A, _ = se_fn(a)
    B, _ = se_fn(b)
    diff, se = se_fn(a - b)
    ok = abs(diff) <= k * se if se > 0 else abs(diff) <= 1e-12
    return DualReport(F.name, G.name, A, B, se, len(samples), bool(ok))

"""Cutoff families and the metric ``d = d_V + d_f`` on finite marked configurations.

``phi_k`` cuts space off between the sup-norm balls ``B(k)`` and ``B(k+1)``;
``psi_n`` cuts weights off to the dyadic-like band ``[q^n, q^(n-1)]``.
``kappa_kn(s, x) = phi_k(x) psi_n(s) s``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .measure import DiscreteMeasure, MarkedConfiguration
from .smooth import max_slope, smoothstep

DV_TERMS = 64


def _as_config(g) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(g, DiscreteMeasure):
        return g.weights, g.positions
    if isinstance(g, MarkedConfiguration):
        return g.s, g.x
    s, x = g
    return np.asarray(s, float).reshape(-1), np.atleast_2d(np.asarray(x, float))


@dataclass
class CutoffFamily:
    """Parameters of the cutoffs ``phi_k``, ``psi_n`` and the weights ``c_k``.

    ``c[k - 1]`` is the weight of ``d_k`` for ``k = 1..k_max``.
    """

    q: float = 0.5
    order: int = 1
    k_max: int = 64
    c: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if max_slope(self.order) > 2.0:
            raise ValueError(f"smoothstep order {self.order} has slope > 2")
        if self.c is None:
            self.c = 2.0 ** -np.arange(1, self.k_max + 1, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.k_max,) or np.any(self.c <= 0) or not np.isfinite(self.c.sum()):
            raise ValueError("c must hold k_max positive weights with a finite sum")

    @classmethod
    def from_moments(cls, moments, q: float = 0.5, order: int = 1) -> "CutoffFamily":
        """``c_k = 2^-k / (1 + m_k)`` with ``m_k`` an estimate of ``E eta(B(k+1))``."""
        m = np.asarray(moments, dtype=float)
        k = np.arange(1, m.size + 1)
        return cls(q=q, order=order, k_max=m.size, c=2.0 ** -k / (1.0 + m))

    # -- cutoffs -------------------------------------------------------------

    def phi(self, k: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        ramp = 1.0 - smoothstep(np.abs(x) - k, self.order)
        return np.prod(ramp, axis=1)

    def grad_phi(self, k: int, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        ramp = 1.0 - smoothstep(np.abs(x) - k, self.order)
        dramp = -smoothstep(np.abs(x) - k, self.order, 1) * np.sign(x)
        out = np.empty_like(x)
        for i in range(x.shape[1]):
            others = np.prod(np.delete(ramp, i, axis=1), axis=1)
            out[:, i] = dramp[:, i] * others
        return out

    def psi(self, n: int, s) -> np.ndarray:
        s = np.asarray(s, float)
        q = self.q
        up = (s - q ** (n + 1)) / (q**n - q ** (n + 1))
        down = (s - q ** (n - 1)) / (q ** (n - 2) - q ** (n - 1))
        return smoothstep(up, self.order) * (1.0 - smoothstep(down, self.order))

    def dpsi(self, n: int, s) -> np.ndarray:
        s = np.asarray(s, float)
        q = self.q
        a = q**n - q ** (n + 1)
        b = q ** (n - 2) - q ** (n - 1)
        up = (s - q ** (n + 1)) / a
        down = (s - q ** (n - 1)) / b
        return (smoothstep(up, self.order, 1) / a * (1.0 - smoothstep(down, self.order))
                - smoothstep(up, self.order) * smoothstep(down, self.order, 1) / b)

    def n_candidates(self, s: float) -> range:
        """Integers ``n`` with ``psi_n(s)`` possibly nonzero."""
        ls = math.log(s) / math.log(self.q)
        return range(math.floor(ls - 1.0), math.ceil(ls + 2.0) + 1)

    def kappa(self, k: int, n: int, s, x) -> np.ndarray:
        return self.phi(k, x) * self.psi(n, s) * np.asarray(s, float)

    @property
    def c_sum(self) -> float:
        return float(self.c.sum())


def cutoff_constraints(cut: CutoffFamily, ks=range(1, 6), ns=range(-8, 9), n_grid: int = 1000,
                       tol: float = 1e-12) -> dict[str, bool]:
    """Grid checks of the sandwich and slope bounds on ``phi_k`` and ``psi_n``.

    ``psi_sum`` checks ``1 <= sum_n psi_n(s) <= 4`` on ``n_grid`` log-spaced
    weights spanning the bands ``ns``.
    """
    q = cut.q
    out = {}
    ok_phi = ok_dphi = True
    for k in ks:
        t = np.linspace(-(k + 1.5), k + 1.5, 301)
        X = np.stack(np.meshgrid(t, t), axis=-1).reshape(-1, 2)
        r = np.max(np.abs(X), axis=1)
        ph = cut.phi(k, X)
        lower = (r <= k).astype(float)
        upper = (r <= k + 1).astype(float)
        ok_phi &= bool(np.all(ph >= lower - tol) and np.all(ph <= upper + tol))
        g = np.abs(cut.grad_phi(k, X))
        ok_dphi &= bool(np.all(g <= 2.0 * upper[:, None] + tol))
    out["phi_sandwich"], out["phi_slope"] = ok_phi, ok_dphi
    ok_psi = ok_dpsi = True
    for n in ns:
        s = np.geomspace(q ** (n + 2), q ** (n - 3), 2001)
        ps = cut.psi(n, s)
        inner = ((s >= q**n) & (s <= q ** (n - 1))).astype(float)
        outer = ((s >= q ** (n + 1)) & (s <= q ** (n - 2))).astype(float)
        ok_psi &= bool(np.all(ps >= inner - tol) and np.all(ps <= outer + tol))
        ok_dpsi &= bool(np.all(np.abs(cut.dpsi(n, s)) <= 2.0 / (q**n - q ** (n + 1)) + tol))
    out["psi_sandwich"], out["psi_slope"] = ok_psi, ok_dpsi
    s = np.geomspace(q ** (max(ns) - 1), q ** (min(ns) + 2), n_grid)
    tot = np.array([sum(float(cut.psi(n, v)) for n in cut.n_candidates(v)) for v in s])
    out["psi_sum"] = bool(np.all(tot >= 1.0 - tol) and np.all(tot <= 4.0 + tol))
    out["c_summable"] = bool(np.isfinite(cut.c_sum) and np.all(cut.c > 0))
    return out


def _band_sums(cut: CutoffFamily, k: int, s: np.ndarray, x: np.ndarray) -> dict[int, float]:
    acc: dict[int, float] = {}
    if s.size == 0:
        return acc
    ph = cut.phi(k, x)
    for si, pi in zip(s, ph):
        if pi == 0.0:
            continue
        for n in cut.n_candidates(si):
            v = float(cut.psi(n, si))
            if v != 0.0:
                acc[n] = acc.get(n, 0.0) + pi * v * si
    return acc


def metric_dk(g1, g2, k: int, cut: CutoffFamily | None = None) -> float:
    """``sum_n |<kappa_kn, g1 - g2>|``, the sum running over bands that carry mass."""
    cut = cut or CutoffFamily()
    s1, x1 = _as_config(g1)
    s2, x2 = _as_config(g2)
    a1 = _band_sums(cut, k, s1, x1)
    a2 = _band_sums(cut, k, s2, x2)
    return float(sum(abs(a1.get(n, 0.0) - a2.get(n, 0.0)) for n in sorted(a1.keys() | a2.keys())))


def metric_df(g1, g2, cut: CutoffFamily | None = None) -> float:
    """``sum_k c_k d_k / (1 + d_k)`` over ``k = 1..k_max``.

    Once both configurations lie inside ``B(K)`` every ``phi_k`` with ``k >= K``
    equals one on them, so ``d_k`` is constant from there on and is computed once.
    """
    cut = cut or CutoffFamily()
    s1, x1 = _as_config(g1)
    s2, x2 = _as_config(g2)
    pts = [x for x in (x1, x2) if x.size]
    reach = max((float(np.max(np.abs(x))) for x in pts), default=0.0)
    k_const = max(1, math.ceil(reach))
    total = 0.0
    dk = 0.0
    for k in range(1, cut.k_max + 1):
        if k <= k_const:
            dk = metric_dk((s1, x1), (s2, x2), k, cut)
        total += cut.c[k - 1] * dk / (1.0 + dk)
    return total


@lru_cache(maxsize=None)
def _hat_family(dim: int, J: int = DV_TERMS) -> tuple[np.ndarray, np.ndarray]:
    """Centres and half-widths of the hat functions used by ``metric_dv``.

    Hat ``j`` lives on ``(log2 s, x)``; level ``L = floor(log2 j)`` sets the
    half-width ``2^(-L/2)`` and confines centres to ``[-2(L+1), 2(L+1)]``.
    """
    u = qmc.Halton(d=dim + 1, scramble=False).random(J + 1)[1:]
    j = np.arange(1, J + 1)
    level = np.floor(np.log2(j))
    span = 2.0 * (level + 1.0)
    centres = (2.0 * u - 1.0) * span[:, None]
    width = 2.0 ** (-level / 2.0)
    return centres, width


def _hat_pairings(s: np.ndarray, x: np.ndarray, dim: int) -> np.ndarray:
    centres, width = _hat_family(dim)
    if s.size == 0:
        return np.zeros(centres.shape[0])
    z = np.column_stack([np.log2(s), x])
    t = 1.0 - np.abs(z[None, :, :] - centres[:, None, :]) / width[:, None, None]
    return np.prod(np.clip(t, 0.0, None), axis=2).sum(axis=1)


def metric_dv(g1, g2) -> float:
    """Vague-type part: ``sum_j 2^-j min(1, |<g_j, g1 - g2>|)`` over a fixed hat family."""
    s1, x1 = _as_config(g1)
    s2, x2 = _as_config(g2)
    dim = (x1 if x1.size else x2).shape[1]
    diff = _hat_pairings(s1, x1, dim) - _hat_pairings(s2, x2, dim)
    j = np.arange(1, diff.size + 1)
    return float(np.sum(2.0 ** -j * np.minimum(1.0, np.abs(diff))))


def metric_d(g1, g2, cut: CutoffFamily | None = None) -> float:
    return metric_dv(g1, g2) + metric_df(g1, g2, cut)


def metric_bound(cut: CutoffFamily | None = None) -> float:
    cut = cut or CutoffFamily()
    return cut.c_sum + (1.0 - 2.0**-DV_TERMS)


# -- moment sidecar ------------------------------------------------------------

def estimate_moments(samples, k_max: int) -> np.ndarray:
    """Empirical ``E eta(B(k+1))`` for ``k = 1..k_max`` from a list of measures."""
    out = np.zeros(k_max)
    for eta in samples:
        if len(eta) == 0:
            continue
        r = np.max(np.abs(eta.positions), axis=1)
        for k in range(1, k_max + 1):
            out[k - 1] += eta.weights[r <= k + 1].sum()
    return out / max(len(samples), 1)


def save_moments(path, moments, **info) -> None:
    Path(path).write_text(json.dumps({"moments": [float(m) for m in moments], **info}, indent=1))


def load_moments(path) -> np.ndarray:
    return np.asarray(json.loads(Path(path).read_text())["moments"], dtype=float)


def cutoffs_with_sidecar(path, sampler=None, k_max: int = 64, **kw) -> CutoffFamily:
    """Load cached moments from ``path``; estimate and cache them with ``sampler()`` if missing."""
    p = Path(path)
    if not p.exists():
        if sampler is None:
            return CutoffFamily(k_max=k_max, **kw)
        save_moments(p, estimate_moments(sampler(), k_max))
    return CutoffFamily.from_moments(load_moments(p), **kw)

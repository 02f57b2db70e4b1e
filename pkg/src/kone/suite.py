"""Configured verifier suite.

Each check maps a ``RunConfig`` and a per-check seed to a list of
``Report`` objects. Per-check seeds are derived from the master seed and the
check name, so a check gives the same numbers whatever else runs with it.
Samples shared by several checks (``ibp`` and ``dual``; ``stationarity``
and ``reversibility``) are cached per run.
"""
from __future__ import annotations

import math
import zlib

import numpy as np

from . import calculus, crm, diffusion, gibbs, metric, potential
from .config import RunConfig, parse_window
from .cylinder import battery
from .density import ExponentialFamily
from .measure import DiscreteMeasure, Window
from .reports import Report, within
from .stats import mean_se, tv_distance

STOCHASTIC = {"laplace", "mecke", "nz", "ibp", "dual", "generator", "stationarity", "reversibility", "metric",
              "micro_tv"}


def derive_seed(seed: int, name: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


class Context:
    """Cache of samples shared between checks of one run."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg, self.seed = cfg, seed
        self._cache: dict = {}

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def mcmc(self, s_min: float) -> gibbs.McmcParams:
        m = self.cfg["mcmc"]
        return gibbs.McmcParams(s_min=s_min, burnin=m["burnin"], thin=m["thin"], jump_scale=m["jump_scale"])

    def gibbs_samples(self, window: Window, s_min: float, tag: str):
        cfg = self.cfg
        n = cfg["sampling"]["n"]
        return self.cached(("gibbs", window, s_min), lambda: gibbs.sample_gibbs(
            window, None, cfg.potential(), cfg.density(), self.mcmc(s_min), n,
            seed=derive_seed(self.seed, tag)).samples)

    def crm_samples(self, window: Window, s_min: float, tag: str):
        n = self.cfg["sampling"]["n"]
        return self.cached(("crm", window, s_min), lambda: crm.sample_crm_batch(
            self.cfg.density(), crm.CrmSampleParams(s_min, window, derive_seed(self.seed, tag)), n))


def _require_potential(cfg):
    phi = cfg.potential()
    if phi is None:
        raise ValueError("this check needs a pair potential; set [potential] kind")
    return phi


# -- checks ----------------------------------------------------------------------------------

def check_laplace(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    l = cfg.density()
    W = parse_window(cfg["sampling"]["laplace_window"])
    lam = cfg["sampling"]["lam"]
    s_min = cfg["measure"]["s_min"]
    samples = crm.sample_crm_batch(l, crm.CrmSampleParams(s_min, W, derive_seed(ctx.seed, "laplace")),
                                   cfg["sampling"]["n"])
    vals = np.exp(-lam * np.array([e.total_mass for e in samples]))
    m, se = mean_se(vals)
    f = crm.StepFunction.constant(W, lam)
    exact = crm.laplace_functional(l, f, W)
    tol = max(3.0 * se, 0.01 * abs(exact))
    return [Report("laplace", "constant", m, exact, se, tol, abs(m - exact) <= tol,
                   {"truncated": crm.laplace_functional(l, f, W, s_min)})]


CAMPBELL_DRAWS = 2_000_000


def check_mecke(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    l = cfg.density()
    W = cfg.window(periodic=False)
    s_min = cfg["measure"]["s_min"]
    seed = derive_seed(ctx.seed, "mecke")
    p = crm.CrmSampleParams(s_min, W, seed)
    samples = ctx.crm_samples(W, s_min, "mecke")
    out = []
    for F in crm.mecke_battery(W, s_min):
        draws = cfg["sampling"]["draws"]
        if F.eta_free:
            draws = max(draws, -(-CAMPBELL_DRAWS // len(samples)))
        r = crm.mecke_check(l, F, p, len(samples), samples=samples, draws=draws)
        tol, ok = within(r.lhs, r.rhs, r.se)
        out.append(Report("mecke", F.name, r.lhs, r.rhs, r.se, tol, ok, {"se_lhs": r.se_lhs, "se_rhs": r.se_rhs}))
        if F.name == "campbell":
            quad = crm.sigma_integral(l, F.integrand, F.s_lo, F.s_hi, F.box)
            tol = 0.01 * abs(quad)
            out.append(Report("mecke_quadrature", F.name, r.rhs, quad, r.se_rhs, tol, abs(r.rhs - quad) <= tol,
                              {"lhs": r.lhs}))
    return out


def check_nz(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    phi = _require_potential(cfg)
    W = cfg.window()
    d = W.dim
    c2 = potential.check_c2(phi, d)
    out = [Report("c2", phi.name, c2.inf_phi, c2.epsilon * c2.neg_sup, 0.0, 0.0, c2.passed,
                  {"epsilon": c2.epsilon, "margin": c2.margin})]
    if not c2.passed:
        return out
    s_min = cfg["measure"]["s_min"]
    samples = ctx.gibbs_samples(W, s_min, "gibbs")
    l = cfg.density()
    for i, F in enumerate(gibbs.nz_battery(W, phi.R, s_min)):
        r = gibbs.nz_check(samples, l, phi, F, s_min, seed=derive_seed(ctx.seed, f"nz{i}"),
                           draws=cfg["sampling"]["draws"], require_interior=not W.periodic,
                           n_batches=cfg["sampling"]["batches"])
        tol, ok = within(r.lhs, r.rhs, r.se)
        out.append(Report("nz", F.name, r.lhs, r.rhs, r.se, tol, ok, {"se_lhs": r.se_lhs, "se_rhs": r.se_rhs}))
    return out


def _calculus_inputs(ctx: Context):
    cfg = ctx.cfg
    W = cfg.window()
    s_min = cfg["measure"]["s_min"]
    if cfg["measure"]["kind"] == "gibbs":
        phi = _require_potential(cfg)
        return W, s_min, phi, ctx.gibbs_samples(W, s_min, "gibbs"), True
    return W, s_min, None, ctx.crm_samples(W, s_min, "crm"), False


def _pairs(cfg):
    out = []
    for item in cfg["battery"]["pairs"]:
        f, sep, g = item.partition(":")
        if not sep:
            raise ValueError(f"battery pair {item!r} must read F:G")
        out.append((f, g))
    return out


def check_ibp(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    W, s_min, phi, samples, chain = _calculus_inputs(ctx)
    B = battery(W, s_min)
    out = []
    for f, g in _pairs(cfg):
        r = calculus.ibp_check(B[f], B[g], samples, cfg.density(), phi, chain=chain,
                               n_batches=cfg["sampling"]["batches"])
        tol, ok = within(r.residual, 0.0, r.se)
        out.append(Report("ibp", f"{f}|{g}", r.E_form, r.pairing, r.se, tol, ok,
                          {"residual": r.residual, "source": cfg["measure"]["kind"]}))
    return out


def check_dual(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    W, s_min, phi, samples, chain = _calculus_inputs(ctx)
    B = battery(W, s_min)
    out = []
    for i, (f, g) in enumerate(_pairs(cfg)):
        r = calculus.dual_energy_check(B[f], B[g], samples, cfg.density(), phi, draws=cfg["sampling"]["draws"],
                                       seed=derive_seed(ctx.seed, f"dual{i}"), chain=chain,
                                       n_batches=cfg["sampling"]["batches"])
        tol, ok = within(r.direct, r.nz, r.se)
        out.append(Report("dual", f"{f}|{g}", r.direct, r.nz, r.se, tol, ok, {"source": cfg["measure"]["kind"]}))
    return out


GENERATOR_FUNCTIONS = ("sin", "gaussian", "product")
GENERATOR_STARTS = 4
# one Euler step moves a unit weight by about sqrt(2 dt); stretched weight ramps keep F smooth on that scale
GENERATOR_S_SCALE = 2.0


def check_generator(ctx: Context) -> list[Report]:
    cfg = ctx.cfg
    W = cfg.window(periodic=True)
    B = battery(W, 1e-3, s_scale=GENERATOR_S_SCALE)
    starts = [diffusion.generator_start(W, derive_seed(ctx.seed, f"generator_start_{k}"))
              for k in range(GENERATOR_STARTS)]
    out = []
    for name in GENERATOR_FUNCTIONS:
        r = diffusion.generator_consistency(B[name], starts, cfg.density(), cfg.potential(),
                                            n_pairs=cfg["diffusion"]["pairs"],
                                            seed=derive_seed(ctx.seed, f"generator_{name}"))
        out.append(Report("generator", name, r.slope, 1.0, 0.0, 0.3, r.passed,
                          {"dts": r.dts, "estimates": r.estimates, "ses": r.ses, "errors": r.errors, "LF": r.LF,
                           "start_slopes": r.start_slopes}))
    return out


def _diffusion_inputs(ctx: Context):
    cfg = ctx.cfg
    dcfg = cfg["diffusion"]
    W = cfg.window(periodic=True)
    phi = cfg.potential()
    p = diffusion.DiffusionParams(dcfg["dt"], dcfg["s_min"], dcfg["s_max"])

    def make():
        samples = gibbs.sample_gibbs(W, None, phi, cfg.density(), ctx.mcmc(p.s_min), cfg["sampling"]["n"],
                                     seed=derive_seed(ctx.seed, "diffusion_gibbs")).samples
        ev = diffusion.evolve_replicas(samples, cfg.density(), phi, p, dcfg["T"],
                                       seed=derive_seed(ctx.seed, "diffusion_noise"))
        return samples, ev
    samples, ev = ctx.cached(("diffusion", W, p.s_min), make)
    return W, phi, p, samples, ev


def observables(W: Window) -> dict:
    """Mass and heavy-atom count in the lower-left quarter, and the summed log-weight."""
    sub = Window(W.lo, tuple(0.5 * (W.lo_arr + W.hi_arr)))
    return {
        "mass_quarter": lambda e: float(e.weights[sub.contains(e.positions)].sum()),
        "heavy_count": lambda e: float(np.sum((e.weights > 0.5) & sub.contains(e.positions))),
        "log_weight_sum": lambda e: float(np.sum(np.log(e.weights))),
    }


REVERSIBILITY_PAIRS = (("sin", "tanh"), ("linear", "gaussian"), ("product", "linear2"))


def check_stationarity(ctx: Context) -> list[Report]:
    W, phi, p, samples, ev = _diffusion_inputs(ctx)
    reps = diffusion.stationarity_check(samples, ctx.cfg.density(), phi, p, ctx.cfg["diffusion"]["T"],
                                        observables(W), evolved=ev)
    return [Report("stationarity", r.name, r.lhs, r.rhs, r.se, 3.0 * r.se + r.budget, r.passed,
                   {"ks_p": r.ks_p, "budget": r.budget, "flags": r.flags}) for r in reps]


def check_reversibility(ctx: Context) -> list[Report]:
    W, phi, p, samples, ev = _diffusion_inputs(ctx)
    B = battery(W, p.s_min)
    pairs = [(B[f], B[g]) for f, g in REVERSIBILITY_PAIRS]
    reps = diffusion.reversibility_check(samples, ctx.cfg.density(), phi, p, ctx.cfg["diffusion"]["T"], pairs,
                                         evolved=ev)
    return [Report("reversibility", r.name, r.lhs, r.rhs, r.se, 3.0 * r.se + r.budget, r.passed,
                   {"budget": r.budget, "flags": r.flags}) for r in reps]


def random_configuration(rng, d: int = 2, n_max: int = 8, reach: float = 3.0):
    k = int(rng.integers(0, n_max + 1))
    return rng.exponential(1.0, k) + 1e-3, rng.uniform(-reach, reach, (k, d))


def check_metric(ctx: Context, n_triples: int = 1000) -> list[Report]:
    cut = metric.CutoffFamily()
    out = [Report("metric", name, float(ok), 1.0, 0.0, 0.0, ok, {}) for name, ok in
           metric.cutoff_constraints(cut).items()]
    rng = np.random.default_rng(derive_seed(ctx.seed, "metric"))
    worst = -np.inf
    for _ in range(n_triples):
        a, b, c = (random_configuration(rng) for _ in range(3))
        k = int(rng.integers(1, 4))
        gap = metric.metric_dk(a, c, k, cut) - metric.metric_dk(a, b, k, cut) - metric.metric_dk(b, c, k, cut)
        worst = max(worst, gap)
    out.append(Report("metric", "triangle_dk", worst, 0.0, 0.0, 1e-12, worst <= 1e-12, {"triples": n_triples}))
    origin = (np.array([1.0]), np.zeros((1, 2)))
    empty = (np.zeros(0), np.zeros((0, 2)))
    d1 = metric.metric_dk(origin, empty, 1, cut)
    out.append(Report("metric", "d1_unit_atom", d1, 2.0, 0.0, 1e-12, abs(d1 - 2.0) <= 1e-12, {}))
    return out


def check_c2(ctx: Context) -> list[Report]:
    eps = potential.c2_epsilon(2, 1.0, 0.5)
    out = [Report("c2", "epsilon_d2_R1_delta05", eps, 12 * math.pi, 0.0, 1e-12,
                  abs(eps - 12 * math.pi) <= 1e-12 * 12 * math.pi, {})]
    phi = ctx.cfg.potential()
    if phi is not None:
        r = potential.check_c2(phi, ctx.cfg.window().dim)
        out.append(Report("c2", phi.name, r.inf_phi, r.epsilon * r.neg_sup, 0.0, 0.0, r.passed,
                          {"epsilon": r.epsilon, "margin": r.margin}))
    return out


MICRO = {"window": Window.cube(0.0, 0.5, 2), "alpha": 1.0, "beta": 2.0, "R": 1.0, "height": 4.0, "s_min": 0.3}


def check_micro_tv(ctx: Context) -> list[Report]:
    """Atom-count law of the chain against exact rejection samples on a window holding a few atoms."""
    m = MICRO
    l = ExponentialFamily(m["alpha"], m["beta"])
    phi = potential.bump(m["R"], m["height"])
    n = ctx.cfg["sampling"]["n"]
    ref = gibbs.rejection_sample(l, phi, m["window"], m["s_min"], n, seed=derive_seed(ctx.seed, "micro_ref"))
    run = gibbs.sample_gibbs(m["window"], None, phi, l, gibbs.McmcParams(s_min=m["s_min"], burnin=2000, thin=20),
                             n, seed=derive_seed(ctx.seed, "micro_mh"))
    a = np.bincount([len(e) for e in ref])
    b = np.bincount([len(e) for e in run.samples])
    tv = tv_distance(a, b)
    return [Report("micro_tv", "count_histogram", tv, 0.0, 0.0, 0.05, tv < 0.05,
                   {"rejection_counts": a.tolist(), "chain_counts": b.tolist()})]


CHECKS = {
    "laplace": check_laplace, "mecke": check_mecke, "nz": check_nz, "ibp": check_ibp, "dual": check_dual,
    "generator": check_generator, "stationarity": check_stationarity, "reversibility": check_reversibility,
    "metric": check_metric, "c2": check_c2, "micro_tv": check_micro_tv,
}


def fast_config(seed: int = 0) -> RunConfig:
    """Mecke and integration by parts on gamma samples, ``n = 1000``."""
    return RunConfig.from_dict({"run": {"seed": seed, "checks": "mecke,ibp"},
                                "measure": {"family": "gamma", "kind": "crm"},
                                "sampling": {"n": 1000}})


def run_suite(cfg: RunConfig, seed: int | None = None) -> tuple[int, list[dict]]:
    """Run the configured checks; exit status 0 iff every report passes."""
    checks = cfg["run"]["checks"]
    seed = cfg.seed if seed is None else seed
    if seed is None and any(c in STOCHASTIC for c in checks):
        raise ValueError("a seed is required for stochastic checks ([run] seed or --seed)")
    if seed is not None and cfg.seed != seed:
        cfg = cfg.replace("run", seed=seed)
    ctx = Context(cfg, seed if seed is not None else 0)
    records = []
    for name in checks:
        for r in CHECKS[name](ctx):
            records.append(r.record(seed, cfg))
    status = 0 if all(r["pass"] for r in records) else 1
    return status, records


def measure_from_file(path, periodic: bool = False) -> DiscreteMeasure:
    from .measure import load
    ms = load(path, periodic)
    if len(ms) != 1:
        raise ValueError(f"{path}: expected exactly one measure, found {len(ms)}")
    return ms[0]

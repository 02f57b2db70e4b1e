"""``kone`` command line.

Stochastic subcommands require ``--seed``. ``KONE_THREADS`` sets the replica
worker count and ``KONE_PURE_PYTHON=1`` disables the compiled kernels.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

from . import measure as mc
from .config import ConfigError, RunConfig, parse_potential_spec, parse_window
from .reports import dumps as dump_reports
from .reports import encode


def _add_measure(p, window="0..4,0..4", s_min=1e-3):
    p.add_argument("--family", choices=["gamma", "exp"], default="gamma")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--window", default=window, help="lo..hi per axis, comma separated")
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--s-min", type=float, default=s_min)


def _add_potential(p, default="bump:R=1,height=1,delta=0.5"):
    p.add_argument("--potential", default=default,
                   help="none | bump:R=..,height=..,delta=.. | ring:R=..,height=..,depth=..,r_well=..,delta=.. "
                        "| table:<file>,delta=..")


def _add_mcmc(p):
    p.add_argument("--burnin", type=int, default=20000)
    p.add_argument("--thin", type=int, default=1000)
    p.add_argument("--jump-scale", type=float, default=0.2)


def _add_common(p, seed_required=True):
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--out", default="", help="output path (stdout if omitted)")


def build_config(args, checks: list[str]) -> RunConfig:
    """The ``RunConfig`` equivalent of the parsed arguments; embedded in every report."""
    d: dict = {"run": {"checks": ",".join(checks), "output": getattr(args, "out", "")}}
    if getattr(args, "seed", None) is not None:
        d["run"]["seed"] = args.seed
    d["measure"] = {"family": args.family, "alpha": args.alpha, "beta": args.beta,
                    "window": args.window.replace(" ", ""), "periodic": args.periodic, "s_min": args.s_min}
    if getattr(args, "measure", None):
        d["measure"]["kind"] = args.measure
    if getattr(args, "potential", None):
        d["potential"] = parse_potential_spec(args.potential)
    d["sampling"] = {"n": args.n} if getattr(args, "n", None) is not None else {}
    if getattr(args, "draws", None):
        d["sampling"]["draws"] = args.draws
    if getattr(args, "burnin", None) is not None:
        d["mcmc"] = {"burnin": args.burnin, "thin": args.thin, "jump_scale": args.jump_scale}
    if getattr(args, "dt", None) is not None:
        d["diffusion"] = {"dt": args.dt, "T": args.T, "s_min": args.diffusion_s_min, "s_max": args.s_max}
    if getattr(args, "pairs", None):
        d["battery"] = {"pairs": args.pairs}
    return RunConfig.from_dict(d, "<command line>")


def _emit(text: str, path: str) -> None:
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _run_checks(args, checks) -> int:
    from .suite import run_suite
    cfg = build_config(args, checks)
    status, records = run_suite(cfg)
    _emit(dump_reports(records), args.out)
    return status


# -- subcommands ------------------------------------------------------------------------------

def cmd_sample_crm(args) -> int:
    from .crm import CrmSampleParams, sample_crm_batch
    cfg = build_config(args, [])
    p = CrmSampleParams(args.s_min, cfg.window(), args.seed)
    samples = sample_crm_batch(cfg.density(), p, args.n)
    _emit("".join(mc.dumps(m) for m in samples), args.out)
    return 0


def _boundary(path, window):
    if path in (None, "", "none"):
        return None
    xi = mc.load(path)
    if len(xi) != 1:
        raise ValueError(f"{path}: expected one boundary measure")
    return xi[0]


def cmd_sample_gibbs(args) -> int:
    from .gibbs import McmcParams, sample_gibbs
    cfg = build_config(args, [])
    W = cfg.window()
    xi = _boundary(args.boundary, W)
    p = McmcParams(s_min=args.s_min, burnin=args.burnin, thin=args.thin, jump_scale=args.jump_scale)
    run = sample_gibbs(W, xi, cfg.potential(), cfg.density(), p, args.n, seed=args.seed)
    _emit("".join(mc.dumps(m) for m in run.samples), args.out)
    sys.stderr.write(encode(run.diagnostics) + "\n")
    return 0


def _observables(spec: str, W, phi):
    from .cylinder import battery
    from .potential import hamiltonian_local
    from .suite import observables as builtin
    base = builtin(W)
    B = battery(W, 1e-3)
    out = {}
    for name in filter(None, (x.strip() for x in spec.split(","))):
        if name in base:
            out[name] = base[name]
        elif name == "count":
            out[name] = lambda e: float(len(e))
        elif name == "mass":
            out[name] = lambda e: float(e.total_mass)
        elif name == "energy":
            out[name] = (lambda e: hamiltonian_local(e, phi)) if phi is not None else (lambda e: 0.0)
        elif name.startswith("F:") and name[2:] in B:
            out[name] = B[name[2:]]
        else:
            raise ValueError(f"unknown observable {name!r}")
    return out


def cmd_simulate(args) -> int:
    from .diffusion import DiffusionParams, run_trajectory
    from .gibbs import McmcParams, sample_gibbs
    cfg = build_config(args, [])
    W = parse_window(cfg["measure"]["window"], True)
    phi, l = cfg.potential(), cfg.density()
    if args.init == "gibbs":
        p = McmcParams(s_min=args.diffusion_s_min, burnin=args.burnin, thin=1, jump_scale=args.jump_scale)
        eta0 = sample_gibbs(W, None, phi, l, p, 1, seed=[args.seed, 1]).samples[0]
    else:
        eta0 = mc.load(args.init, periodic=True)[0]
    params = DiffusionParams(args.dt, args.diffusion_s_min, args.s_max)
    obs = _observables(args.observables, eta0.window, phi)
    traj = run_trajectory(eta0, l, phi, params, args.T, seed=[args.seed, 2], observables=obs,
                          record_every=args.record_every)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *obs])
    for i, t in enumerate(traj.t):
        w.writerow([format(t, ".17g"), *(format(traj.values[k][i], ".17g") for k in obs)])
    _emit(buf.getvalue(), args.out)
    if traj.reflection_fraction > 0.01:
        sys.stderr.write(f"warning: {traj.reflection_fraction:.3%} of weight updates were reflected\n")
    return 0


def cmd_metric_distance(args) -> int:
    from .metric import CutoffFamily, metric_df, metric_dk, metric_dv
    a = mc.load(args.a)[0]
    b = mc.load(args.b)[0]
    cut = CutoffFamily(q=args.q)
    rec = {"d_V": metric_dv(a, b), "d_f": metric_df(a, b, cut)}
    rec["d"] = rec["d_V"] + rec["d_f"]
    if args.k:
        rec["d_k"] = metric_dk(a, b, args.k, cut)
    _emit(encode(rec) + "\n", args.out)
    return 0


def cmd_check_c2(args) -> int:
    from .config import potential_from
    from .potential import check_c2
    phi = potential_from(parse_potential_spec(args.potential))
    if phi is None:
        raise ValueError("check-c2 needs a potential")
    r = check_c2(phi, args.d, args.delta)
    rec = {"check": "c2", "name": phi.name, "epsilon": r.epsilon, "inf_phi": r.inf_phi, "neg_sup": r.neg_sup,
           "margin": r.margin, "pass": r.passed}
    _emit(encode(rec) + "\n", args.out)
    return 0 if r.passed else 1


def cmd_run_suite(args) -> int:
    from .suite import fast_config, run_suite
    if args.fast:
        cfg = fast_config(args.seed if args.seed is not None else 0)
    elif args.config:
        cfg = RunConfig.load(args.config)
    else:
        raise ValueError("give --config or --fast")
    status, records = run_suite(cfg, args.seed)
    _emit(dump_reports(records), args.out or cfg["run"]["output"])
    return status


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kone", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sample-crm", help="sample the truncated CRM; writes measures in text format")
    _add_measure(p)
    p.add_argument("--n", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=cmd_sample_crm)

    p = sub.add_parser("sample-gibbs", help="MH samples of the finite-volume Gibbs law")
    _add_measure(p)
    _add_potential(p)
    _add_mcmc(p)
    p.add_argument("--boundary", default="none", help="measure file of boundary atoms, or none")
    p.add_argument("--n", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=cmd_sample_gibbs)

    p = sub.add_parser("simulate", help="Euler-Maruyama trajectory; writes a CSV time series")
    _add_measure(p)
    _add_potential(p)
    _add_mcmc(p)
    p.add_argument("--init", default="gibbs", help="measure file or 'gibbs'")
    p.add_argument("--T", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--diffusion-s-min", type=float, default=0.1)
    p.add_argument("--s-max", type=float, default=50.0)
    p.add_argument("--observables", default="mass,count,energy")
    p.add_argument("--record-every", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("verify-mecke", help="Mecke identity on CRM samples")
    _add_measure(p)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--draws", type=int, default=4)
    _add_common(p)
    p.set_defaults(fn=lambda a: _run_checks(a, ["mecke"]))

    p = sub.add_parser("verify-nz", help="Nguyen-Zessin identity on Gibbs chain samples")
    _add_measure(p)
    _add_potential(p)
    _add_mcmc(p)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--draws", type=int, default=4)
    _add_common(p)
    p.set_defaults(fn=lambda a: _run_checks(a, ["nz"]))

    p = sub.add_parser("verify-ibp", help="integration by parts (and the dual energy estimate)")
    _add_measure(p)
    _add_potential(p)
    _add_mcmc(p)
    p.add_argument("--measure", choices=["crm", "gibbs"], default="crm")
    p.add_argument("--battery", default="default", help="'default' or comma-separated F:G pairs")
    p.add_argument("--dual", action="store_true", help="also run the dual energy estimate")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--draws", type=int, default=4)
    _add_common(p)
    p.set_defaults(fn=lambda a: _run_checks(a, ["ibp", "dual"] if a.dual else ["ibp"]))

    for name, check in (("verify-stationarity", "stationarity"), ("verify-reversibility", "reversibility")):
        p = sub.add_parser(name, help=f"{check} of the diffusion started from Gibbs samples")
        _add_measure(p)
        _add_potential(p)
        _add_mcmc(p)
        p.add_argument("--n", type=int, default=2000)
        p.add_argument("--T", type=float, default=0.1)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--diffusion-s-min", type=float, default=0.1)
        p.add_argument("--s-max", type=float, default=50.0)
        _add_common(p)
        p.set_defaults(fn=lambda a, c=check: _run_checks(a, [c]))

    p = sub.add_parser("metric-distance", help="d = d_V + d_f between two measure files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--k", type=int, default=0, help="also report d_k")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_metric_distance)

    p = sub.add_parser("check-c2", help="(C2) margin of a pair potential; exit 1 when it fails")
    _add_potential(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_check_c2)

    p = sub.add_parser("run-suite", help="run the checks listed in a config file")
    p.add_argument("--config", default="")
    p.add_argument("--fast", action="store_true", help="Mecke and integration by parts on gamma, n = 1000")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_run_suite)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    if getattr(args, "battery", None) and args.battery != "default":
        args.pairs = args.battery
    try:
        return int(args.fn(args))
    except (ConfigError, ValueError, OSError, mc.MeasureError) as e:
        sys.stderr.write(f"kone: error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

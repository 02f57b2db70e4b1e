"""Compiled vs numpy kernels on the two hot paths: interaction fields and MH blocks.

    python3 benchmarks/bench_kernels.py [--atoms 400] [--steps 20000]
"""
import argparse
import time

import numpy as np

from kone import _backend
from kone.density import gamma
from kone.gibbs import GibbsChainState, McmcParams, birth_mass, run_chain
from kone.measure import DiscreteMeasure, Window
from kone.potential import bump, interaction_fields
from kone.rng import make_rng


def best_of(fn, repeat=3):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_fields(backend, n_atoms, rng):
    win = Window((0.0, 0.0), (10.0, 10.0))
    eta = DiscreteMeasure(rng.uniform(0, 10, (n_atoms, 2)), rng.exponential(1.0, n_atoms), win)
    phi = bump(1.0, 1.0, 0.5)
    return best_of(lambda: interaction_fields(eta, phi, backend=backend))


def bench_chain(name, steps):
    win = Window((0.0, 0.0), (4.0, 4.0))
    phi = bump(1.0, 1.0, 0.5)
    l = gamma()
    p = McmcParams(s_min=1e-3, backend=name)
    mass = birth_mass(l, win, p)

    def run():
        state = GibbsChainState(DiscreteMeasure.empty(win), phi)
        run_chain(state, l, p, steps, make_rng(7), mass)
    return best_of(run)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atoms", type=int, default=400)
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args()
    names = ["fallback"] + (["compiled"] if _backend.compiled is not None else [])
    rng = np.random.default_rng(1)
    print(f"{'kernel':<28}" + "".join(f"{n:>12}" for n in names))
    row = [bench_fields(_backend.get(n), args.atoms, rng) for n in names]
    print(f"{f'interaction_fields n={args.atoms}':<28}" + "".join(f"{t:>11.4f}s" for t in row))
    row = [bench_chain(n, args.steps) for n in names]
    print(f"{f'mh chain {args.steps} steps':<28}" + "".join(f"{t:>11.4f}s" for t in row))


if __name__ == "__main__":
    main()

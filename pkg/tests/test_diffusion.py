import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from kone.crm import CrmSampleParams, sample_crm_batch
from kone.cylinder import battery
from kone.density import ExponentialFamily, gamma, sample_e1
from kone.diffusion import (DiffusionParams, SimulationState, _one_step_values, _taylor, drift, em_step,
                            evolve_replicas, generator_consistency, generator_start, reflect, reversibility_check, run_trajectory,
                            stationarity_check, stationary_weight_cdf)
from kone.measure import DiscreteMeasure, Window
from kone.potential import bump

TORUS = Window.cube(0.0, 4.0, 2, periodic=True)


def test_drift_free_gamma_atoms():
    eta = DiscreteMeasure([[0.5, 0.5], [3.0, 3.0]], [0.7, 2.0], TORUS)
    bx, bs = drift(eta, gamma(), bump(1.0))
    assert np.all(bx == 0.0)
    np.testing.assert_array_equal(bs, -eta.weights)


def test_drift_exponential_family():
    eta = DiscreteMeasure([[1.0, 1.0]], [1.5], TORUS)
    _, bs = drift(eta, ExponentialFamily(alpha=2.5, beta=3.0), None)
    assert bs[0] == pytest.approx(-1.5 / 2.5, rel=1e-15)


def test_drift_repulsion_sign():
    eta = DiscreteMeasure([[1.8, 2.0], [2.2, 2.0]], [1.0, 1.0], TORUS)
    bx, bs = drift(eta, gamma(), bump(1.0, 3.0))
    assert bx[0, 0] < 0 < bx[1, 0]
    assert np.all(bs < -eta.weights)


def test_em_step_with_injected_noise():
    eta = DiscreteMeasure([[0.1, 3.95], [2.0, 2.0]], [0.8, 1.2], TORUS)
    p = DiffusionParams(dt=1e-2, s_min=0.1, s_max=50.0)
    zx = np.array([[-1.0, 2.0], [0.5, 0.0]])
    zs = np.array([0.3, -0.2])
    st_ = SimulationState.from_measure(eta)
    em_step(st_, gamma(), None, p, noise=(zx, zs))
    s = eta.weights
    x = eta.positions + np.sqrt(2 * p.dt / s)[:, None] * zx
    np.testing.assert_allclose(st_.pos, np.mod(x, 4.0), rtol=1e-15)
    np.testing.assert_allclose(st_.w, s - s * p.dt + np.sqrt(2 * s * p.dt) * zs, rtol=1e-15)
    assert st_.steps == 1 and st_.t == pytest.approx(p.dt)


@given(st.lists(st.floats(-100.0, 200.0), min_size=1, max_size=50))
def test_reflect_lands_in_range(vals):
    s, k = reflect(np.array(vals), 0.1, 50.0)
    assert np.all((s >= 0.1) & (s <= 50.0))
    inside = np.array([0.1 <= v <= 50.0 for v in vals])
    np.testing.assert_array_equal(s[inside], np.array(vals)[inside])
    assert k >= int((~inside).sum())


def test_state_requires_periodic_window():
    eta = DiscreteMeasure([[1.0, 1.0]], [1.0], Window.cube(0.0, 4.0, 2))
    with pytest.raises(ValueError):
        SimulationState.from_measure(eta)
    with pytest.warns(UserWarning):
        SimulationState.from_measure(DiscreteMeasure([[1.0]], [1.0], Window.cube(0.0, 4.0, 1, periodic=True)))


def test_stationary_weight_law():
    # free atoms relax to the weight law l(s) / s on [s_min, s_max]
    p = DiffusionParams(dt=1e-3, s_min=0.1, s_max=50.0)
    n = 3000
    rng = np.random.default_rng(0)
    eta = DiscreteMeasure(rng.uniform(0, 4, (n, 2)), np.full(n, 1.0), TORUS)
    traj = run_trajectory(eta, gamma(), None, p, T=6.0, seed=1, record_every=10**9)
    cdf = stationary_weight_cdf(gamma(), p.s_min, p.s_max)
    assert stats.kstest(traj.final.weights, cdf).pvalue > 0.01
    # and the start matters: the initial point mass is far from it
    assert stats.kstest(np.full(n, 1.0) + rng.normal(0, 1e-3, n), cdf).pvalue < 1e-6


def test_stationary_cdf_oracle():
    cdf = stationary_weight_cdf(gamma(), 0.1, np.inf)
    t = sample_e1(0.1, np.inf, 4000, np.random.default_rng(2))
    assert stats.kstest(t, cdf).pvalue > 0.01
    assert cdf([0.05])[0] == 0.0 and cdf([1e9])[0] == pytest.approx(1.0)


def test_close_pair_separates():
    phi = bump(1.0, 5.0)
    p = DiffusionParams(dt=1e-3)
    eta = DiscreteMeasure([[1.9, 2.0], [2.1, 2.0]], [1.0, 1.0], TORUS)
    rng = np.random.default_rng(3)
    gaps = []
    for _ in range(1000):
        st_ = SimulationState.from_measure(eta)
        em_step(st_, gamma(), phi, p, rng)
        gaps.append(np.linalg.norm(st_.pos[1] - st_.pos[0]))
    m, se = np.mean(gaps), np.std(gaps, ddof=1) / math.sqrt(len(gaps))
    assert m - 0.2 > 3 * se


def test_long_run_stays_finite():
    rng = np.random.default_rng(4)
    eta = DiscreteMeasure(rng.uniform(0, 4, (12, 2)), rng.uniform(0.2, 2.0, 12), TORUS)
    obs = {"mass": lambda e: e.total_mass, "n": len}
    traj = run_trajectory(eta, gamma(), bump(1.0, 1.0), DiffusionParams(dt=1e-3), T=10.0, seed=5,
                          observables=obs, record_every=100)
    assert traj.values["mass"].size == 101
    assert np.all(np.isfinite(traj.values["mass"])) and np.all(traj.values["mass"] > 0)
    assert np.all(traj.values["n"] == 12)


def test_trajectories_are_reproducible():
    eta = generator_start(TORUS, seed=1)
    a = run_trajectory(eta, gamma(), bump(), DiffusionParams(s_min=1e-3), T=0.05, seed=9)
    b = run_trajectory(eta, gamma(), bump(), DiffusionParams(s_min=1e-3), T=0.05, seed=9)
    assert a.final == b.final


def test_replicas_independent_of_workers():
    samples = sample_crm_batch(gamma(), CrmSampleParams(0.1, TORUS, seed=6), 12)
    a = evolve_replicas(samples, gamma(), bump(), DiffusionParams(), 0.01, seed=2, n_workers=1)
    b = evolve_replicas(samples, gamma(), bump(), DiffusionParams(), 0.01, seed=2, n_workers=4)
    assert a[0] == b[0] and a[1] == b[1]


def test_taylor_gradient_matches_finite_differences():
    F = battery(TORUS)["sin"]
    eta = generator_start(TORUS, seed=3)
    active, g, H = _taylor(F, eta)
    d = eta.dim
    h = 1e-6
    for a, i in enumerate(active):
        for c in range(d + 1):
            pos, w = eta.positions.copy(), eta.weights.copy()
            pos_m, w_m = pos.copy(), w.copy()
            if c < d:
                pos[i, c] += h
                pos_m[i, c] -= h
            else:
                w[i] += h
                w_m[i] -= h
            fd = (F(DiscreteMeasure(pos, w, TORUS)) - F(DiscreteMeasure(pos_m, w_m, TORUS))) / (2 * h)
            assert g[a * (d + 1) + c] == pytest.approx(fd, rel=1e-6, abs=1e-9)
    np.testing.assert_allclose(H, H.T, atol=1e-14)


def test_generator_start_has_interacting_pair():
    eta = generator_start(TORUS, seed=4)
    assert len(eta) == 8
    assert np.linalg.norm(eta.positions[0] - eta.positions[1]) == pytest.approx(0.8, rel=1e-12)
    assert np.all(eta.weights[:2] >= 0.8) and np.all(eta.weights[2:] < 0.01)


def test_batched_one_step_matches_em_step():
    F = battery(TORUS, s_scale=2.0)["product"]
    eta = generator_start(TORUS, seed=2)
    l, phi = gamma(), bump(1.0, 1.0, 0.5)
    p = DiffusionParams(dt=4e-3, s_min=1e-3, s_max=1e6)
    rng = np.random.default_rng(0)
    zx, zs = rng.standard_normal((5, len(eta), 2)), rng.standard_normal((5, len(eta)))
    bx, bs = drift(eta, l, phi)
    got = _one_step_values(F, eta, bx, bs, p.dt, zx, zs, p)
    for r in range(5):
        st_ = SimulationState.from_measure(eta)
        em_step(st_, l, phi, p, noise=(zx[r], zs[r]))
        assert got[r] == pytest.approx(F(st_.measure()), rel=1e-13, abs=1e-15)


def test_generator_consistency_first_order():
    F = battery(TORUS, s_scale=2.0)["sin"]
    starts = [generator_start(TORUS, seed=k) for k in range(2)]
    r = generator_consistency(F, starts, gamma(), bump(1.0, 1.0, 0.5), n_pairs=4000, seed=1)
    assert len(r.LF) == 2 and len(r.start_slopes) == 2
    assert r.errors[0] > r.errors[1] > r.errors[2]
    assert r.passed, r


@pytest.mark.slow
def test_free_gamma_drift_checks():
    samples = sample_crm_batch(gamma(), CrmSampleParams(0.1, TORUS, seed=7), 400)
    p = DiffusionParams(dt=1e-3, s_min=0.1)
    funcs = battery(TORUS, s_min=0.1)
    ev = evolve_replicas(samples, gamma(), None, p, 0.05, seed=8)
    st_ = stationarity_check(samples, gamma(), None, p, 0.05, {"mass": lambda e: e.total_mass}, evolved=ev)
    rv = reversibility_check(samples, gamma(), None, p, 0.05, [(funcs["sin"], funcs["tanh"])], evolved=ev)
    assert all(r.passed for r in st_ + rv), st_ + rv

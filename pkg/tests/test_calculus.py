import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kone.calculus import (atom_terms, dual_energy_check, energy_form_mc, generator_apply, generator_terms,
                           gradK, grad_atoms, ibp_check, square_field, tangent_product)
from kone.crm import CrmSampleParams, sample_crm_batch
from kone.cylinder import BATTERY_PAIRS, CylinderFunction, Linear, TestFunction, battery
from kone.density import CustomDensity, ExponentialFamily, gamma
from kone.measure import DiscreteMeasure, Window
from kone.potential import bump

WIN = Window.cube(0.0, 4.0, 2)
FUNCS = battery(WIN)
NAMES = sorted(FUNCS)


def inside_measure(rng, n, d=2):
    # atoms well inside every battery support
    x = rng.uniform(0.6, 3.4, (n, d))
    s = rng.uniform(0.35, 1.4, n)
    return DiscreteMeasure(x, s, WIN)


def moved(eta, i, dx=None, ds=0.0):
    x = eta.positions.copy()
    s = eta.weights.copy()
    if dx is not None:
        x[i] += dx
    s[i] += ds
    return DiscreteMeasure(x, s, WIN)


INHOM = ExponentialFamily(alpha=lambda x: 1.0 + 0.2 * x[:, 0], beta=lambda x: 1.0 + 0.1 * x[:, 1] ** 2,
                          grad_alpha=lambda x: np.column_stack([0.2 + 0 * x[:, 0], 0 * x[:, 0]]),
                          grad_beta=lambda x: np.column_stack([0 * x[:, 0], 0.2 * x[:, 1]]))


def test_inner_derivatives_finite_difference(rng):
    phi = TestFunction.box(0.1, 2.0, [0.0, 0.0], [3.0, 3.0], power=1.5, flat=0.2, order=4)
    s = rng.uniform(0.2, 1.9, 30)
    x = rng.uniform(0.2, 2.8, (30, 2))
    D = phi.derivs(s, x)
    h = 1e-5
    np.testing.assert_allclose(D.value, phi(s, x), rtol=1e-15)
    np.testing.assert_allclose(D.ds, (phi(s + h, x) - phi(s - h, x)) / (2 * h), rtol=1e-6, atol=1e-9)
    h2 = 1e-4
    np.testing.assert_allclose(D.dss, (phi(s + h2, x) - 2 * phi(s, x) + phi(s - h2, x)) / h2**2, rtol=1e-5, atol=1e-5)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        np.testing.assert_allclose(D.grad_x[:, k], (phi(s, x + e) - phi(s, x - e)) / (2 * h), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(D.dsx[:, k], (phi(s + h, x + e) - phi(s + h, x - e) - phi(s - h, x + e)
                                                 + phi(s - h, x - e)) / (4 * h * h), rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("name", NAMES)
def test_gradient_finite_difference(name, rng):
    F = FUNCS[name]
    eta = inside_measure(rng, 6)
    gx, gs = grad_atoms(F, eta)
    h = 1e-6
    floor = 1e-7 * max(1.0, abs(F(eta)))  # roundoff of the difference quotient
    for i in range(len(eta)):
        fd_x = (F(moved(eta, i, [h, 0.0])) - F(moved(eta, i, [-h, 0.0]))) / (2 * h)
        fd_s = (F(moved(eta, i, ds=h)) - F(moved(eta, i, ds=-h))) / (2 * h)
        assert gx[i, 0] == pytest.approx(fd_x, rel=1e-6, abs=floor)
        assert gs[i] == pytest.approx(fd_s, rel=1e-6, abs=floor)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(NAMES), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_directional_derivative(name, n, seed):
    rng = np.random.default_rng(seed)
    F = FUNCS[name]
    eta = inside_measure(rng, n)
    a, b = rng.normal(size=2), rng.normal(size=2)
    v = lambda x: np.column_stack([np.sin(x @ a), np.cos(x @ b)])
    hfun = lambda x: np.tanh(x @ b)

    def flow(t):
        x = eta.positions
        return DiscreteMeasure(x + t * v(x), eta.weights * np.exp(t * hfun(x)), WIN)

    t = 1e-6
    fd = (F(flow(t)) - F(flow(-t))) / (2 * t)
    g = gradK(F, eta)
    from kone.calculus import TangentVector
    assert fd == pytest.approx(g.inner(TangentVector(v(eta.positions), hfun(eta.positions), eta.weights)),
                               rel=1e-6, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(NAMES), st.sampled_from(NAMES), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_square_field_identities(fname, gname, n, seed):
    rng = np.random.default_rng(seed)
    F, G = FUNCS[fname], FUNCS[gname]
    eta = inside_measure(rng, n)
    assert square_field(F, eta) == pytest.approx(gradK(F, eta).norm2(), rel=1e-12, abs=1e-300)
    assert tangent_product(F, G, eta) == pytest.approx(gradK(F, eta).inner(gradK(G, eta)), rel=1e-12, abs=1e-14)
    assert tangent_product(F, G, eta) == pytest.approx(tangent_product(G, F, eta), rel=1e-15, abs=1e-300)


def generator_oracle(F, eta, l, phi):
    # second differences of the composite F plus explicit interaction loops
    s, x = eta.weights, eta.positions
    n, d = x.shape
    h = 1e-4
    total = 0.0
    f0 = F(eta)
    for i in range(n):
        lap_x = gx_dot = 0.0
        u = 0.0
        gu = np.zeros(d)
        for j in range(n):
            if j != i:
                u += s[j] * float(phi(x[i], x[j])[0])
                gu += s[j] * phi.grad_x(x[i], x[j])[0]
        glx = l.grad_x_log(s[i:i + 1], x[i:i + 1])[0]
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            fp, fm = F(moved(eta, i, e)), F(moved(eta, i, -e))
            lap_x += (fp - 2 * f0 + fm) / h**2
            dk = (fp - fm) / (2 * h)
            gx_dot += (glx[k] / s[i] - gu[k]) * dk
        fp, fm = F(moved(eta, i, ds=h)), F(moved(eta, i, ds=-h))
        fs, fss = (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h**2
        dls = float(l.dlog_ds(s[i:i + 1], x[i:i + 1])[0])
        total += lap_x / s[i] + gx_dot + s[i] * fss + s[i] * dls * fs - u * s[i] * fs
    return total


@pytest.mark.parametrize("name", ["sin", "gaussian", "product", "tanh"])
@pytest.mark.parametrize("l", [gamma(), INHOM])
def test_generator_against_finite_differences(name, l, rng):
    F = FUNCS[name]
    eta = inside_measure(rng, 3)
    eta = DiscreteMeasure(eta.positions * 0.3 + 1.4, eta.weights, WIN)  # within interaction range
    phi = bump(1.0, 1.5)
    got = generator_apply(F, eta, l, phi, fast=False)
    assert got == pytest.approx(generator_oracle(F, eta, l, phi), rel=1e-5, abs=1e-6)


@pytest.mark.parametrize("name", NAMES)
def test_gamma_fast_path_bit_exact(name, rng):
    eta = inside_measure(rng, 25)
    for phi in (None, bump(1.0, 1.0)):
        a = generator_terms(FUNCS[name], eta, gamma(), phi, fast=True)
        b = generator_terms(FUNCS[name], eta, gamma(), phi, fast=False)
        np.testing.assert_array_equal(a, b)


def test_generator_trivial_cases(rng):
    assert generator_apply(FUNCS["sin"], DiscreteMeasure.empty(WIN), gamma()) == 0.0
    eta = inside_measure(rng, 10)
    assert generator_apply(FUNCS["constant"], eta, gamma(), bump()) == 0.0


def test_generator_rejects_nondifferentiable_density(rng):
    l = CustomDensity(lambda s, x: np.exp(-s), lambda s, x: np.full(np.shape(s), np.inf),
                      lambda s, x: np.zeros_like(x))
    with pytest.raises(ValueError, match="differentiable"):
        generator_apply(FUNCS["sin"], inside_measure(rng, 3), l)


def test_atom_terms_empty():
    t = atom_terms(FUNCS["gaussian"], DiscreteMeasure.empty(WIN))
    assert t.grad_x.shape == (0, 2) and np.all(t.y == 0)


@pytest.fixture(scope="module")
def gamma_samples():
    return sample_crm_batch(gamma(), CrmSampleParams(1e-3, WIN, seed=21), 1000)


@pytest.mark.parametrize("pair", BATTERY_PAIRS)
def test_ibp_on_gamma(pair, gamma_samples):
    F, G = FUNCS[pair[0]], FUNCS[pair[1]]
    rep = ibp_check(F, G, gamma_samples, gamma())
    assert rep.passed, rep
    assert rep.E_form == pytest.approx(energy_form_mc(F, G, gamma_samples).estimate, rel=1e-12)


def test_ibp_detects_wrong_generator(gamma_samples):
    # the generator of a different weight law breaks the identity
    rep = ibp_check(FUNCS["linear"], FUNCS["linear"], gamma_samples, ExponentialFamily(0.4, 1.0))
    assert not rep.passed


@pytest.mark.parametrize("pair", BATTERY_PAIRS[:3])
def test_dual_energy_on_gamma(pair, gamma_samples):
    rep = dual_energy_check(FUNCS[pair[0]], FUNCS[pair[1]], gamma_samples[:600], gamma(), seed=3)
    assert rep.passed, rep


def test_linear_cylinder_gradient_is_inner_gradient(rng):
    phi = TestFunction.box(0.1, 3.0, [0.0, 0.0], [4.0, 4.0], flat=0.5)
    F = CylinderFunction(Linear([2.0]), [phi])
    eta = inside_measure(rng, 5)
    gx, gs = grad_atoms(F, eta)
    D = phi.derivs(eta.weights, eta.positions)
    np.testing.assert_allclose(gx, 2 * D.grad_x)
    np.testing.assert_allclose(gs, 2 * D.ds)

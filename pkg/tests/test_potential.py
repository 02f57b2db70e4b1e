import math

import numpy as np
import pytest
from scipy.interpolate import PPoly

from kone.potential import (PairPotential, bump, c2_epsilon, check_c2, ring, table, unit_ball_volume,
                            zero_potential)


def test_c2_epsilon_value():
    eps = c2_epsilon(2, 1.0, 0.5)
    assert isinstance(eps, float)
    assert abs(eps - 12 * math.pi) <= 1e-12 * 12 * math.pi


@pytest.mark.parametrize("d, v", [(1, 2.0), (2, math.pi), (3, 4 * math.pi / 3)])
def test_unit_ball_volume(d, v):
    assert unit_ball_volume(d) == pytest.approx(v, rel=1e-15)


def test_bump_profile():
    phi = bump(2.0, 3.0)
    r = np.linspace(0, 2.5, 11)
    t = np.clip(r / 2.0, 0, 1)
    np.testing.assert_allclose(phi.psi(r), 3.0 * (1 - 3 * t**2 + 2 * t**3), atol=1e-14)
    assert phi.sup_norm == pytest.approx(3.0) and phi.neg_sup_norm == 0.0
    h = 1e-6
    np.testing.assert_allclose(phi.dpsi(r[1:-3]), (phi.psi(r[1:-3] + h) - phi.psi(r[1:-3] - h)) / (2 * h), rtol=1e-6)


def test_grad_x_is_symmetric_and_finite():
    phi = bump()
    x, y = np.array([[0.2, 0.1]]), np.array([[0.5, 0.4]])
    np.testing.assert_allclose(phi.grad_x(x, y), -phi.grad_x(y, x))
    assert np.all(phi.grad_x(x, x) == 0.0)


def test_ring_extrema():
    phi = ring(1.0, 100.0, 0.5, 0.8, delta=0.3)
    assert phi.neg_sup_norm == pytest.approx(0.5, rel=1e-12)
    assert phi.sup_norm == pytest.approx(100.0, rel=1e-12)
    assert phi.inf_within(0.3) == pytest.approx(float(phi.psi(0.3)), rel=1e-12)


def test_c2_pass_and_fail():
    # a deep enough core dominates the scaled attractive part
    good = check_c2(ring(1.0, 200.0, 0.5, 0.8, delta=0.3), d=2)
    assert good.passed and good.margin > 0
    bad = check_c2(ring(1.0, 5.0, 0.5, 0.8, delta=0.3), d=2)
    assert not bad.passed
    assert check_c2(bump(), d=2).passed
    assert not check_c2(zero_potential(), d=2).passed


def test_table_potential_round_trip():
    r = np.linspace(0.0, 1.5, 16)
    v = 2.0 * np.cos(np.pi * r / 3.0) ** 2 * (1.5 - r)
    phi = table(r, v, 0.4)
    np.testing.assert_allclose(phi.psi(r), v, atol=1e-12)
    assert phi.R == 1.5 and phi.psi(1.6) == 0.0


def test_invalid_potentials():
    with pytest.raises(ValueError):
        PairPotential(PPoly(np.zeros((4, 1)), [0.1, 1.0]), 1.0, 0.5)
    with pytest.raises(ValueError):
        bump(1.0, 1.0, delta=2.0)
    with pytest.raises(ValueError):
        ring(1.0, r_well=1.5)

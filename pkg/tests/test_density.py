import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import exp1

from kone.crm import CrmSampleParams, sample_crm
from kone.density import CustomDensity, DensityError, ExponentialFamily, gamma, sample_e1
from kone.measure import Window


def e1_cdf(t_lo, t_hi):
    z = exp1(t_lo) - (exp1(t_hi) if np.isfinite(t_hi) else 0.0)
    return lambda t: (exp1(t_lo) - exp1(t)) / z


@pytest.mark.parametrize("t_lo, t_hi", [(1e-3, np.inf), (1e-3, 0.5), (0.2, 3.0), (2.0, np.inf), (5.0, 5.5)])
def test_sample_e1_law(t_lo, t_hi):
    t = sample_e1(t_lo, t_hi, 20000, np.random.default_rng(1))
    assert t.min() >= t_lo and t.max() <= t_hi
    assert stats.kstest(t, e1_cdf(t_lo, t_hi)).pvalue > 1e-3


def test_sample_e1_rejects_bad_interval():
    with pytest.raises(ValueError):
        sample_e1(0.0, 1.0, 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_e1(2.0, 1.0, 5, np.random.default_rng(0))


def test_sigma_mass_matches_quadrature():
    l = ExponentialFamily(alpha=2.0, beta=0.7)
    w = Window((0.0, 0.0), (1.5, 2.0))
    quad, _ = integrate.quad(lambda s: 0.7 * math.exp(-s / 2.0) / s, 0.01, 4.0)
    assert l.sigma_mass(w, 0.01, 4.0) == pytest.approx(3.0 * quad, rel=1e-10)
    ign, _ = integrate.quad(lambda s: 0.7 * math.exp(-s / 2.0), 0.0, 0.01)
    assert l.ignored_mass(w, 0.01) == pytest.approx(3.0 * ign, rel=1e-10)


def test_gamma_expected_mass_is_volume():
    # expected weight above s_min plus the ignored part below it
    l, w = gamma(), Window.cube(0.0, 1.0, 2)
    for s_min in (1e-6, 1e-3, 0.5):
        kept, _ = integrate.quad(lambda s: math.exp(-s), s_min, np.inf)
        assert kept + l.ignored_mass(w, s_min) == pytest.approx(w.volume, rel=1e-12)


def test_integrability_report():
    out = gamma().check_integrability(Window.cube(0.0, 1.0, 1))
    assert out["int_l"] == pytest.approx(1.0, rel=1e-8)
    assert out["int_sl"] == pytest.approx(1.0, rel=1e-8)
    assert out["finite"] and out["diverges_at_zero"]


def test_inhomogeneous_positions():
    l = ExponentialFamily(alpha=lambda x: 1.0 + x[:, 0], beta=lambda x: 1.0 + 0.0 * x[:, 0])
    w = Window((0.0,), (2.0,))
    s_lo = 0.05
    dens = lambda x: exp1(s_lo / (1.0 + x))
    z, _ = integrate.quad(dens, 0.0, 2.0)
    x = l.sample_x(w, s_lo, np.inf, 5000, np.random.default_rng(2))[:, 0]
    cdf = np.vectorize(lambda v: integrate.quad(dens, 0.0, v)[0] / z)
    assert stats.kstest(x, cdf).pvalue > 1e-3
    assert l.sigma_mass(w, s_lo) == pytest.approx(z, rel=1e-7)


def test_custom_density_is_not_samplable():
    l = CustomDensity(lambda s, x: np.exp(-s * s), lambda s, x: -2 * s, lambda s, x: np.zeros_like(x))
    assert l.intensity(np.array([2.0]), np.zeros((1, 1)))[0] == pytest.approx(math.exp(-4) / 2)
    with pytest.raises(DensityError):
        sample_crm(l, CrmSampleParams(1e-3, Window.cube(0.0, 1.0, 1)))


def test_bad_family_parameters():
    with pytest.raises(ValueError):
        ExponentialFamily(alpha=-1.0)
    assert gamma().family == "gamma" and ExponentialFamily(2.0, 1.0).family == "exp"

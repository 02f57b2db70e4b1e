import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kone.measure import (DiscreteMeasure, MarkedConfiguration, MeasureError, Window, dumps,
                          from_configuration, load, loads, local_mass, pair, pair_hat, save,
                          to_configuration)


def test_window_basics():
    w = Window((0.0, -1.0), (2.0, 1.0))
    assert w.dim == 2
    assert w.volume == pytest.approx(4.0)
    assert w.contains([[1.0, 0.0], [3.0, 0.0]]).tolist() == [True, False]
    with pytest.raises(MeasureError):
        Window((0.0,), (0.0,))


@pytest.mark.parametrize("pos, w, msg", [
    ([[0.5, 0.5]], [0.0], "positive"),
    ([[0.5, 0.5]], [-1.0], "positive"),
    ([[0.5, 0.5]], [np.nan], "non-finite"),
    ([[0.5, np.inf]], [1.0], "non-finite"),
    ([[0.5, 0.5], [0.5, 0.5]], [1.0, 2.0], "duplicate"),
    ([[5.0, 0.5]], [1.0], "outside"),
    ([[0.5, 0.5]], [1.0, 2.0], "shape"),
])
def test_invalid_measures_rejected(pos, w, msg):
    with pytest.raises(MeasureError, match=msg):
        DiscreteMeasure(pos, w, Window.cube(0.0, 1.0, 2))


def test_empty_measure():
    eta = DiscreteMeasure.empty(Window.cube(0.0, 1.0, 3))
    assert len(eta) == 0 and eta.total_mass == 0.0
    assert eta.positions.shape == (0, 3)
    assert local_mass(eta, Window.cube(0.0, 1.0, 3)) == 0.0


def test_measures_are_immutable(make_measure, square):
    eta = make_measure(square, 5)
    with pytest.raises(ValueError):
        eta.weights[0] = 1.0
    bigger = eta.add_atom(0.7, [0.1, 0.2])
    assert len(bigger) == 6 and len(eta) == 5
    with pytest.raises(MeasureError):
        bigger.add_atom(1.0, [0.1, 0.2])


def test_configuration_round_trip(make_measure, square):
    eta = make_measure(square, 50)
    gamma = to_configuration(eta)
    assert isinstance(gamma, MarkedConfiguration)
    assert from_configuration(gamma) == eta
    assert to_configuration(from_configuration(gamma)) == gamma


def test_configuration_without_window():
    g = MarkedConfiguration([1.0, 2.0], [[0.0, 0.0], [1.0, 3.0]])
    eta = from_configuration(g)
    assert eta.window.lo == (0.0, 0.0) and eta.window.hi == (1.0, 3.0)
    with pytest.raises(MeasureError):
        from_configuration(MarkedConfiguration([], np.zeros((0, 2))))


def test_local_mass_examples():
    box = Window.cube(-0.5, 0.5, 2)
    g = MarkedConfiguration([1.0, 2.0], [[0.0, 0.0], [3.0, 3.0]])
    assert local_mass(g, box) == 1.0


def test_pairings_match_loops(make_measure, square, rng):
    eta = make_measure(square, 100)
    f = lambda x: np.sin(x[:, 0]) * np.cos(2 * x[:, 1])
    phi = lambda s, x: np.exp(-s) * x[:, 0] ** 2
    box = Window((0.5, 1.0), (2.5, 3.0))
    loop_f = sum(s * np.sin(x[0]) * np.cos(2 * x[1]) for s, x in zip(eta.weights, eta.positions))
    loop_phi = sum(np.exp(-s) * x[0] ** 2 for s, x in zip(eta.weights, eta.positions))
    loop_m = sum(s for s, x in zip(eta.weights, eta.positions)
                 if 0.5 <= x[0] <= 2.5 and 1.0 <= x[1] <= 3.0)
    assert pair(f, eta) == pytest.approx(loop_f, rel=1e-12)
    assert pair_hat(phi, eta) == pytest.approx(loop_phi, rel=1e-12)
    assert local_mass(eta, box) == pytest.approx(loop_m, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 30), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_text_format_round_trip(n, d, seed):
    rng = np.random.default_rng(seed)
    w = Window.cube(-1.5, 2.0, d)
    x = w.lo_arr + rng.random((n, d)) * w.lengths
    s = np.exp(rng.normal(0, 3, n))
    eta = DiscreteMeasure(x, s, w)
    (back,) = loads(dumps(eta))
    assert back == eta


def test_file_round_trip_many(tmp_path, make_measure, square):
    ms = [make_measure(square, n) for n in (0, 3, 17)]
    save(tmp_path / "m.txt", ms)
    assert load(tmp_path / "m.txt") == ms


@pytest.mark.parametrize("text, msg", [
    ("1.0 0.5 0.5\n", "before header"),
    ("# d=2 window=0..1,0..1\n1.0 0.5\n", "columns"),
    ("# d=3 window=0..1,0..1\n", "axes"),
    ("# d=2 window=0..1,0..1\n-1.0 0.5 0.5\n", "positive"),
])
def test_text_format_errors(text, msg):
    with pytest.raises(MeasureError, match=msg):
        loads(text)

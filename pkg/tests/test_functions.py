import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from chaosrates.chaos import PiecewiseExponential as PE, function_from_dict
from chaosrates.errors import InvalidArgumentError


def quad_inf(f, a):
    val, _ = quad(f, a, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def test_exponential_values_and_tail():
    f = PE.exponential(2.0, 0.5)
    assert f(0.0) == 2.0
    assert f(3.0) == pytest.approx(2 * np.exp(-1.5), rel=1e-15)
    # int_t^inf 4 e^{-s} ds = 4 e^{-t}
    np.testing.assert_allclose(f.tail_sq([0.0, 1.0, 7.5]), 4 * np.exp(-np.array([0, 1, 7.5])), rtol=1e-14)
    assert f.tail_sq(np.inf) == 0.0


def test_constant_has_infinite_mass():
    f = PE.constant(1.5)
    assert not f.square_integrable()
    assert f.integral_sq(1.0, 3.0) == pytest.approx(4.5)
    assert f.tail_sq(2.0) == np.inf


def test_piecewise_without_tail_vanishes():
    f = PE.piecewise_constant([0, 1], [1.0])
    assert f.vanishes_eventually()
    assert f(0.5) == 1.0 and f(2.0) == 0.0
    assert f.tail_sq(0.0) == pytest.approx(1.0)


def test_piecewise_tail_against_quadrature():
    f = PE.piecewise_constant([0, 1, 2.5, 4], [0.7, 1.1, 0.4], tail_level=0.3, tail_rate=0.2)
    g = lambda s: f(s) ** 2
    for t in [0.0, 0.3, 1.0, 2.7, 4.0, 9.0]:
        pts = [p for p in (1, 2.5, 4) if p > t]
        oracle = sum(quad(g, a, b)[0] for a, b in zip([t] + pts, pts + [pts[-1] if pts else t])) if pts else 0.0
        oracle += quad_inf(g, max(t, 4.0))
        assert f.tail_sq(t) == pytest.approx(oracle, rel=1e-12, abs=1e-14)


def test_product_integral_against_quadrature():
    f = PE.piecewise_constant([0, 1, 3], [0.5, 2.0], tail_level=1.0, tail_rate=0.3)
    g = PE.exponential(0.8, 0.25)
    prod = lambda s: f(s) * g(s)
    for a, b in [(0, 0.5), (0.5, 2.0), (0.2, 7.0), (3.5, 9.0), (1.0, 1.0)]:
        pts = [p for p in (1, 3) if a < p < b]
        edges = [a] + pts + [b]
        oracle = sum(quad(prod, x, y, epsabs=1e-14)[0] for x, y in zip(edges[:-1], edges[1:]))
        assert f.product_integral(g, a, b) == pytest.approx(oracle, rel=1e-12, abs=1e-15)
    assert f.tail_product(g, 2.0) == pytest.approx(
        quad(prod, 2.0, 3.0)[0] + quad_inf(prod, 3.0), rel=1e-12)


def test_integral_on_constant_function_is_finite():
    # a regression guard: int_0^0 of an unbounded-mass function must be 0, not inf - inf
    f = PE.constant(1.0)
    assert f.integral_sq(0.0, 0.0) == 0.0
    assert f.integral_sq(2.0, 5.0) == pytest.approx(3.0)


def test_scaling_is_exact():
    f = PE.piecewise_constant([0, 1], [0.3], tail_level=0.3, tail_rate=0.1)
    s = f.scaled(2.0)
    ts = np.linspace(0, 10, 41)
    np.testing.assert_array_equal(s.tail_sq(ts), 4 * f.tail_sq(ts))


def test_small_rate_is_stable():
    f = PE.exponential(1.0, 1e-12)
    assert f.integral_sq(0.0, 2.0) == pytest.approx(2.0, rel=1e-9)


@pytest.mark.parametrize("block", [
    {"type": "exponential", "a": 1.0, "b": 0.5},
    {"type": "constant", "a": 2.0},
    {"type": "piecewise", "knots": [0, 1, 2], "values": [1.0, 0.5], "tail_level": 0.5, "tail_rate": 0.1},
    0.7,
])
def test_round_trip_dict(block):
    f = function_from_dict(block)
    g = function_from_dict(f.to_dict())
    ts = np.linspace(0, 5, 21)
    np.testing.assert_array_equal(f(ts), g(ts))


@pytest.mark.parametrize("block", [
    {"type": "exponential", "a": 1.0},
    {"type": "exponential", "a": 1.0, "b": 0.5, "c": 1},
    {"type": "spline"},
    "nope",
])
def test_bad_blocks(block):
    with pytest.raises(InvalidArgumentError):
        function_from_dict(block)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.05, 3), b=st.floats(0.01, 2), t=st.floats(0, 20), dt=st.floats(0, 5))
def test_property_tail_is_additive(a, b, t, dt):
    f = PE.exponential(a, b)
    assert f.tail_sq(t) == pytest.approx(f.integral_sq(t, t + dt) + f.tail_sq(t + dt), rel=1e-10, abs=1e-300)

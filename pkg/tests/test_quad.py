"""Gauss-Legendre rule construction and definite-integral tests.

numpy.polynomial.legendre.leggauss serves as the independent oracle for
nodes and weights; classical exactness identities cover the rest.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hazsim.errors import NumericError
from hazsim.quad import MAX_ORDER, gl_rule, integrate, mapped_nodes


@pytest.mark.parametrize("order", [1, 2, 3, 5, 8, 16, 30, 64, 256])
def test_nodes_and_weights_match_leggauss(order):
    want_x, want_w = np.polynomial.legendre.leggauss(order)
    rule = gl_rule(order)
    # the two implementations agree to a few ulp; at high order numpy's
    # weights are the less exact side of the comparison
    np.testing.assert_allclose(rule.nodes, want_x, atol=5e-15, rtol=0)
    np.testing.assert_allclose(rule.weights, want_w, atol=2e-14, rtol=0)


@pytest.mark.parametrize("order", [2, 3, 7, 30, 100])
def test_rule_symmetry_is_exact(order):
    rule = gl_rule(order)
    assert np.all(rule.nodes + rule.nodes[::-1] == 0.0)
    assert np.all(rule.weights == rule.weights[::-1])


@pytest.mark.parametrize("order", [1, 2, 5, 30, 200])
def test_weights_sum_to_two(order):
    assert abs(gl_rule(order).weights.sum() - 2.0) < 1e-14


def test_order_n_is_exact_through_degree_2n_minus_1():
    # GL-2 integrates cubics exactly: int_{-1}^{1} t^3 dt = 0,
    # int_0^1 t^3 dt = 1/4
    got = integrate(lambda t: t ** 3, 0.0, 1.0, gl_rule(2))
    assert got == pytest.approx(0.25, rel=1e-15)
    # degree 2n is no longer exact
    off = integrate(lambda t: t ** 4, 0.0, 1.0, gl_rule(2))
    assert off != pytest.approx(0.2, rel=1e-12)
    assert integrate(lambda t: t ** 4, 0.0, 1.0, gl_rule(3)) == pytest.approx(
        0.2, rel=1e-14
    )


def test_rule_cache_returns_same_object():
    assert gl_rule(30) is gl_rule(30)


def test_rule_arrays_are_read_only():
    rule = gl_rule(12)
    with pytest.raises(ValueError):
        rule.nodes[0] = 0.0


def test_order_bounds():
    with pytest.raises(NumericError):
        gl_rule(0)
    with pytest.raises(NumericError):
        gl_rule(MAX_ORDER + 1)


def test_empty_interval_is_exactly_zero():
    assert integrate(lambda t: t ** 2, 1.3, 1.3, gl_rule(10)) == 0.0


def test_integrand_called_once_with_full_node_vector():
    calls = []

    def f(t):
        calls.append(np.shape(t))
        return np.ones_like(t)

    got = integrate(f, 0.0, 2.0, gl_rule(15))
    assert calls == [(15,)]
    assert got == pytest.approx(2.0, rel=1e-15)


def test_non_finite_integrand_reports_offending_time():
    def f(t):
        return np.where(t > 0.7, np.inf, 1.0)

    with pytest.raises(NumericError, match="t="):
        integrate(f, 0.5, 1.0, gl_rule(5))


def test_mapped_nodes_cover_the_interval():
    rule = gl_rule(30)
    pts, half = mapped_nodes(rule, 2.0, 5.0)
    assert half == pytest.approx(1.5)
    assert pts.min() > 2.0 and pts.max() < 5.0
    assert pts.shape == (30,)


def test_exponential_integral():
    got = integrate(np.exp, 0.0, 1.0, gl_rule(20))
    assert got == pytest.approx(np.e - 1.0, rel=1e-15)


def test_log_cubic_hazard_cumulative_matches_trapezoid():
    # same integrand family the engine sees: h(t) = exp(cubic in t)
    def h(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-1.0 + 0.02 * t - 0.03 * t ** 2 + 0.005 * t ** 3)

    grid = np.linspace(0.0, 1.5, 100_001)
    oracle = np.trapezoid(h(grid), grid)
    got = integrate(h, 0.0, 1.5, gl_rule(30))
    assert got == pytest.approx(oracle, rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(min_value=1, max_value=40),
    st.floats(min_value=-5.0, max_value=5.0),
    st.floats(min_value=0.01, max_value=5.0),
)
def test_linear_functions_integrate_exactly(order, a, width):
    b = a + width
    got = integrate(lambda t: 3.0 * t + 1.0, a, b, gl_rule(order))
    want = 1.5 * (b ** 2 - a ** 2) + (b - a)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=64))
def test_weights_are_positive(order):
    assert np.all(gl_rule(order).weights > 0)

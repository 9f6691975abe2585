import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokinetic.diffengine import (Jet, JetAlgebra, JetError, UnsupportedOrderError,
                                    jet_binary, jet_eval, jet_of_function, jet_unary,
                                    multilinear_index, seed_point)
from hypokinetic.geometry import FramePoint
from hypokinetic.testfunctions import constant, monomial

finite = st.floats(-3, 3, allow_nan=False)


def _point(x):
    return FramePoint(np.asarray(x, float), np.eye(len(x)))


def test_constant_jet_has_only_value():
    j = jet_eval(constant(2, 2.5), _point([0.1, 0.4]), [0, 1, 2], 3)
    assert j.value == pytest.approx(2.5)
    assert np.all(j.coeffs[1:] == 0)


def test_square_taylor_coefficients():
    f = monomial(2, xpow=[2, 0])
    j = jet_eval(f, _point([0.3, 0.0]), [0], 2)
    got = [float(j.coefficient((k,))) for k in range(3)]
    assert got == pytest.approx([0.09, 0.6, 1.0], abs=1e-15)


def test_sine_matches_high_precision_differences():
    # sin(2 pi x1) = cos(2 pi x1 - pi/2)
    f = monomial(2, freq=[2 * np.pi, 0.0], phase=-np.pi / 2)
    x1 = 0.137
    j = jet_eval(f, _point([x1, 0.2]), [0], 3)
    mpmath.mp.dps = 30
    for k in range(4):
        oracle = mpmath.diff(lambda t: mpmath.sin(2 * mpmath.pi * t), x1, k) / math.factorial(k)
        assert float(j.coefficient((k,))) == pytest.approx(float(oracle), abs=1e-8)


def test_order_above_three_rejected():
    with pytest.raises(UnsupportedOrderError):
        jet_eval(constant(2, 1.0), _point([0.0, 0.0]), [0], 4)


def test_sin_of_variable_series():
    j = jet_of_function(lambda t: t.sin(), 0.2, 3)
    expect = [math.sin(0.2), math.cos(0.2), -math.sin(0.2) / 2, -math.cos(0.2) / 6]
    assert [float(j.coefficient((k,))) for k in range(4)] == pytest.approx(expect, abs=1e-15)


def test_binary_requires_matching_algebra():
    a = Jet.variable(JetAlgebra.standard(1, 2), 0, 1.0)
    b = Jet.variable(JetAlgebra.standard(2, 2), 0, 1.0)
    with pytest.raises(JetError):
        jet_binary("add", a, b)


def test_coefficient_count_matches_multi_indices():
    for dims in range(1, 5):
        for order in range(4):
            alg = JetAlgebra.standard(dims, order)
            assert alg.size == math.comb(dims + order, order)


def test_multilinear_index_of_nested_algebra():
    alg = JetAlgebra.nested(2, 2, 2, 2)
    assert alg.dims == 4
    assert multilinear_index(alg) == alg.index[(1, 1, 1, 1)]


@settings(max_examples=60, deadline=None)
@given(x=finite, y=finite, order=st.integers(1, 3))
def test_add_negation_is_zero(x, y, order):
    alg = JetAlgebra.standard(2, order)
    a = Jet.variable(alg, 0, x).sin() * Jet.variable(alg, 1, y).exp()
    z = jet_binary("add", a, jet_binary("mul", a, Jet.constant(alg, -1.0)))
    assert np.all(np.abs(z.coeffs) <= 1e-12 * (1 + np.abs(a.coeffs).max()))


@settings(max_examples=60, deadline=None)
@given(x=finite, order=st.integers(1, 3))
def test_multiply_by_one_is_identity(x, order):
    alg = JetAlgebra.standard(1, order)
    a = Jet.variable(alg, 0, x).cos()
    assert np.array_equal(jet_binary("mul", a, Jet.constant(alg, 1.0)).coeffs, a.coeffs)


@settings(max_examples=60, deadline=None)
@given(x=finite, y=finite)
def test_product_rule_truncation(x, y):
    # jet of a product equals product of jets truncated at the order
    alg = JetAlgebra.standard(2, 3)
    u, v = Jet.variable(alg, 0, x), Jet.variable(alg, 1, y)
    lhs = jet_unary("sin", u * v)
    mpmath.mp.dps = 30
    for idx in [(1, 0), (0, 1), (1, 1), (2, 1), (0, 3)]:
        oracle = mpmath.diff(lambda s, t: mpmath.sin(s * t), (x, y), idx)
        scale = math.factorial(idx[0]) * math.factorial(idx[1])
        assert float(lhs.coefficient(idx)) == pytest.approx(float(oracle) / scale, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.2, 3), p=st.floats(-2.5, 2.5))
def test_power_matches_series(x, p):
    j = jet_unary("pow", jet_of_function(lambda t: t, x, 3), p)
    expect = [x ** p, p * x ** (p - 1), p * (p - 1) / 2 * x ** (p - 2),
              p * (p - 1) * (p - 2) / 6 * x ** (p - 3)]
    got = [float(j.coefficient((k,))) for k in range(4)]
    assert got == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_seed_point_sets_unit_directions():
    q = seed_point(np.arange(6.0), [1, 4], 2)
    assert q.coefficient((1, 0))[1] == 1 and q.coefficient((0, 1))[4] == 1
    assert np.array_equal(q.value, np.arange(6.0))

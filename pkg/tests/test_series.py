from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings

from slowfast_escape.series import EPS, L1, X, TruncatedSeries, render

from conftest import CAP, series, x_series

x = TruncatedSeries.symbol(X, 8)
l1 = TruncatedSeries.symbol(L1, 8)
e = TruncatedSeries.symbol(EPS, 8)
one = TruncatedSeries.constant(1, 8)


def test_additive_inverse_and_cancellation():
    assert (x + (-x)).is_zero()
    assert (x - x**3) + x**3 == x
    assert (one + e) + (one - e) == 2


def test_add_takes_smaller_cap():
    a = TruncatedSeries({(5, 0, 0): 1, (1, 0, 0): 1}, 6)
    b = TruncatedSeries({(2, 0, 0): 1}, 3)
    s = a + b
    assert s.grade_cap == 3 and s == TruncatedSeries({(1, 0, 0): 1, (2, 0, 0): 1}, 3)


def test_products():
    assert x * x**3 == TruncatedSeries({(4, 0, 0): 1}, 8)
    assert (one + e) * (one - e) == one - e * e
    f = 2 * x + x**2 - x**3
    assert f.scale(-2) == -4 * x - 2 * x**2 + 2 * x**3


def test_product_truncates_above_cap():
    a = TruncatedSeries.symbol(X, 3)
    assert (a * a * a * a).is_zero()
    assert (a**3).coefficient(3) == 1


def test_derivatives():
    assert (x - x**3).diff(X) == one - 3 * x**2
    assert (3 * x**2 * l1 * e).diff(L1) == 3 * x**2 * e


def test_unknown_symbol_rejected():
    with pytest.raises(ValueError):
        x.diff("z")


def test_compose_examples():
    s = TruncatedSeries.symbol(L1, 6)
    xs = TruncatedSeries.symbol(X, 6)
    got = (s * s).scale(F(1, 2)).compose({L1: (xs**3 - xs).scale(2)})
    assert got == 2 * xs**6 - 4 * xs**4 + 2 * xs**2
    h = x - x**3 - (x + l1 - 4 * x**3 - 3 * x**2 * l1) * e + (2 * x + l1) * e**2
    assert h.compose({EPS: 0}) == x - x**3
    assert (x * l1 + l1 + 3).compose({X: 0}) == l1 + 3


def test_definite_integrals():
    xs = TruncatedSeries.symbol(X, 4)
    assert (xs**3 - xs).scale(2).integrate_x_definite(-1, 0).as_rational() == F(1, 2)
    f = 2 * xs + xs**2 - xs**3
    assert f.scale(-2).integrate_x_definite(-1, 0).as_rational() == F(5, 6)
    assert (xs**2 + l1 * e).integrate_x_definite(0, 0).is_zero()


def test_definite_integral_keeps_other_symbols():
    got = (x * l1 + e).integrate_x_definite(0, 2)
    assert got == 2 * l1 + 2 * e


def test_as_rational_refuses_symbols():
    with pytest.raises(ValueError):
        (x + 1).as_rational()


def test_rendering():
    h = x - x**3 - (x + l1 - 4 * x**3 - 3 * x**2 * l1) * e
    assert render(h) == "x - x^3 - (x + l1 - 4x^3 - 3x^2*l1)*e"
    assert render(TruncatedSeries({(0, 0, 0): F(5, 6), (0, 0, 2): F(-13, 12)}, 4)) \
        == "5/6 - (13/12)e^2"
    assert render(TruncatedSeries.zero(3)) == "0"


def test_evaluate_and_grid_agree():
    s = TruncatedSeries({(2, 1, 1): 3, (0, 2, 0): F(-1, 2), (1, 0, 2): 5}, 6)
    xv, lv = np.linspace(-1, 1, 7), np.linspace(0.5, -0.3, 7)
    direct = s.evaluate(xv, lv, 0.3)
    via_grid = np.polynomial.polynomial.polyval2d(xv, lv, s.coefficient_grid(0.3))
    np.testing.assert_allclose(direct, via_grid, rtol=1e-14)


def test_immutable_terms():
    with pytest.raises(TypeError):
        x.terms[(1, 0, 0)] = 2


# -- properties -------------------------------------------------------------------

@given(series())
def test_invariants(a):
    assert all(c != 0 for c in a.terms.values())
    assert all(sum(k) <= a.grade_cap for k in a.terms)
    assert all(isinstance(c, F) for c in a.terms.values())


@given(series(), series(), series())
@settings(max_examples=60, deadline=None)
def test_ring_axioms(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b == b + a
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c


@given(series(), series())
@settings(max_examples=60, deadline=None)
def test_product_rule(a, b):
    for sym in (X, L1, EPS):
        # one grade is lost by differentiation, so compare below the cap
        lhs = (a * b).diff(sym).truncate(CAP - 1)
        rhs = (a * b.diff(sym) + b * a.diff(sym)).truncate(CAP - 1)
        assert lhs == rhs


@given(x_series())
def test_diff_undoes_integrate(a):
    assert a.integrate_x().diff(X) == a


@given(series())
def test_identity_composition(a):
    cap = a.grade_cap
    ident = {s: TruncatedSeries.symbol(s, cap) for s in (X, L1, EPS)}
    assert a.compose(ident) == a


@given(series(), series(), series())
@settings(max_examples=40, deadline=None)
def test_truncation_consistency(a, b, c):
    for g in range(CAP):
        full = (a * b + c).truncate(g)
        direct = a.with_cap(g) * b.with_cap(g) + c.with_cap(g)
        assert full == direct

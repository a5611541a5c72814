from fractions import Fraction as F

import numpy as np
import pytest
import sympy as sp

from slowfast_escape.manifold import (DUFFING_REFERENCE_H, DUFFING_REFERENCE_K, ManifoldError,
                                      ModelError, SlowFastModel, asymmetric,
                                      build_auxiliary_system, compare_duffing_reference,
                                      duffing, reduced_field, solve_center_manifold,
                                      solve_center_manifold_to_order)
from slowfast_escape.path import full_hamiltonian
from slowfast_escape.series import EPS, L1, X, TruncatedSeries


# -- models -----------------------------------------------------------------------

def test_builtin_models_validate(duff, asym):
    assert duff.sinks == [-1, 1] and duff.saddles == [0]
    assert asym.sinks == [-1, 2] and asym.saddles == [0]
    assert asym.f_exact(F(1, 2)) == F(1, 2) * F(3, 2) * F(3, 2)


@pytest.mark.parametrize("equilibria, message", [
    ([(-1, "sink"), (F(1, 2), "saddle"), (1, "sink")], "not a root"),
    ([(-1, "saddle"), (0, "saddle"), (1, "sink")], "labelled"),
    ([(-1, "sink"), (0, "saddle")], "two sinks"),
])
def test_model_validation(equilibria, message):
    with pytest.raises(ModelError, match=message):
        SlowFastModel((0, 1, 0, -1), equilibria)


def test_series_drift_must_be_univariate():
    bad = TruncatedSeries({(1, 0, 0): 1, (3, 0, 0): -1, (1, 1, 0): 1}, 4)
    with pytest.raises(ModelError, match="univariate"):
        SlowFastModel(bad, [(-1, "sink"), (0, "saddle"), (1, "sink")])
    good = TruncatedSeries({(1, 0, 0): 1, (3, 0, 0): -1}, 4)
    assert SlowFastModel(good, [(-1, "sink"), (0, "saddle"), (1, "sink")]).degree == 3


def test_adjacency(duff, asym):
    assert duff.adjacent_saddle(1) == 0
    assert asym.adjacent_saddle(2) == 0
    with pytest.raises(ModelError):
        duff.check_adjacent(-1, 1)


# -- auxiliary system -----------------------------------------------------------------

def test_auxiliary_equations(duff, asym):
    assert build_auxiliary_system(duff).equations()[2] == "l1' = (-1 + 3x^2)*l2"
    assert build_auxiliary_system(asym).equations()[2] == "l1' = (-2 - 2x + 3x^2)*l2"


@pytest.mark.parametrize("make", [duffing, asymmetric])
def test_zero_momenta_give_deterministic_flow(make):
    m = make()
    aux = build_auxiliary_system(m)
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(-1.5, 1.5, size=(20, 2)):
        d = aux.rhs([x, 0.0, y, 0.0], 0.3)
        np.testing.assert_allclose(d, [y, 0.0, (m.f(x) - y) / 0.3, 0.0])


def test_layer_form_is_time_rescaling(duff):
    aux = build_auxiliary_system(duff)
    z = np.array([0.3, -0.2, 0.1, 0.4])
    np.testing.assert_allclose(aux.layer_rhs([*z, 0.05])[:4], 0.05 * aux.rhs(z, 0.05))


def test_jacobian_matches_finite_differences(asym):
    aux = build_auxiliary_system(asym)
    z, eps, h = np.array([0.3, -0.2, 0.1, 0.4]), 0.2, 1e-6
    num = np.column_stack([(aux.rhs(z + h * dz, eps) - aux.rhs(z - h * dz, eps)) / (2 * h)
                           for dz in np.eye(4)])
    np.testing.assert_allclose(aux.jacobian(z, eps), num, atol=1e-7)


@pytest.mark.parametrize("make", [duffing, asymmetric])
def test_hamiltonian_generates_auxiliary_system(make):
    """Canonical pairs (x, l1) and (y, e*l2) reproduce the auxiliary system exactly."""
    m = make()
    x, l1, y, l2, e = sp.symbols("x l1 y l2 e")
    f = sum(sp.Rational(c.numerator, c.denominator) * x**n for n, c in enumerate(m.f_coeffs))
    H = l1 * y + l1**2 / 2 + l2 * (f - y)
    p_y = e * l2
    rhs = [sp.diff(H, l1), -sp.diff(H, x), sp.diff(H, l2) / e, -sp.diff(H, y) / e]
    expected = [y + l1, -sp.diff(f, x) * l2, (f - y) / e, (l2 - l1) / e]
    assert all(sp.simplify(a - b) == 0 for a, b in zip(rhs, expected))
    assert p_y == e * l2
    # and numerically against the implemented Hamiltonian
    assert full_hamiltonian(m, 0.3, 0.2, -0.1, 0.5) == pytest.approx(
        float(H.subs({x: 0.3, l1: 0.2, y: -0.1, l2: 0.5})))


# -- center manifold ------------------------------------------------------------------

def test_duffing_reference_series(duff):
    cm = solve_center_manifold(duff, 5)
    for ref, s in ((DUFFING_REFERENCE_H, cm.h), (DUFFING_REFERENCE_K, cm.k)):
        for exps, c in ref.items():
            assert s.coefficient(*exps) == c, exps
    assert cm.k.coefficient(0, 1, 3) == -5


def test_reference_comparison_reports_grade_anomalies(duff):
    comp_h, comp_k = compare_duffing_reference(solve_center_manifold(duff, 5))
    assert comp_h.exact and comp_k.exact
    assert set(comp_k.beyond_grade) == {(1, 2, 2)}
    assert comp_h.unpublished == {(1, 0, 3): -5, (0, 1, 3): -2}
    assert not comp_k.unpublished


@pytest.mark.parametrize("make", [duffing, asymmetric])
def test_singular_limit(make):
    m = make()
    cm = solve_center_manifold(m, 7)
    assert cm.h.compose({EPS: 0}) == m.f_series(7)
    assert cm.k.compose({EPS: 0}) == TruncatedSeries.symbol(L1, 7)


@pytest.mark.parametrize("make", [duffing, asymmetric])
@pytest.mark.parametrize("cap", [1, 4, 9])
def test_residuals_vanish(make, cap):
    res_h, res_k = solve_center_manifold(make(), cap).residuals()
    assert res_h.is_zero() and res_k.is_zero()


@pytest.mark.parametrize("make", [duffing, asymmetric])
def test_triangularity(make):
    lo, hi = solve_center_manifold(make(), 6), solve_center_manifold(make(), 8)
    assert hi.h.truncate(6) == lo.h and hi.k.truncate(6) == lo.k


def test_no_constant_or_pure_eps_terms(asym):
    cm = solve_center_manifold(asym, 9)
    for s in (cm.h, cm.k):
        assert not [e for e in s.terms if e[0] == 0 and e[1] == 0]


def test_eps_blocks_complete_at_documented_cap(duff):
    cm = solve_center_manifold_to_order(duff, 3)
    bigger = solve_center_manifold(duff, 20)
    for n in range(4):
        assert cm.h.eps_block(n) == bigger.h.eps_block(n).with_cap(cm.grade_cap)
        assert cm.k.eps_block(n) == bigger.k.eps_block(n).with_cap(cm.grade_cap)
    with pytest.raises(ValueError):
        cm.eps_truncated(4)


def test_expansion_point_must_be_equilibrium():
    # f = (x - 1/2) - (x - 1/2)^3: bistable, but f(0) != 0
    coeffs = (F(-3, 8), F(1, 4), F(3, 2), F(-1))
    model = SlowFastModel(coeffs, [(F(-1, 2), "sink"), (F(1, 2), "saddle"), (F(3, 2), "sink")])
    with pytest.raises(ManifoldError):
        solve_center_manifold(model, 3)


def test_reduced_field_singular_limit(duff):
    rf = reduced_field(solve_center_manifold(duff, 5))
    x, l1 = TruncatedSeries.symbol(X, 5), TruncatedSeries.symbol(L1, 5)
    assert rf.x_dot.compose({EPS: 0}) == x - x**3 + l1
    assert rf.l1_dot.compose({EPS: 0}) == (3 * x**2 - 1) * l1
    assert rf.x_dot.compose({EPS: 0, L1: 0}) == x - x**3


def test_reduced_field_equilibria(duff):
    f = reduced_field(solve_center_manifold(duff, 5)).at(0.0)
    r = 1 / np.sqrt(3)
    for pt in [(-1, 0), (1, 0), (0, 0), (r, -2 / (3 * np.sqrt(3))), (-r, 2 / (3 * np.sqrt(3)))]:
        np.testing.assert_allclose(f(*pt), (0.0, 0.0), atol=1e-14)

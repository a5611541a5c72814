import math
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from slowfast_escape import path as P
from slowfast_escape.manifold import ModelError, asymmetric, duffing
from slowfast_escape.series import TruncatedSeries


# -- singular limit ---------------------------------------------------------------------

def test_singular_path_limits():
    assert P.singular_path(-50.0) == pytest.approx(-1.0)
    assert P.singular_path(50.0) == pytest.approx(0.0, abs=1e-20)
    assert P.singular_path(0.0) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)


def test_singular_path_solves_slow_flow():
    # on l1 = 2(x^3 - x) the slow flow is x' = x^3 - x
    t = np.linspace(-5, 5, 201)
    x = P.singular_path(t)
    dx = P.singular_path(t + 1e-6) - P.singular_path(t - 1e-6)
    np.testing.assert_allclose(dx / 2e-6, x**3 - x, atol=1e-8)


def test_zero_hamiltonian_curve(duff, asym):
    assert P.zero_hamiltonian_curve(duff, -1) == 0
    assert P.zero_hamiltonian_curve(duff, F(-1, 2)) == F(3, 4)
    assert P.zero_hamiltonian_curve(asym, 0) == 0
    assert P.zero_hamiltonian_curve(duff, -0.5) == pytest.approx(0.75)


def test_singular_actions(duff, asym):
    assert P.singular_action(duff, -1, 0) == F(1, 2)
    assert P.singular_action(asym, -1, 0) == F(5, 6)
    assert P.singular_action(duff, 1, 0) == F(1, 2)
    assert P.singular_action(asym, 2, 0) == F(16, 3)
    with pytest.raises(ModelError):
        P.singular_action(duff, -1, 1)


def test_full_hamiltonian_values(duff):
    assert P.full_hamiltonian(duff, -1.0, 0.0, 0.0, 0.0) == 0
    x, l1 = 0.3, -0.4
    assert P.full_hamiltonian(duff, x, l1, duff.f(x), l1) == pytest.approx(duff.f(x) * l1 + l1**2 / 2)
    assert P.full_hamiltonian(duff, 0.0, l1, 0.0, 0.7) == pytest.approx(l1**2 / 2)


# -- exact action series ------------------------------------------------------------------

def test_action_series(duff, asym):
    e = TruncatedSeries.symbol("e", 8)
    assert P.action_series(duff, 3) == F(1, 2) - e * e * F(1, 4) - e**3 * F(1, 10)
    assert P.action_series(asym, 3) == F(5, 6) - e * e * F(13, 12) - e**3 * F(19, 42)


def test_zero_energy_branch_vanishes_at_equilibria(asym):
    cm = P.solve_center_manifold_to_order(asym, 3)
    L = P.zero_energy_branch(cm, 3)
    for x0 in (-1, 0, 2):
        for n in range(4):
            block = L.eps_block(n)
            assert sum(c * F(x0) ** i for (i, j, k), c in block.terms.items()) == 0


# -- reduced heteroclinic ---------------------------------------------------------------

def test_unstable_direction_at_singular_limit(duff):
    cm = P.solve_center_manifold_to_order(duff, 2)
    v = P.unstable_direction(P._ReducedNumerics(cm, 0.0), -1.0, 0.0)
    np.testing.assert_allclose(v, [1.0, 4.0], rtol=1e-12)


@pytest.mark.parametrize("mode", ["branch", "level"])
def test_singular_path_on_zero_energy_curve(duff, mode):
    p = P.reduced_heteroclinic(duff, epsilon=0.0, mode=mode)
    assert np.max(np.abs(p.l1 - 2 * (p.x**3 - p.x))) < 1e-8
    assert p.action == pytest.approx(0.5, abs=1e-6)


def test_free_flow_at_singular_limit(duff):
    p = P.reduced_heteroclinic(duff, epsilon=0.0, mode="free")
    assert np.max(np.abs(p.l1 - 2 * (p.x**3 - p.x))) < 1e-5
    assert p.action == pytest.approx(0.5, abs=1e-6)


def test_singular_action_matches_quadrature(asym):
    assert P.reduced_heteroclinic(asym, epsilon=0.0).action == pytest.approx(5 / 6, abs=1e-6)


def test_path_invariants(asym):
    p = P.reduced_heteroclinic(asym, epsilon=0.1)
    assert np.all(np.diff(p.t) > 0)
    assert np.all(np.diff(p.x) > 0)
    assert np.all(np.diff(p.partial_action()) >= -1e-15)
    assert abs(p.x[0] - (-1)) <= 1.0001e-5 and abs(p.l1[0]) < 1e-3
    assert p.miss_distance < P.MISS_TOLERANCE
    assert p.action >= 0


def test_launch_offset_convergence(duff):
    a = P.reduced_heteroclinic(duff, epsilon=0.1, delta=1e-4).action
    b = P.reduced_heteroclinic(duff, epsilon=0.1, delta=1e-5).action
    assert abs(a - b) < 1e-6


def test_duffing_symmetry(duff):
    left = P.reduced_heteroclinic(duff, epsilon=0.1, sink=-1)
    right = P.reduced_heteroclinic(duff, epsilon=0.1, sink=1)
    assert abs(left.action - right.action) < 1e-8
    np.testing.assert_allclose(right.samples[:, 1:], -left.samples[:, 1:], atol=1e-9)


def test_time_origin_irrelevant(duff):
    p = P.reduced_heteroclinic(duff, epsilon=0.05)
    shifted = P.PathSolution(p.t + 17.0, p.x, p.l1, p.y, p.l2, p.xdot, p.ydot, p.epsilon)
    assert P.action_along_path(shifted) == pytest.approx(p.action, abs=1e-14)


def test_numerical_action_tracks_exact_series(duff):
    series = P.action_series(duff, 3)
    for eps in (0.02, 0.05, 0.1):
        exact = float(series.evaluate(0.0, 0.0, eps))
        for mode in ("branch", "level"):
            got = P.reduced_heteroclinic(duff, epsilon=eps, mode=mode).action
            assert abs(got - exact) < 5 * eps**3, (eps, mode)


def test_modes_agree_at_small_eps(asym):
    cm = P.solve_center_manifold_to_order(asym, 4)
    a = P.reduced_heteroclinic(asym, cm, 0.01, mode="branch").action
    b = P.reduced_heteroclinic(asym, cm, 0.01, mode="level").action
    assert abs(a - b) < 1e-8


def test_free_flow_misses_saddle_at_larger_eps(duff):
    with pytest.raises(P.NoConnection):
        P.reduced_heteroclinic(duff, epsilon=0.2, mode="free")


@pytest.mark.parametrize("kwargs", [dict(epsilon=0.31), dict(epsilon=-0.1),
                                    dict(epsilon=0.1, delta=2e-3), dict(epsilon=0.1, mode="x")])
def test_reduced_heteroclinic_rejects_bad_input(duff, kwargs):
    with pytest.raises(ValueError):
        P.reduced_heteroclinic(duff, **kwargs)


# -- action quadrature --------------------------------------------------------------------

def test_relaxation_path_has_zero_action(duff):
    sol = solve_ivp(lambda t, x: duff.f(x), (0, 12), [-0.2], rtol=1e-10, dense_output=True)
    t = np.linspace(0, 12, 2001)
    x = sol.sol(t)[0]
    z = np.zeros_like(t)
    p = P.PathSolution(t, x, z, duff.f(x), z, duff.f(x), np.gradient(duff.f(x), t), 0.1)
    assert P.action_along_path(p) == 0.0


def test_coarse_sampling_is_detected(duff):
    p = P.reduced_heteroclinic(duff, epsilon=0.1)
    coarse = P.PathSolution(*(a[::400] for a in (p.t, p.x, p.l1, p.y, p.l2, p.xdot, p.ydot)),
                            p.epsilon)
    with pytest.raises(P.QuadratureNotConverged):
        P.action_along_path(coarse)


def test_action_with_manifold_rebuilds_dy(duff):
    cm = P.solve_center_manifold_to_order(duff, 2)
    p = P.reduced_heteroclinic(duff, cm, 0.1)
    assert P.action_along_path(p, cm) == pytest.approx(p.action, abs=1e-12)


# -- e^2 coefficient ------------------------------------------------------------------------

def test_fit_identity():
    grid = np.array([0.02, 0.05, 0.1, 0.15, 0.2])
    fit = P.fit_eps2(grid, 0.5 - 0.3 * grid**2, F(1, 2))
    assert fit.coefficient == pytest.approx(-0.3, abs=1e-12)
    assert fit.slope == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("grid", [(0.05, 0.1, 0.2), (0.0, 0.05, 0.1, 0.2), (0.05, 0.1, 0.2, 0.25)])
def test_eps2_grid_validation(duff, grid):
    with pytest.raises(ValueError):
        P.eps2_fit(duff, eps_grid=grid)


def test_eps2_coefficients(duff, asym):
    assert P.eps2_coefficient(duff) == pytest.approx(-0.25, abs=0.02)
    assert P.eps2_coefficient(asym) == pytest.approx(-13 / 12, rel=0.05)


# -- full system --------------------------------------------------------------------------

def test_full_system_near_singular_limit(duff):
    p = P.full_system_crosscheck(duff, 1e-3)
    assert p.hamiltonian_drift < 1e-6
    assert p.extras["max_y_dev"] < 1e-4 and p.extras["max_l2_dev"] < 1e-4
    assert p.extras["start_offset"] < 1e-6
    assert abs(p.extras["mu"]) < 1e-10
    assert p.action == pytest.approx(p.extras["reduced_action"], abs=1e-8)


def test_full_system_agrees_with_reduction(asym):
    p = P.full_system_crosscheck(asym, 0.05)
    assert p.miss_distance < P.MISS_TOLERANCE
    assert p.action == pytest.approx(float(P.action_series(asym, 3).evaluate(0, 0, 0.05)),
                                     abs=1e-5)


def test_full_system_epsilon_range(duff):
    with pytest.raises(ValueError):
        P.full_system_crosscheck(duff, 0.2)


def test_full_system_ivp_conserves_energy(asym):
    # off the connection l2 grows like exp(t/e); stay on a segment where the state is O(1)
    z0 = [-0.9, 0.05, 0.0, 0.04]
    p = P.integrate_full_system(asym, 0.05, z0, (0.0, 0.25))
    assert np.abs(p.samples[:, 1:]).max() < 10
    assert p.hamiltonian_drift < 1e-6


def test_zero_momenta_relax_with_zero_action(duff):
    p = P.integrate_full_system(duff, 0.05, [-0.5, 0.0, 0.0, 0.0], (0.0, 10.0))
    assert np.all(p.l1 == 0) and np.all(p.l2 == 0)
    assert p.action == 0.0
    assert p.x[-1] == pytest.approx(-1.0, abs=1e-3)

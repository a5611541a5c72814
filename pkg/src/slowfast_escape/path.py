"""Optimal escape paths and their action.

The singular limit is exact: on the zero-energy curve ``l1 = -2 f(x)`` the action from a
sink to the saddle is ``int -2 f dx``. For ``e > 0`` the escape path lives on the slow
manifold ``y = h``, ``l2 = k``; there the flow is a one-degree-of-freedom Hamiltonian system
with conserved

    H_red(x, l1) = l1 h + l1^2 / 2 + k (f - h) = l1 * G(x, l1),

so the heteroclinic is the branch ``G = 0`` leaving the sink. Its action is the momentum
line integral ``int l1 dx + e int l2 dy`` (the momentum conjugate to ``y`` is ``e l2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import schur
from scipy.integrate import cumulative_trapezoid, simpson, solve_bvp, solve_ivp

from .manifold import (CenterManifold, ManifoldError, SlowFastModel, build_auxiliary_system,
                       reduced_field, solve_center_manifold_to_order)
from .series import EPS, L1, X, TruncatedSeries

P = np.polynomial.polynomial

DEFAULT_EPS_ORDER = 2
DEFAULT_DELTA = 1e-5
MISS_TOLERANCE = 1e-3


class NoConnection(RuntimeError):
    """Shooting failed to connect the sink to the saddle."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message if last_state is None else f"{message}; last state {last_state}")
        self.last_state = last_state


class QuadratureNotConverged(RuntimeError):
    """Action quadrature changed too much when the sample spacing was halved."""


@dataclass
class PathSolution:
    """Sampled optimal path (uniform in ``t``) with derivatives at the samples."""

    t: np.ndarray
    x: np.ndarray
    l1: np.ndarray
    y: np.ndarray
    l2: np.ndarray
    xdot: np.ndarray
    ydot: np.ndarray
    epsilon: float
    action: float = float("nan")
    hamiltonian_drift: float = float("nan")
    miss_distance: float = float("nan")
    sink: float = -1.0
    saddle: float = 0.0
    kind: str = "reduced"
    extras: dict = field(default_factory=dict)

    @property
    def samples(self) -> np.ndarray:
        """Rows of (t, x, l1, y, l2)."""
        return np.column_stack([self.t, self.x, self.l1, self.y, self.l2])

    def partial_action(self) -> np.ndarray:
        integrand = self.l1 * self.xdot + self.epsilon * self.l2 * self.ydot
        return cumulative_trapezoid(integrand, self.t, initial=0.0)


# -- singular limit -----------------------------------------------------------

def singular_path(t):
    """Duffing escape path ``x(t) = -(1 + exp(2t))^(-1/2)`` with the constant A = -1."""
    t = np.asarray(t, dtype=float)
    # exp overflow for large t just drives x to -0.0
    with np.errstate(over="ignore"):
        out = -1.0 / np.sqrt(1.0 + np.exp(2.0 * t))
    return out if out.ndim else float(out)


def zero_hamiltonian_curve(model: SlowFastModel, x):
    """Momentum on the zero-energy curve of the singular system, ``l1 = -2 f(x)``."""
    if isinstance(x, (int, Fraction)):
        return -2 * model.f_exact(x)
    return -2.0 * model.f(x)


def singular_action(model: SlowFastModel, from_sink, to_saddle) -> Fraction:
    model.check_adjacent(from_sink, to_saddle)
    integrand = model.f_series(model.degree).scale(-2)
    return integrand.integrate_x_definite(from_sink, to_saddle).as_rational()


def full_hamiltonian(model: SlowFastModel, x, l1, y, l2):
    """``H = l1 y + l1^2/2 + l2 (f(x) - y)``; its canonical equations with the pairs
    (x, l1) and (y, e*l2) are exactly the auxiliary system."""
    return l1 * y + 0.5 * l1 * l1 + l2 * (model.f(x) - y)


# -- reduced Hamiltonian and exact action series ---------------------------------

def _energy_factor(cm: CenterManifold) -> TruncatedSeries:
    """``G`` with ``H_red = l1 * G``, computed exactly from the (polynomial) h and k."""
    cap = 3 * cm.grade_cap + 4
    h, k = cm.h.with_cap(cap), cm.k.with_cap(cap)
    l1 = TruncatedSeries.symbol(L1, cap)
    f = cm.model.f_series(cap)
    hred = l1 * h + (l1 * l1).scale(Fraction(1, 2)) + k * (f - h)
    bad = [e for e in hred.terms if e[1] == 0]
    if bad:
        raise ManifoldError(f"reduced Hamiltonian does not vanish on l1 = 0 (terms {bad[:3]})")
    return TruncatedSeries({(i, j - 1, kk): c for (i, j, kk), c in hred.terms.items()}, cap)


def zero_energy_branch(cm: CenterManifold, order: int) -> TruncatedSeries:
    """Momentum ``l1 = L(x, e)`` on the zero-energy branch, expanded through ``e^order``.

    At ``e^0`` ``G = f + l1/2``, so each correction is ``L_n = -2 [G(x, L_<n)]_{e^n}``.
    The result is free of ``l1`` and vanishes at every equilibrium.
    """
    G = _energy_factor(cm)
    cap = G.grade_cap + cm.model.degree * (order + 2) * 4
    G = G.with_cap(cap)
    eps = TruncatedSeries.symbol(EPS, cap)
    L = cm.model.f_series(cap).scale(-2)
    for n in range(1, order + 1):
        resid = G.compose({L1: L}).eps_truncate(n)
        L = L + (resid.eps_block(n) * eps ** n).scale(-2)
    return L.eps_truncate(order)


def action_series(model: SlowFastModel, order: int = 3, sink=None) -> TruncatedSeries:
    """Exact e-expansion of the escape action through ``e^order``.

    The integrand ``L + e k dh/dx`` along the zero-energy branch is integrated exactly
    from the sink to the saddle.
    """
    sink = Fraction(model.sinks[0] if sink is None else sink)
    saddle = model.adjacent_saddle(sink)
    cm = solve_center_manifold_to_order(model, order + 1)
    L = zero_energy_branch(cm, order)
    cap = L.grade_cap
    h = cm.h.with_cap(cap).compose({L1: L})
    k = cm.k.with_cap(cap).compose({L1: L})
    integrand = (L + TruncatedSeries.symbol(EPS, cap) * k * h.diff(X)).eps_truncate(order)
    if any(e[1] for e in integrand.terms):
        raise ManifoldError("action integrand still depends on l1")
    return integrand.integrate_x_definite(sink, saddle)


# -- numerics on the reduced system ------------------------------------------------

class _ReducedNumerics:
    def __init__(self, cm: CenterManifold, epsilon: float):
        self.cm = cm
        self.epsilon = epsilon
        self.field = reduced_field(cm).at(epsilon)
        g = _energy_factor(cm).coefficient_grid(epsilon)
        self.G, self.G_x, self.G_l = g, P.polyder(g, axis=0), P.polyder(g, axis=1)
        self._branch = None

    def energy(self, x, l1):
        return P.polyval2d(x, l1, self.G)

    def solve_l1(self, x, guess, tol=1e-14, maxit=50):
        lam = guess
        for _ in range(maxit):
            step = P.polyval2d(x, lam, self.G) / P.polyval2d(x, lam, self.G_l)
            lam -= step
            if abs(step) < tol:
                return lam
        raise NoConnection(f"zero-energy branch not found near x = {x}", (x, lam))

    def use_branch(self, branch: TruncatedSeries):
        c = branch.coefficient_grid(self.epsilon)[:, 0]
        self._branch = (c, P.polyder(c))

    def branch(self, x):
        c, dc = self._branch
        return P.polyval(x, c), P.polyval(x, dc)

    def branch_rhs(self, t, z):
        lam, dlam = self.branch(z[0])
        xd = self.field.h(z[0], lam) + lam
        return np.array([xd, dlam * xd])

    def level_rhs(self, t, z):
        x, lam = z[0], z[1]
        xd = self.field.h(x, lam) + lam
        ld = -P.polyval2d(x, lam, self.G_x) / P.polyval2d(x, lam, self.G_l) * xd
        return np.array([xd, ld])

    def free_rhs(self, t, z):
        return np.array(self.field(z[0], z[1]))


def _cm_for_numerics(model: SlowFastModel, cm: CenterManifold | None) -> CenterManifold:
    if cm is None:
        return solve_center_manifold_to_order(model, DEFAULT_EPS_ORDER)
    order = cm.complete_eps_order
    if order < 0:
        raise ValueError(f"grade_cap {cm.grade_cap} leaves even the e^0 block incomplete")
    return cm.eps_truncated(order)


def unstable_direction(num: _ReducedNumerics, sink: float, saddle: float) -> np.ndarray:
    J = num.field.jacobian(sink, 0.0)
    w, v = np.linalg.eig(J)
    vec = np.real(v[:, int(np.argmax(w.real))])
    if vec[0] == 0:
        raise NoConnection("unstable direction has no x component", (sink, 0.0))
    return vec / vec[0] * math.copysign(1.0, saddle - sink)


MODES = ("branch", "level", "free")


def reduced_heteroclinic(model: SlowFastModel, cm: CenterManifold | None = None,
                         epsilon: float | None = None, delta: float = DEFAULT_DELTA,
                         sink=None, n_samples: int = 4001, rtol: float = 1e-10,
                         mode: str = "branch", t_max: float = 200.0,
                         branch: TruncatedSeries | None = None) -> PathSolution:
    """Escape path of the reduced flow from a sink to its saddle.

    The launch point is ``x_sink + delta`` along the unstable eigenvector of the reduced
    Jacobian. The truncated e-series of the manifold is asymptotic, so its flow only
    conserves ``H_red`` to truncation order and the free flow drifts off the connection
    once e reaches about 0.1. ``mode`` picks how the momentum is held on the connection:

    ``branch``
        ``l1 = L(x, e)``, the zero-energy branch expanded to the manifold's e order.
        A polynomial in ``x``, so it cannot fold.
    ``level``
        ``l1`` follows the level set ``G(x, l1) = 0`` of the truncated reduced energy.
    ``free``
        the truncated reduced field as is.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    epsilon = model.epsilon if epsilon is None else float(epsilon)
    if not 0.0 <= epsilon <= 0.3:
        raise ValueError(f"epsilon must lie in [0, 0.3], got {epsilon}")
    if not 0.0 < delta <= 1e-3:
        raise ValueError(f"delta must lie in (0, 1e-3], got {delta}")
    cm = _cm_for_numerics(model, cm)
    sink = Fraction(model.sinks[0] if sink is None else sink)
    saddle = model.adjacent_saddle(sink)
    xs, xk = float(sink), float(saddle)
    num = _ReducedNumerics(cm, epsilon)
    v = unstable_direction(num, xs, xk)
    x0 = xs + delta * math.copysign(1.0, xk - xs)
    l0 = delta * abs(v[1]) * math.copysign(1.0, v[1] * (xk - xs))
    if mode == "branch":
        num.use_branch(branch if branch is not None
                       else zero_energy_branch(cm, cm.complete_eps_order))
        l0 = num.branch(x0)[0]
        rhs = num.branch_rhs
    elif mode == "level":
        l0 = num.solve_l1(x0, l0)
        rhs = num.level_rhs
    else:
        rhs = num.free_rhs

    lo, hi = min(xs, xk) - 0.5, max(xs, xk) + 0.5

    def leave_box(t, z):
        return min(z[0] - lo, hi - z[0], 2.0 - abs(z[1]))
    leave_box.terminal = True

    def arrived(t, z):
        return math.hypot(z[0] - xk, z[1]) - 1e-10
    arrived.terminal = True

    sgn = math.copysign(1.0, xk - xs)

    def turned(t, z):
        # x stops advancing toward the saddle: the flow missed and turns back
        return sgn * rhs(t, z)[0]
    turned.terminal = True
    turned.direction = -1.0

    def crossed(t, z):
        return z[0] - xk
    crossed.terminal = True

    sol = solve_ivp(rhs, (0.0, t_max), [x0, l0], method="DOP853", rtol=rtol, atol=1e-13,
                    events=[leave_box, arrived, turned, crossed], dense_output=True)
    if sol.status == -1:
        raise NoConnection(f"integration failed: {sol.message}", sol.y[:, -1])
    if sol.t_events[0].size:
        raise NoConnection("trajectory left the bounding box before reaching the saddle",
                           sol.y[:, -1])
    t_end = sol.t[-1]
    t = np.linspace(0.0, t_end, n_samples)
    x, l1 = sol.sol(t)
    if mode == "branch":
        l1 = num.branch(x)[0]
    miss = float(np.min(np.hypot(x - xk, l1)))
    if miss > MISS_TOLERANCE:
        raise NoConnection(f"closest approach {miss:.3e} to the saddle exceeds {MISS_TOLERANCE}",
                           (x[-1], l1[-1]))
    xdot, l1dot = np.array([rhs(0.0, z) for z in zip(x, l1)]).T
    f = num.field
    y, l2 = f.h(x, l1), f.k(x, l1)
    hx, hl = f.h_grad(x, l1)
    ydot = hx * xdot + hl * l1dot
    path = PathSolution(t, x, l1, y, l2, xdot, ydot, epsilon, miss_distance=miss,
                        sink=xs, saddle=xk, kind="reduced",
                        extras={"unstable_vector": v, "eps_order": cm.complete_eps_order,
                                "l1dot": l1dot, "mode": mode})
    path.hamiltonian_drift = float(np.max(np.abs(full_hamiltonian(model, x, l1, y, l2))))
    path.action = action_along_path(path)
    return path


def action_along_path(path: PathSolution, cm: CenterManifold | None = None,
                      model: SlowFastModel | None = None, tol: float = 1e-6) -> float:
    """``R = int l1 dx + e int l2 dy`` by composite Simpson over the uniform samples.

    If ``cm`` is given, ``dy`` is rebuilt from the differential of ``h`` along the path;
    otherwise the stored ``ydot`` is used. The result is cross-checked against the same rule
    on every other sample.
    """
    ydot = path.ydot
    if cm is not None and path.kind == "reduced":
        f = reduced_field(_cm_for_numerics(model or cm.model, cm)).at(path.epsilon)
        hx, hl = f.h_grad(path.x, path.l1)
        ydot = hx * path.xdot + hl * path.extras.get("l1dot", np.gradient(path.l1, path.t))
    integrand = path.l1 * path.xdot + path.epsilon * path.l2 * ydot
    full = simpson(integrand, x=path.t)
    half = simpson(integrand[::2], x=path.t[::2])
    if abs(full - half) > tol:
        raise QuadratureNotConverged(f"action {full!r} vs {half!r} on half the samples")
    return float(max(full, 0.0) if abs(full) < 1e-14 else full)


@dataclass
class Eps2Fit:
    coefficient: float
    slope: float
    eps: np.ndarray
    actions: np.ndarray
    singular: float


def fit_eps2(eps_grid, actions, singular_value) -> Eps2Fit:
    """Least-squares fit of ``(R - R0)/e^2 = c + d e``; ``c`` is the e^2 coefficient."""
    e = np.asarray(eps_grid, dtype=float)
    r = np.asarray(actions, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two points")
    A = np.column_stack([np.ones_like(e), e])
    (c, d), *_ = np.linalg.lstsq(A, (r - float(singular_value)) / e**2, rcond=None)
    return Eps2Fit(float(c), float(d), e, r, float(singular_value))


def eps2_fit(model: SlowFastModel, cm: CenterManifold | None = None,
             eps_grid=(0.02, 0.05, 0.1, 0.15, 0.2), delta: float = DEFAULT_DELTA,
             sink=None) -> Eps2Fit:
    grid = [float(e) for e in eps_grid]
    if len(grid) < 4 or min(grid) <= 0 or max(grid) > 0.2:
        raise ValueError("eps_grid needs at least 4 points in (0, 0.2]")
    cm = _cm_for_numerics(model, cm)
    sink = Fraction(model.sinks[0] if sink is None else sink)
    r0 = singular_action(model, sink, model.adjacent_saddle(sink))
    branch = zero_energy_branch(cm, cm.complete_eps_order)
    actions = [reduced_heteroclinic(model, cm, e, delta, sink=sink, branch=branch).action
               for e in grid]
    return fit_eps2(grid, actions, r0)


def eps2_coefficient(model: SlowFastModel, cm: CenterManifold | None = None,
                     eps_grid=(0.02, 0.05, 0.1, 0.15, 0.2), **kwargs) -> float:
    return eps2_fit(model, cm, eps_grid, **kwargs).coefficient


# -- full four-dimensional system ----------------------------------------------

def integrate_full_system(model: SlowFastModel, epsilon: float, z0, t_span, rtol: float = 1e-10,
                          method: str = "DOP853", n_samples: int = 2001) -> PathSolution:
    """Plain initial-value integration of the auxiliary system (x, l1, y, l2)."""
    aux = build_auxiliary_system(model)
    extra = {"jac": lambda t, z: aux.jacobian(z, epsilon)} if method in ("Radau", "BDF", "LSODA") else {}
    sol = solve_ivp(lambda t, z: aux.rhs(z, epsilon), t_span, z0, method=method, rtol=rtol,
                    atol=1e-13, dense_output=True, **extra)
    if sol.status == -1:
        raise NoConnection(f"integration failed: {sol.message}", sol.y[:, -1])
    t = np.linspace(t_span[0], t_span[1], n_samples)
    x, l1, y, l2 = sol.sol(t)
    d = np.array([aux.rhs(z, epsilon) for z in zip(x, l1, y, l2)]).T
    path = PathSolution(t, x, l1, y, l2, d[0], d[2], epsilon, kind="full-ivp")
    H = full_hamiltonian(model, x, l1, y, l2)
    path.hamiltonian_drift = float(np.max(np.abs(H - H[0])))
    path.action = float(simpson(l1 * d[0] + epsilon * l2 * d[2], x=t))
    return path


def _hamiltonian_gradient(model: SlowFastModel, z):
    x, l1, y, l2 = z
    return np.array([l2 * model.fprime(x), y + l1, l1 - l2, model.f(x) - y])


def _spectral_projector(J: np.ndarray, stable: bool) -> np.ndarray:
    """Rows spanning the left (un)stable invariant subspace of ``J``.

    ``z`` lies in the unstable subspace of ``J`` iff it is annihilated by these rows when
    ``stable=True`` (and vice versa). A sorted real Schur form keeps complex pairs real.
    """
    T, Z, dim = schur(J.T, output="real", sort="lhp" if stable else "rhp")
    return Z[:, :dim].T


def full_system_crosscheck(model: SlowFastModel, epsilon: float, delta: float = DEFAULT_DELTA,
                           cm: CenterManifold | None = None, sink=None, tol: float = 1e-9,
                           n_samples: int = 4001, max_nodes: int = 200000) -> PathSolution:
    """Escape path of the full 4-D auxiliary system, compared with the manifold graph.

    Forward shooting is hopeless here because the ``l2`` direction repels at rate ``1/e``;
    the connection is solved as a boundary-value problem instead. The left end lies on
    the unstable subspace of the sink with ``x = x_sink + delta``, the right end on the
    stable subspace of the saddle. A multiplier ``mu`` on ``grad H`` unfolds the energy
    degeneracy and must come out zero. The reduced path supplies the initial guess.
    """
    epsilon = float(epsilon)
    if not 0.0 < epsilon <= 0.1:
        raise ValueError(f"epsilon must lie in (0, 0.1], got {epsilon}")
    cm = _cm_for_numerics(model, cm)
    guess = reduced_heteroclinic(model, cm, epsilon, delta, sink=sink, n_samples=801)
    aux = build_auxiliary_system(model)
    xs, xk = guess.sink, guess.saddle
    z_sink = np.array([xs, 0.0, 0.0, 0.0])
    z_saddle = np.array([xk, 0.0, 0.0, 0.0])
    left = _spectral_projector(aux.jacobian(z_sink, epsilon), stable=True)
    right = _spectral_projector(aux.jacobian(z_saddle, epsilon), stable=False)
    if left.shape[0] != 2 or right.shape[0] != 2:
        raise NoConnection("equilibria do not have two-dimensional (un)stable subspaces")
    x_launch = guess.x[0]

    def fun_vec(t, Z, p):
        x, l1, y, l2 = Z
        fx, fpx = model.f(x), model.fprime(x)
        base = np.vstack([y + l1, -fpx * l2, (fx - y) / epsilon, (l2 - l1) / epsilon])
        grad = np.vstack([l2 * fpx, y + l1, l1 - l2, fx - y])
        return base + p[0] * grad

    def bc(za, zb, p):
        return np.concatenate([left @ (za - z_sink), [za[0] - x_launch], right @ (zb - z_saddle)])

    Z0 = np.vstack([guess.x, guess.l1, guess.y, guess.l2])
    sol = solve_bvp(fun_vec, bc, guess.t, Z0, p=[0.0], tol=tol, max_nodes=max_nodes)
    if not sol.success:
        raise NoConnection(f"boundary-value solve failed: {sol.message}", sol.y[:, -1])
    t = np.linspace(guess.t[0], guess.t[-1], n_samples)
    x, l1, y, l2 = sol.sol(t)
    d = fun_vec(t, np.vstack([x, l1, y, l2]), sol.p)
    num = reduced_field(cm).at(epsilon)
    path = PathSolution(t, x, l1, y, l2, d[0], d[2], epsilon, sink=xs, saddle=xk, kind="full")
    path.miss_distance = float(np.linalg.norm(sol.y[:, -1] - z_saddle))
    path.hamiltonian_drift = float(np.max(np.abs(full_hamiltonian(model, x, l1, y, l2))))
    path.extras = {
        "mu": float(sol.p[0]),
        "max_y_dev": float(np.max(np.abs(y - num.h(x, l1)))),
        "max_l2_dev": float(np.max(np.abs(l2 - num.k(x, l1)))),
        "reduced_action": guess.action,
        "nodes": int(sol.x.size),
        "start_offset": float(np.hypot(y[0] - num.h(x[0], l1[0]), l2[0] - num.k(x[0], l1[0]))),
    }
    path.action = action_along_path(path)
    return path

"""Slow-fast models, their auxiliary (optimal-fluctuation) system and the center manifold.

Models have the form ``x' = y + eta(t)``, ``eps * y' = f(x) - y`` with ``f`` a polynomial
in ``x`` with rational coefficients and ``<eta(t) eta(s)> = 2 D delta(t - s)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .series import EPS, L1, X, TruncatedSeries, render

SINK = "sink"
SADDLE = "saddle"


class ModelError(ValueError):
    """A model fails validation (bad drift, wrong equilibria or labels)."""


class ManifoldError(RuntimeError):
    """The center-manifold conditions could not be satisfied; an internal consistency failure."""


def _poly_eval(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _poly_deriv(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return tuple(Fraction(n) * c for n, c in enumerate(coeffs))[1:] or (Fraction(0),)


def _to_coeffs(f) -> tuple[Fraction, ...]:
    if isinstance(f, TruncatedSeries):
        coeffs: dict[int, Fraction] = {}
        for (i, j, k), c in f.terms.items():
            if j or k:
                raise ModelError(f"fast drift must be univariate in x, got term with l1^{j} e^{k}")
            coeffs[i] = c
        deg = max(coeffs, default=0)
        out = [coeffs.get(n, Fraction(0)) for n in range(deg + 1)]
    else:
        try:
            out = [Fraction(c) for c in f]
        except (TypeError, ValueError) as exc:
            raise ModelError(f"fast drift coefficients must be exact rationals: {exc}") from None
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class SlowFastModel:
    """Bistable slow-fast system with polynomial fast drift.

    ``f_coeffs`` are ascending coefficients of ``f``; ``equilibria`` pairs each root of ``f``
    used by the escape problem with its stability label.
    """

    f_coeffs: tuple[Fraction, ...]
    equilibria: tuple[tuple[Fraction, str], ...]
    epsilon: float = 0.1
    noise_D: float = 0.05
    name: str = "custom"

    def __init__(self, f, equilibria: Iterable, epsilon: float = 0.1, noise_D: float = 0.05,
                 name: str = "custom"):
        object.__setattr__(self, "f_coeffs", _to_coeffs(f))
        eq = tuple((Fraction(x), str(kind)) for x, kind in equilibria)
        object.__setattr__(self, "equilibria", tuple(sorted(eq)))
        object.__setattr__(self, "epsilon", float(epsilon))
        object.__setattr__(self, "noise_D", float(noise_D))
        object.__setattr__(self, "name", name)
        self._validate()

    def _validate(self) -> None:
        if len(self.f_coeffs) < 2:
            raise ModelError("fast drift must be a non-constant polynomial")
        if not self.epsilon > 0:
            raise ModelError(f"epsilon must be positive, got {self.epsilon}")
        if not self.noise_D >= 0:
            raise ModelError(f"noise intensity D must be nonnegative, got {self.noise_D}")
        fp = self.fprime_coeffs
        for x, kind in self.equilibria:
            if _poly_eval(self.f_coeffs, x) != 0:
                raise ModelError(f"x* = {x} is not a root of f")
            slope = _poly_eval(fp, x)
            expected = SINK if slope < 0 else SADDLE if slope > 0 else None
            if expected is None:
                raise ModelError(f"equilibrium x* = {x} is degenerate (f'(x*) = 0)")
            if kind != expected:
                raise ModelError(f"equilibrium x* = {x} labelled {kind!r} but f'(x*) = {slope}"
                                 f" makes it a {expected}")
        kinds = [k for _, k in self.equilibria]
        ok = any(kinds[n:n + 3] == [SINK, SADDLE, SINK] for n in range(len(kinds) - 2))
        if not ok:
            raise ModelError("need two sinks separated by a saddle")

    # -- derived quantities -----------------------------------------------

    @property
    def degree(self) -> int:
        return len(self.f_coeffs) - 1

    @property
    def fprime_coeffs(self) -> tuple[Fraction, ...]:
        return _poly_deriv(self.f_coeffs)

    @property
    def sinks(self) -> list[Fraction]:
        return [x for x, k in self.equilibria if k == SINK]

    @property
    def saddles(self) -> list[Fraction]:
        return [x for x, k in self.equilibria if k == SADDLE]

    def f_exact(self, x) -> Fraction:
        return _poly_eval(self.f_coeffs, Fraction(x))

    def fprime_exact(self, x) -> Fraction:
        return _poly_eval(self.fprime_coeffs, Fraction(x))

    def f(self, x):
        return np.polynomial.polynomial.polyval(x, [float(c) for c in self.f_coeffs])

    def fprime(self, x):
        return np.polynomial.polynomial.polyval(x, [float(c) for c in self.fprime_coeffs])

    def f_series(self, grade_cap: int) -> TruncatedSeries:
        return TruncatedSeries.from_univariate(self.f_coeffs, X, grade_cap)

    def fprime_series(self, grade_cap: int) -> TruncatedSeries:
        return TruncatedSeries.from_univariate(self.fprime_coeffs, X, grade_cap)

    def adjacent_saddle(self, sink) -> Fraction:
        """Saddle next to ``sink`` (the one the escape must cross)."""
        sink = Fraction(sink)
        xs = [x for x, _ in self.equilibria]
        if (sink, SINK) not in self.equilibria:
            raise ModelError(f"{sink} is not a sink of the model")
        n = xs.index(sink)
        for m in (n + 1, n - 1):
            if 0 <= m < len(xs) and self.equilibria[m][1] == SADDLE:
                return xs[m]
        raise ModelError(f"sink {sink} has no adjacent saddle")

    def check_adjacent(self, sink, saddle) -> None:
        sink, saddle = Fraction(sink), Fraction(saddle)
        xs = [x for x, _ in self.equilibria]
        if (sink, SINK) not in self.equilibria or (saddle, SADDLE) not in self.equilibria:
            raise ModelError(f"({sink}, {saddle}) is not a (sink, saddle) pair of the model")
        if abs(xs.index(sink) - xs.index(saddle)) != 1:
            raise ModelError(f"sink {sink} and saddle {saddle} are not adjacent")

    def with_params(self, epsilon: float | None = None, noise_D: float | None = None) -> "SlowFastModel":
        return SlowFastModel(self.f_coeffs, self.equilibria,
                             self.epsilon if epsilon is None else epsilon,
                             self.noise_D if noise_D is None else noise_D, self.name)


def duffing(epsilon: float = 0.1, noise_D: float = 0.05) -> SlowFastModel:
    """Damped Duffing oscillator, ``f = x - x^3``."""
    return SlowFastModel((0, 1, 0, -1), [(-1, SINK), (0, SADDLE), (1, SINK)],
                         epsilon, noise_D, name="duffing")


def asymmetric(epsilon: float = 0.1, noise_D: float = 0.05) -> SlowFastModel:
    """Duffing-like oscillator with broken symmetry, ``f = x (1 + x)(2 - x)``."""
    return SlowFastModel((0, 2, 1, -1), [(-1, SINK), (0, SADDLE), (2, SINK)],
                         epsilon, noise_D, name="asymmetric")


BUILTIN_MODELS = {"duffing": duffing, "asymmetric": asymmetric}


# -- auxiliary system ---------------------------------------------------------

@dataclass(frozen=True)
class AuxiliarySystem:
    """Variational system for the state (x, l1, y, l2) in slow time::

        x'       = y + l1
        eps y'   = f(x) - y
        l1'      = -f'(x) l2
        eps l2'  = l2 - l1

    The layer form uses fast time ``tau = t / eps`` and carries ``eps`` as a fifth state
    with ``eps' = 0``.
    """

    model: SlowFastModel
    f: TruncatedSeries = field(repr=False)
    minus_fprime: TruncatedSeries = field(repr=False)

    def rhs(self, z, epsilon: float) -> np.ndarray:
        x, l1, y, l2 = z
        return np.array([y + l1,
                         -self.model.fprime(x) * l2,
                         (self.model.f(x) - y) / epsilon,
                         (l2 - l1) / epsilon])

    def layer_rhs(self, w) -> np.ndarray:
        x, l1, y, l2, eps = w
        return np.array([eps * (y + l1), -eps * self.model.fprime(x) * l2,
                         self.model.f(x) - y, l2 - l1, 0.0])

    def jacobian(self, z, epsilon: float) -> np.ndarray:
        x, l1, y, l2 = z
        m = self.model
        fpp = np.polynomial.polynomial.polyval(x, [float(c) for c in _poly_deriv(m.fprime_coeffs)])
        return np.array([
            [0.0, 1.0, 1.0, 0.0],
            [-fpp * l2, 0.0, 0.0, -m.fprime(x)],
            [m.fprime(x) / epsilon, 0.0, -1.0 / epsilon, 0.0],
            [0.0, -1.0 / epsilon, 0.0, 1.0 / epsilon],
        ])

    def equations(self) -> list[str]:
        return [f"x' = y + l1",
                f"eps*y' = {render(self.f)} - y",
                f"l1' = ({render(self.minus_fprime)})*l2",
                "eps*l2' = l2 - l1"]


def build_auxiliary_system(model: SlowFastModel) -> AuxiliarySystem:
    if not isinstance(model, SlowFastModel):
        raise ModelError("expected a SlowFastModel")
    cap = max(model.degree, 1)
    return AuxiliarySystem(model, model.f_series(cap), -model.fprime_series(cap))


# -- center manifold ----------------------------------------------------------

@dataclass(frozen=True)
class CenterManifold:
    """Graph ``y = h(x, l1, e)``, ``l2 = k(x, l1, e)`` of the slow manifold, exact through ``grade_cap``."""

    h: TruncatedSeries
    k: TruncatedSeries
    grade_cap: int
    model: SlowFastModel = field(repr=False)

    @property
    def complete_eps_order(self) -> int:
        """Largest n such that every e^m block with m <= n is free of truncation."""
        return self.grade_cap // self.model.degree - 1

    def eps_truncated(self, order: int) -> "CenterManifold":
        if order > self.complete_eps_order:
            raise ValueError(f"e^{order} blocks are incomplete at grade_cap {self.grade_cap}; "
                             f"need grade_cap >= {self.model.degree * (order + 1)}")
        return CenterManifold(self.h.eps_truncate(order), self.k.eps_truncate(order),
                              self.grade_cap, self.model)

    def residuals(self) -> tuple[TruncatedSeries, TruncatedSeries]:
        return _cm_residuals(self.model, self.h, self.k, self.grade_cap)


def _cm_residuals(model: SlowFastModel, h: TruncatedSeries, k: TruncatedSeries, cap: int):
    e = TruncatedSeries.symbol(EPS, cap)
    l1 = TruncatedSeries.symbol(L1, cap)
    f = model.f_series(cap)
    fp = model.fprime_series(cap)
    x_dot = e * (h + l1)
    l1_dot = -(e * fp * k)
    res_h = h.diff(X) * x_dot + h.diff(L1) * l1_dot - (f - h)
    res_k = k.diff(X) * x_dot + k.diff(L1) * l1_dot - (k - l1)
    return res_h, res_k


def solve_center_manifold(model: SlowFastModel, grade_cap: int) -> CenterManifold:
    """Solve the center-manifold conditions grade by grade.

    With ``x' = e (h + l1)`` and ``l1' = -e f'(x) k`` the conditions read
    ``h = f - (h_x x' + h_l1 l1')`` and ``k = l1 + (k_x x' + k_l1 l1')``. The bracketed
    terms carry a factor ``e``, so the grade-g part of each right-hand side only involves
    grades below g and every grade is an explicit (unit-diagonal) update.
    """
    if grade_cap < 1:
        raise ValueError("grade_cap must be >= 1")
    if model.f_exact(0) != 0:
        raise ManifoldError("the expansion point x = 0 must be an equilibrium (f(0) = 0)")
    cap = grade_cap
    e = TruncatedSeries.symbol(EPS, cap)
    l1 = TruncatedSeries.symbol(L1, cap)
    f = model.f_series(cap)
    fp = model.fprime_series(cap)
    h = TruncatedSeries.zero(cap)
    k = TruncatedSeries.zero(cap)
    for g in range(cap + 1):
        hg, kg = h.with_cap(g), k.with_cap(g)
        x_dot = e.with_cap(g) * (hg + l1.with_cap(g))
        l1_dot = -(e.with_cap(g) * fp.with_cap(g) * kg)
        rhs_h = f.with_cap(g) - (hg.diff(X) * x_dot + hg.diff(L1) * l1_dot)
        rhs_k = l1.with_cap(g) + (kg.diff(X) * x_dot + kg.diff(L1) * l1_dot)
        h = h + rhs_h.homogeneous(g).with_cap(cap)
        k = k + rhs_k.homogeneous(g).with_cap(cap)
    for name, s in (("h", h), ("k", k)):
        pure = {exps: c for exps, c in s.terms.items() if exps[0] == 0 and exps[1] == 0}
        if pure:
            raise ManifoldError(f"{name} has constant or pure-e terms {pure}; manifold not tangent")
    res_h, res_k = _cm_residuals(model, h, k, cap)
    if not (res_h.is_zero() and res_k.is_zero()):
        raise ManifoldError(f"nonzero residual: h -> {res_h}, k -> {res_k}")
    return CenterManifold(h, k, cap, model)


def solve_center_manifold_to_order(model: SlowFastModel, eps_order: int) -> CenterManifold:
    """Center manifold with every e^n block complete for ``n <= eps_order``."""
    cm = solve_center_manifold(model, model.degree * (eps_order + 1))
    return cm.eps_truncated(eps_order)


# -- reduced field ------------------------------------------------------------

@dataclass(frozen=True)
class ReducedField:
    """Slow flow on the manifold: ``x' = h + l1``, ``l1' = -f'(x) k``."""

    x_dot: TruncatedSeries
    l1_dot: TruncatedSeries
    cm: CenterManifold = field(repr=False)

    def at(self, epsilon: float) -> "NumericField":
        return NumericField(self, float(epsilon))


class NumericField:
    """Float evaluation of a reduced field at fixed e, using 2-D coefficient grids."""

    def __init__(self, field: ReducedField, epsilon: float):
        P = np.polynomial.polynomial
        self.epsilon = epsilon
        self._fx = field.x_dot.coefficient_grid(epsilon)
        self._fl = field.l1_dot.coefficient_grid(epsilon)
        self._h = field.cm.h.coefficient_grid(epsilon)
        self._k = field.cm.k.coefficient_grid(epsilon)
        self._h_x, self._h_l = P.polyder(self._h, axis=0), P.polyder(self._h, axis=1)
        self._fx_x, self._fx_l = P.polyder(self._fx, axis=0), P.polyder(self._fx, axis=1)
        self._fl_x, self._fl_l = P.polyder(self._fl, axis=0), P.polyder(self._fl, axis=1)

    @staticmethod
    def _ev(c, x, l1):
        return np.polynomial.polynomial.polyval2d(x, l1, c)

    def __call__(self, x, l1):
        return self._ev(self._fx, x, l1), self._ev(self._fl, x, l1)

    def jacobian(self, x, l1) -> np.ndarray:
        return np.array([[self._ev(self._fx_x, x, l1), self._ev(self._fx_l, x, l1)],
                         [self._ev(self._fl_x, x, l1), self._ev(self._fl_l, x, l1)]])

    def h(self, x, l1):
        return self._ev(self._h, x, l1)

    def k(self, x, l1):
        return self._ev(self._k, x, l1)

    def h_grad(self, x, l1):
        return self._ev(self._h_x, x, l1), self._ev(self._h_l, x, l1)


def reduced_field(cm: CenterManifold, model: SlowFastModel | None = None) -> ReducedField:
    model = model or cm.model
    cap = cm.grade_cap
    l1 = TruncatedSeries.symbol(L1, cap)
    fp = model.fprime_series(cap)
    return ReducedField(cm.h + l1, -(fp * cm.k), cm)


# -- comparison with published series ------------------------------------------

# Duffing manifold as published "to fourth order in alpha", keyed by (i, j, k) of x^i l1^j e^k
DUFFING_REFERENCE_H = {(1, 0, 0): 1, (3, 0, 0): -1, (1, 0, 1): -1, (0, 1, 1): -1,
                       (3, 0, 1): 4, (2, 1, 1): 3, (1, 0, 2): 2, (0, 1, 2): 1}
DUFFING_REFERENCE_K = {(0, 1, 0): 1, (0, 1, 1): -1, (2, 1, 1): 3, (0, 1, 2): 2,
                       (1, 2, 2): 6, (0, 1, 3): -5}


@dataclass(frozen=True)
class ReferenceComparison:
    """Term-by-term check of a computed series against a published one."""

    name: str
    mismatched: dict          # exponent -> (published, computed)
    beyond_grade: dict        # published terms of grade above ``grade``
    unpublished: dict         # computed terms of grade <= ``grade`` missing from the reference
    grade: int

    @property
    def exact(self) -> bool:
        return not self.mismatched

    def lines(self) -> list[str]:
        mono = lambda e: render(TruncatedSeries({e: 1}, sum(e)))
        out = [f"{self.name}: {'all published coefficients reproduced exactly' if self.exact else 'MISMATCH'}"]
        for e, (p, c) in sorted(self.mismatched.items()):
            out.append(f"  {mono(e)}: published {p}, computed {c}")
        for e, c in sorted(self.beyond_grade.items()):
            out.append(f"  published term {c}*{mono(e)} has grade {sum(e)} > {self.grade}")
        for e, c in sorted(self.unpublished.items()):
            out.append(f"  computed term {c}*{mono(e)} (grade {sum(e)}) is absent from the reference")
        return out


def compare_with_reference(name: str, computed: TruncatedSeries, reference: dict,
                           grade: int = 4) -> ReferenceComparison:
    ref = {e: Fraction(c) for e, c in reference.items()}
    mismatched = {e: (c, computed.coefficient(*e)) for e, c in ref.items()
                  if computed.coefficient(*e) != c}
    beyond = {e: c for e, c in ref.items() if sum(e) > grade}
    missing = {e: c for e, c in computed.terms.items() if sum(e) <= grade and e not in ref}
    return ReferenceComparison(name, mismatched, beyond, missing, grade)


def compare_duffing_reference(cm: CenterManifold) -> list[ReferenceComparison]:
    return [compare_with_reference("h", cm.h, DUFFING_REFERENCE_H),
            compare_with_reference("k", cm.k, DUFFING_REFERENCE_K)]

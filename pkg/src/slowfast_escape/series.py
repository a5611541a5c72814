"""Truncated multivariate power series in ``x``, ``l1`` and ``e`` with exact rational coefficients.

A term ``c * x^i * l1^j * e^k`` is stored under the exponent triple ``(i, j, k)``.
Every symbol has grade weight 1 and terms whose total grade ``i + j + k`` exceeds
``grade_cap`` are discarded after every operation, so ``grade_cap`` plays the role
of the bookkeeping parameter of an order-by-order expansion.
"""
from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from types import MappingProxyType
from typing import Iterable, Mapping, Union

import numpy as np

X = "x"
L1 = "l1"
EPS = "e"
SYMBOLS = (X, L1, EPS)
_INDEX = {X: 0, L1: 1, EPS: 2}

Exponent = tuple[int, int, int]
Scalar = Union[int, Fraction]


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"exact rational expected, got {type(value).__name__} {value!r}")


def _symbol_index(sym: str) -> int:
    try:
        return _INDEX[sym]
    except KeyError:
        raise ValueError(f"unknown symbol {sym!r}; expected one of {SYMBOLS}") from None


class TruncatedSeries:
    """Immutable sparse polynomial in (x, l1, e), truncated at total grade ``grade_cap``."""

    __slots__ = ("_terms", "_cap", "_numeric")

    def __init__(self, terms: Mapping[Exponent, object] | None = None, grade_cap: int = 8):
        if grade_cap < 0:
            raise ValueError("grade_cap must be >= 0")
        clean: dict[Exponent, Fraction] = {}
        for exps, coeff in (terms or {}).items():
            exps = tuple(int(p) for p in exps)
            if len(exps) != 3 or min(exps) < 0:
                raise ValueError(f"bad exponent triple {exps!r}")
            if sum(exps) > grade_cap:
                continue
            c = _as_fraction(coeff)
            if c:
                clean[exps] = clean.get(exps, Fraction(0)) + c
                if not clean[exps]:
                    del clean[exps]
        self._terms = clean
        self._cap = grade_cap
        self._numeric = None

    @classmethod
    def _raw(cls, terms: dict[Exponent, Fraction], grade_cap: int) -> "TruncatedSeries":
        # trusted constructor: terms already clean and within the cap
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._cap = grade_cap
        obj._numeric = None
        return obj

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, grade_cap: int) -> "TruncatedSeries":
        return cls._raw({}, grade_cap)

    @classmethod
    def constant(cls, value, grade_cap: int) -> "TruncatedSeries":
        return cls({(0, 0, 0): value}, grade_cap)

    @classmethod
    def symbol(cls, sym: str, grade_cap: int) -> "TruncatedSeries":
        exps = [0, 0, 0]
        exps[_symbol_index(sym)] = 1
        return cls({tuple(exps): 1}, grade_cap)

    @classmethod
    def from_univariate(cls, coeffs: Iterable, sym: str = X, grade_cap: int = 8) -> "TruncatedSeries":
        """Build ``sum(coeffs[n] * sym^n)`` from ascending coefficients."""
        idx = _symbol_index(sym)
        terms = {}
        for n, c in enumerate(coeffs):
            exps = [0, 0, 0]
            exps[idx] = n
            terms[tuple(exps)] = c
        return cls(terms, grade_cap)

    # -- basic protocol -------------------------------------------------------

    @property
    def grade_cap(self) -> int:
        return self._cap

    @property
    def terms(self) -> Mapping[Exponent, Fraction]:
        return MappingProxyType(self._terms)

    def coefficient(self, i: int, j: int = 0, k: int = 0) -> Fraction:
        return self._terms.get((i, j, k), Fraction(0))

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def max_grade(self) -> int:
        return max((sum(e) for e in self._terms), default=-1)

    def __eq__(self, other) -> bool:
        if isinstance(other, TruncatedSeries):
            return self._terms == other._terms
        try:
            other = _as_fraction(other)
        except TypeError:
            return NotImplemented
        return self._terms == ({(0, 0, 0): other} if other else {})

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def _coerce(self, other) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            return other
        return TruncatedSeries.constant(_as_fraction(other), self._cap)

    # -- ring operations ------------------------------------------------------

    def __add__(self, other) -> "TruncatedSeries":
        other = self._coerce(other)
        cap = min(self._cap, other._cap)
        out = {e: c for e, c in self._terms.items() if sum(e) <= cap}
        for e, c in other._terms.items():
            if sum(e) > cap:
                continue
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return TruncatedSeries._raw(out, cap)

    __radd__ = __add__

    def __neg__(self) -> "TruncatedSeries":
        return TruncatedSeries._raw({e: -c for e, c in self._terms.items()}, self._cap)

    def __sub__(self, other) -> "TruncatedSeries":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "TruncatedSeries":
        return self._coerce(other) - self

    def scale(self, factor) -> "TruncatedSeries":
        factor = _as_fraction(factor)
        if not factor:
            return TruncatedSeries.zero(self._cap)
        return TruncatedSeries._raw({e: c * factor for e, c in self._terms.items()}, self._cap)

    def __mul__(self, other) -> "TruncatedSeries":
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        cap = min(self._cap, other._cap)
        out: dict[Exponent, Fraction] = {}
        b_terms = sorted(other._terms.items(), key=lambda t: sum(t[0]))
        for (i, j, k), c in self._terms.items():
            room = cap - i - j - k
            if room < 0:
                continue
            for (p, q, r), d in b_terms:
                if p + q + r > room:
                    break
                e = (i + p, j + q, k + r)
                s = out.get(e, 0) + c * d
                if s:
                    out[e] = s
                else:
                    out.pop(e, None)
        return TruncatedSeries._raw(out, cap)

    def __rmul__(self, other) -> "TruncatedSeries":
        return self.scale(other)

    def __pow__(self, n: int) -> "TruncatedSeries":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = TruncatedSeries.constant(1, self._cap)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # -- calculus and substitution -------------------------------------------

    def diff(self, sym: str) -> "TruncatedSeries":
        idx = _symbol_index(sym)
        out = {}
        for e, c in self._terms.items():
            p = e[idx]
            if p:
                ne = list(e)
                ne[idx] = p - 1
                out[tuple(ne)] = c * p
        return TruncatedSeries._raw(out, self._cap)

    def compose(self, bindings: Mapping[str, object]) -> "TruncatedSeries":
        """Substitute series (or exact scalars) for symbols, re-truncating at ``grade_cap``."""
        cap = self._cap
        subs: dict[int, TruncatedSeries] = {}
        for sym, val in bindings.items():
            if isinstance(val, TruncatedSeries):
                subs[_symbol_index(sym)] = val
            else:
                subs[_symbol_index(sym)] = TruncatedSeries.constant(_as_fraction(val), cap)
        powers: dict[tuple[int, int], TruncatedSeries] = {}

        def power(idx: int, n: int) -> TruncatedSeries:
            key = (idx, n)
            if key not in powers:
                powers[key] = (TruncatedSeries.constant(1, cap) if n == 0
                               else power(idx, n - 1) * subs[idx])
            return powers[key]

        result = TruncatedSeries.zero(cap)
        for e, c in self._terms.items():
            kept = [0 if n in subs else e[n] for n in range(3)]
            term = TruncatedSeries._raw({tuple(kept): c}, cap)
            for idx, s in subs.items():
                if e[idx]:
                    term = term * power(idx, e[idx])
            result = result + term
        return result

    def truncate(self, grade_cap: int) -> "TruncatedSeries":
        cap = min(grade_cap, self._cap)
        return TruncatedSeries._raw({e: c for e, c in self._terms.items() if sum(e) <= cap}, cap)

    def with_cap(self, grade_cap: int) -> "TruncatedSeries":
        """Same terms under a different cap (terms above a smaller cap are dropped)."""
        return TruncatedSeries._raw({e: c for e, c in self._terms.items() if sum(e) <= grade_cap},
                                    grade_cap)

    def homogeneous(self, grade: int) -> "TruncatedSeries":
        return TruncatedSeries._raw({e: c for e, c in self._terms.items() if sum(e) == grade},
                                    self._cap)

    def eps_block(self, power: int) -> "TruncatedSeries":
        """Coefficient of ``e^power`` as a series in x, l1 (the e exponent is removed)."""
        return TruncatedSeries._raw(
            {(i, j, 0): c for (i, j, k), c in self._terms.items() if k == power}, self._cap)

    def eps_truncate(self, max_power: int) -> "TruncatedSeries":
        return TruncatedSeries._raw(
            {e: c for e, c in self._terms.items() if e[2] <= max_power}, self._cap)

    def eps_powers(self) -> list[int]:
        return sorted({e[2] for e in self._terms})

    def integrate_x(self) -> "TruncatedSeries":
        """Antiderivative in x with zero constant; the cap grows by one to keep every term."""
        return TruncatedSeries._raw(
            {(i + 1, j, k): c / (i + 1) for (i, j, k), c in self._terms.items()}, self._cap + 1)

    def integrate_x_definite(self, lo, hi) -> "TruncatedSeries":
        """Exact ``int_lo^hi a dx`` as an x-free series in (l1, e)."""
        lo, hi = _as_fraction(lo), _as_fraction(hi)
        out: dict[Exponent, Fraction] = {}
        for (i, j, k), c in self._terms.items():
            v = c * (hi ** (i + 1) - lo ** (i + 1)) / (i + 1)
            if v:
                s = out.get((0, j, k), 0) + v
                if s:
                    out[(0, j, k)] = s
                else:
                    out.pop((0, j, k), None)
        return TruncatedSeries._raw(out, self._cap)

    def as_rational(self) -> Fraction:
        """Value of a constant series; raises if any symbol remains."""
        extra = [e for e in self._terms if e != (0, 0, 0)]
        if extra:
            raise ValueError(f"series is not constant (has terms {extra[:3]})")
        return self.coefficient(0, 0, 0)

    # -- numeric evaluation ---------------------------------------------------

    def _numeric_tables(self):
        if self._numeric is None:
            if self._terms:
                exps = np.array(list(self._terms.keys()), dtype=np.int64)
                coeffs = np.array([float(c) for c in self._terms.values()])
            else:
                exps = np.zeros((0, 3), dtype=np.int64)
                coeffs = np.zeros(0)
            self._numeric = (exps, coeffs)
        return self._numeric

    def evaluate(self, x, l1=0.0, e=0.0):
        """Floating-point value at (x, l1, e); broadcasts over numpy arrays."""
        exps, coeffs = self._numeric_tables()
        x, l1, e = np.broadcast_arrays(np.asarray(x, float), np.asarray(l1, float),
                                       np.asarray(e, float))
        out = np.zeros(x.shape)
        for (i, j, k), c in zip(exps, coeffs):
            out = out + c * x**i * l1**j * e**k
        return out if out.ndim else float(out)

    def coefficient_grid(self, eps: float) -> np.ndarray:
        """Float matrix ``C[i, j]`` with ``self(x, l1, eps) = sum C[i, j] x^i l1^j``."""
        exps, coeffs = self._numeric_tables()
        if not len(coeffs):
            return np.zeros((1, 1))
        grid = np.zeros((exps[:, 0].max() + 1, exps[:, 1].max() + 1))
        for (i, j, k), c in zip(exps, coeffs):
            grid[i, j] += c * eps**k
        return grid

    # -- rendering ------------------------------------------------------------

    def sorted_terms(self) -> list[tuple[Exponent, Fraction]]:
        return sorted(self._terms.items(), key=lambda t: (t[0][2], t[0][0] + t[0][1], -t[0][0]))

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"TruncatedSeries({render(self)!r}, grade_cap={self._cap})"


def _monomial(i: int, j: int) -> str:
    parts = []
    if i:
        parts.append("x" if i == 1 else f"x^{i}")
    if j:
        parts.append("l1" if j == 1 else f"l1^{j}")
    return "*".join(parts)


def _coeff_text(c: Fraction, mono: str) -> str:
    # c is positive here
    if not mono:
        return str(c)
    if c == 1:
        return mono
    if c.denominator == 1:
        return f"{c.numerator}{mono}"
    return f"({c}){mono}"


def _join(items: list[tuple[Fraction, str]]) -> str:
    out = ""
    for n, (c, mono) in enumerate(items):
        text = _coeff_text(abs(c), mono)
        if n == 0:
            out = text if c > 0 else f"-{text}"
        else:
            out += f" + {text}" if c > 0 else f" - {text}"
    return out


def render(series: TruncatedSeries) -> str:
    """Human-readable form grouped by powers of e, e.g. ``x - x^3 - (x + l1 - 4x^3 - 3x^2*l1)*e``."""
    if series.is_zero():
        return "0"
    blocks: dict[int, list[tuple[Fraction, str]]] = {}
    for (i, j, k), c in series.sorted_terms():
        blocks.setdefault(k, []).append((c, _monomial(i, j)))
    pieces: list[tuple[bool, str]] = []
    for k, items in blocks.items():
        epart = "" if k == 0 else ("e" if k == 1 else f"e^{k}")
        if k == 0:
            text = _join(items)
            neg = text.startswith("-")
            pieces.append((neg, text[1:] if neg else text))
            continue
        neg = items[0][0] < 0
        if neg:
            items = [(-c, m) for c, m in items]
        if len(items) == 1:
            c, mono = items[0]
            body = _coeff_text(c, "*".join(p for p in (mono, epart) if p))
        else:
            body = f"({_join(items)})*{epart}"
        pieces.append((neg, body))
    out = ""
    for n, (neg, body) in enumerate(pieces):
        if n == 0:
            out = f"-{body}" if neg else body
        else:
            out += f" - {body}" if neg else f" + {body}"
    return out


def x_poly(coeffs: Iterable, grade_cap: int) -> TruncatedSeries:
    return TruncatedSeries.from_univariate(coeffs, X, grade_cap)

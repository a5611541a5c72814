from fractions import Fraction

import pytest
from hypothesis import strategies as st

from slowfast_escape.manifold import asymmetric, duffing
from slowfast_escape.series import TruncatedSeries

CAP = 6

exponents = st.tuples(*(st.integers(0, CAP) for _ in range(3))).filter(lambda e: sum(e) <= CAP)
rationals = st.fractions(min_value=-20, max_value=20, max_denominator=12)


@st.composite
def series(draw, cap=CAP, max_terms=8):
    terms = draw(st.dictionaries(exponents, rationals, max_size=max_terms))
    return TruncatedSeries(terms, cap)


@st.composite
def x_series(draw, cap=CAP, max_terms=6):
    coeffs = draw(st.dictionaries(st.integers(0, cap - 1), rationals, max_size=max_terms))
    return TruncatedSeries({(i, 0, 0): c for i, c in coeffs.items()}, cap)


@pytest.fixture
def duff():
    return duffing()


@pytest.fixture
def asym():
    return asymmetric()

from __future__ import annotations

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from fedosov.exactring import (
    INF,
    BaseRing,
    ParseError,
    Poly,
    RingError,
    SingularError,
    format_poly,
    mat_is_identity,
    mat_mul,
    matrix_invert,
    poly_parse,
    ring_arith,
    series_invert,
)

P2 = BaseRing.polynomial(["x1", "x2"])


def terms(p: Poly) -> dict:
    return {e: c for e, c in p.items()}


# -- parsing ----------------------------------------------------------------------------

def test_parse_examples():
    assert terms(poly_parse("1 + x1*x2", ["x1", "x2"])) == {(0, 0): 1, (1, 1): 1}
    assert poly_parse("0", ["x1"]).terms == {}
    assert terms(poly_parse("(x1 - 1/2)^2", ["x1"])) == {(2,): 1, (1,): -1, (0,): mpq(1, 4)}


def test_parse_unicode_minus_and_power():
    assert poly_parse("x1^2 − x2", P2) == poly_parse("x1*x1 - x2", P2)


@pytest.mark.parametrize("text", ["x1 +", "x3", "(x1", "x1^-1", "1/0", "x1 $ 2", ""])
def test_parse_errors(text):
    with pytest.raises((ParseError, RingError, ZeroDivisionError)):
        poly_parse(text, P2)


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        poly_parse("x1 + $", P2)
    assert exc.value.pos == 5


def test_format_roundtrip_canonical():
    p = poly_parse("3/4*x2 - x1^2*x2 + 2 - x1", P2)
    s = format_poly(p)
    assert poly_parse(s, P2) == p
    assert format_poly(poly_parse(s, P2)) == s


# -- arithmetic ---------------------------------------------------------------------------

def test_ring_arith_examples():
    x1, x2 = P2.gens()
    assert ring_arith(1 + x1, 1 - x1, "mul") == 1 - x1 * x1
    assert ring_arith(x1 + x2, x1 - x2, "add") == x1.scale(2)
    J = BaseRing.jets(["x1"], 2)
    y = J.var(0)
    prod = ring_arith(y * y, y, "mul")
    assert prod.is_zero() and prod.prec == 2


def test_mode_mismatch():
    with pytest.raises(RingError):
        ring_arith(P2.one(), BaseRing.jets(["x1", "x2"], 3).one(), "add")


def test_diff_lowers_jet_precision():
    J = BaseRing.jets(["x1", "x2"], 4)
    f = poly_parse("1 + x1*x2", J).with_prec(4)
    assert f.diff(0) == J.var(1)
    assert f.diff(0).prec == 3
    assert poly_parse("x1^2", P2).diff(0) == poly_parse("2*x1", P2)


def test_inexact_zero_is_not_exact():
    J = BaseRing.jets(["x1"], 2)
    z = J.var(0) ** 3
    assert z.is_zero() and not z.exact
    assert J.zero().exact


# -- series and matrices --------------------------------------------------------------

def test_series_invert_examples():
    J3 = BaseRing.jets(["x1"], 3)
    assert series_invert(poly_parse("1 + x1", J3)) == poly_parse("1 - x1 + x1^2 - x1^3", J3)
    J2 = BaseRing.jets(["x1"], 2)
    assert series_invert(J2.const(2)) == J2.const(mpq(1, 2))
    J2b = BaseRing.jets(["x1", "x2"], 2)
    a = poly_parse("1 + x1 + x2", J2b)
    inv = series_invert(a)
    assert inv == poly_parse("1 - x1 - x2 + x1^2 + 2*x1*x2 + x2^2", J2b)
    assert (a * inv).agrees(J2b.one())


def test_series_invert_errors():
    with pytest.raises(SingularError):
        series_invert(BaseRing.jets(["x1"], 2).var(0))
    with pytest.raises(RingError):
        series_invert(P2.one())


def test_matrix_invert_examples():
    m = [[poly_parse(e, P2) for e in row] for row in [["0", "1"], ["-1", "0"]]]
    assert matrix_invert(m) == [[P2.zero(), P2.const(-1)], [P2.one(), P2.zero()]]
    J = BaseRing.jets(["x1"], 2)
    u = poly_parse("1 + x1", J)
    inv = matrix_invert([[J.zero(), u], [-u, J.zero()]])
    s = poly_parse("1 - x1 + x1^2", J)
    assert inv == [[J.zero(), -s], [s, J.zero()]]
    eye = [[P2.one(), P2.zero()], [P2.zero(), P2.one()]]
    assert matrix_invert(eye) == eye


def test_matrix_invert_polynomial_unimodular():
    # the 4-d closed form: x1 dx1^dx3 added to the standard form
    R = BaseRing.polynomial(["x1", "x2", "x3", "x4"])
    rows = [["0", "1", "x1", "0"], ["-1", "0", "0", "0"], ["-x1", "0", "0", "1"], ["0", "0", "-1", "0"]]
    w = [[poly_parse(e, R) for e in r] for r in rows]
    pi = matrix_invert(w)
    assert mat_is_identity(mat_mul(w, pi))
    assert all(e.exact for r in pi for e in r)


def test_matrix_invert_nilpotent_part_stays_exact():
    J = BaseRing.jets(["x1", "x2", "x3", "x4"], 4)
    rows = [["0", "1", "x1", "0"], ["-1", "0", "0", "0"], ["-x1", "0", "0", "1"], ["0", "0", "-1", "0"]]
    pi = matrix_invert([[poly_parse(e, J) for e in r] for r in rows])
    assert all(e.prec == INF for r in pi for e in r)


def test_matrix_invert_singular():
    with pytest.raises(SingularError):
        matrix_invert([[P2.var(0), P2.zero()], [P2.zero(), P2.one()]])
    J = BaseRing.jets(["x1"], 3)
    with pytest.raises(SingularError):
        matrix_invert([[J.var(0)]])


# -- properties ---------------------------------------------------------------------------

coeff = st.fractions(min_value=-5, max_value=5, max_denominator=6)
exps = st.tuples(st.integers(0, 3), st.integers(0, 3))
polys = st.dictionaries(exps, coeff, max_size=5).map(lambda d: Poly.from_terms(P2, d))


@settings(max_examples=60, deadline=None)
@given(polys, polys, polys)
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    assert a - a == P2.zero()


@settings(max_examples=60, deadline=None)
@given(polys)
def test_format_parse_roundtrip(p):
    assert poly_parse(format_poly(p), P2) == p


@settings(max_examples=40, deadline=None)
@given(polys, polys)
def test_leibniz(a, b):
    assert (a * b).diff(1) == a.diff(1) * b + a * b.diff(1)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(exps, coeff, max_size=4), st.dictionaries(exps, coeff, max_size=4))
def test_jet_product_is_truncated_polynomial_product(da, db):
    J = BaseRing.jets(["x1", "x2"], 3)
    pa, pb = Poly.from_terms(P2, da), Poly.from_terms(P2, db)
    ja, jb = Poly.from_terms(J, da), Poly.from_terms(J, db)
    want = {e: c for e, c in (pa * pb).items() if sum(e) <= 3}
    assert terms(ja * jb) == want

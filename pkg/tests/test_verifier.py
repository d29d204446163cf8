from __future__ import annotations

import pytest
from gmpy2 import mpq

from fedosov.exactring import BaseRing, poly_parse
from fedosov.fedosovsolver import build_connection
from fedosov.poissongeom import symplectic_structure
from fedosov.verifier import (
    all_monomials,
    antisymmetric_part,
    associativity_check,
    bracket_of,
    center_check,
    coboundary,
    connection_star_fn,
    f1_of,
    first_order_check,
    gauge_equivalence_check,
    hochschild_cocycle_check,
    jacobi_f1_check,
    moyal_agreement_check,
    moyal_oracle,
    sample_tuples,
    transpose_cocycle_check,
    unit_check,
    with_fault,
)

R2 = BaseRing.polynomial(["x1", "x2"])
PI = [[R2.zero(), R2.one()], [-R2.one(), R2.zero()]]
x1, x2 = R2.gens()


@pytest.fixture(scope="module")
def fn():
    return connection_star_fn(build_connection(symplectic_structure(PI), 4))


def moyal_fn(a, b, n):
    return moyal_oracle(a, b, PI, n)


def test_oracle_examples():
    assert moyal_oracle(x1, x2, PI, 1) == [x1 * x2, R2.const(mpq(1, 2))]
    assert moyal_oracle(R2.const(3), x1 * x2, PI, 2) == [(x1 * x2).scale(3), R2.zero(), R2.zero()]
    got = moyal_oracle(x1 * x1, x2 * x2, PI, 2)
    assert got == [x1 ** 2 * x2 ** 2, (x1 * x2).scale(2), R2.const(mpq(1, 2))]


def test_sampling_is_deterministic():
    a = sample_tuples(R2, 7, 5, 3, 4)
    b = sample_tuples(R2, 7, 5, 3, 4)
    assert a == b
    assert all(p.degree() <= 4 for t in a for p in t)
    assert len(all_monomials(R2, 4)) == 15


def test_associativity_moyal(fn):
    rep = associativity_check(fn, sample_tuples(R2, 1, 10, 3, 3), 4, seed=1)
    assert rep.passed and rep.failing_orders() == []
    assert rep.to_json_obj()["seed"] == 1


def test_associativity_order_zero(fn):
    assert associativity_check(fn, sample_tuples(R2, 2, 5, 3, 3), 0).passed


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fault_injection_flips_exactly_order(k):
    triples = sample_tuples(R2, 3, 10, 3, 3, min_degree=1)
    rep = associativity_check(with_fault(moyal_fn, k), triples, 4)
    assert not rep.passed
    assert rep.first_failing_order() == k


def test_first_order_unit_center(fn):
    pairs = sample_tuples(R2, 5, 20, 2, 3)
    assert first_order_check(fn, PI, pairs).passed
    assert unit_check(fn, [x1 * x2 - 2, x2 ** 3], 4).passed
    assert center_check(fn, [R2.const(mpq(1, 2))], [x1, x2 * x1], 4).passed


def test_first_order_detects_wrong_bracket(fn):
    pairs = sample_tuples(R2, 5, 20, 2, 3, min_degree=1)
    wrong = [[R2.zero(), R2.const(2)], [R2.const(-2), R2.zero()]]
    assert not first_order_check(fn, wrong, pairs).passed


def test_jacobi_f1(fn):
    triples = sample_tuples(R2, 6, 5, 3, 3)
    assert jacobi_f1_check(f1_of(fn), triples).passed


# -- Hochschild ------------------------------------------------------------------------------

TRIPLES = [(x1, x2, x1 * x2), (x1 ** 2, x2 + 1, x1), (x2 ** 2, x1 * x2, x1 - x2)]


def d1(p):
    return p.diff(0)


def test_hochschild_examples():
    assert hochschild_cocycle_check(bracket_of(PI), TRIPLES).passed
    assert hochschild_cocycle_check(lambda a, b: a * b, TRIPLES).passed
    assert not hochschild_cocycle_check(lambda a, b: d1(a) * d1(b) * a, TRIPLES).passed


def test_transpose_examples():
    sym = transpose_cocycle_check(lambda a, b: a * b, TRIPLES)
    assert sym.passed and sym.extra["consistent_pass"]
    poi = transpose_cocycle_check(bracket_of(PI), TRIPLES)
    assert poi.passed and poi.extra["original_pass"]
    bad = transpose_cocycle_check(lambda a, b: d1(a) * d1(b) * a, TRIPLES)
    assert not bad.passed and not bad.extra["original_pass"] and bad.extra["consistent_pass"]


def test_gauge_examples(fn):
    F1 = bracket_of(PI)
    pairs = [(a, b) for a, b, _ in TRIPLES] + [(x1, x1 * x2)]
    assert gauge_equivalence_check(F1, F1, lambda p: R2.zero(), pairs).passed
    plus_mult = lambda a, b: F1(a, b) + a * b  # noqa: E731
    assert gauge_equivalence_check(F1, plus_mult, lambda p: p, pairs).passed
    A = antisymmetric_part(f1_of(fn))
    assert gauge_equivalence_check(A, coboundary(A, d1), d1, pairs).passed
    # a derivation has zero coboundary; the second-order operator d1^2 does not
    assert gauge_equivalence_check(A, A, d1, pairs).passed
    d11 = lambda p: p.diff(0).diff(0)  # noqa: E731
    assert gauge_equivalence_check(A, coboundary(A, d11), d11, pairs).passed
    assert not gauge_equivalence_check(A, A, d11, pairs).passed


def test_moyal_agreement(fn):
    mons = all_monomials(R2, 2)
    pairs = [(a, b) for a in mons for b in mons]
    assert moyal_agreement_check(fn, PI, pairs, 4).passed


def test_target_precision_is_enforced():
    J = BaseRing.jets(["x1", "x2"], 4)
    a = poly_parse("x1", J)
    inexact = (a ** 5)  # zero, known only through degree 4

    def f(p, q, n):
        return [p * q] + [inexact] * n

    rep = unit_check(f, [J.one()], 1, target=4)
    assert rep.passed
    rep = unit_check(f, [J.one()], 1, target=5)
    assert not rep.passed

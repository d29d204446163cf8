from __future__ import annotations

import pytest

from fedosov.exactring import BaseRing, matrix_invert, poly_parse, series_invert
from fedosov.poissongeom import (
    InvariantError,
    StructureError,
    check_skew,
    curvature,
    explicit_structure,
    fibre_generators,
    inner_potential,
    jacobi_check,
    nabla,
    phi_invariance_residuals,
    symplectic_structure,
    torsion,
)
from fedosov.weylcore import Weyl, dbar, hbar_commutator, op_d

R2 = BaseRing.polynomial(["x1", "x2"])
R3 = BaseRing.polynomial(["x1", "x2", "x3"])
J6 = BaseRing.jets(["x1", "x2"], 8)


def mat(rows, ring):
    return [[poly_parse(str(e), ring) for e in r] for r in rows]


def moyal():
    return symplectic_structure(mat([[0, 1], [-1, 0]], R2))


def jet_case():
    return symplectic_structure(mat([["0", "1 + x1*x2"], ["-1 - x1*x2", "0"]], J6))


# -- Jacobi -------------------------------------------------------------------------------

def test_jacobi_two_variables_always_passes():
    rep = jacobi_check(mat([["0", "x1^3 + x2"], ["-x1^3 - x2", "0"]], R2))
    assert rep.passed and not rep.nonzero()


def test_jacobi_so3_passes():
    rep = jacobi_check(mat([["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]], R3))
    assert rep.passed


def test_jacobi_failure_residual():
    rep = jacobi_check(mat([["0", "x1", "0"], ["-x1", "0", "x2"], ["0", "-x2", "0"]], R3))
    assert not rep.passed
    assert rep.residuals[(1, 2, 3)] == R3.var(0)


def test_check_skew():
    with pytest.raises(StructureError):
        check_skew(mat([[0, 1], [1, 0]], R2))
    with pytest.raises(StructureError):
        check_skew(mat([[0, 1, 0], [-1, 0, 0]], R2))


# -- structures ---------------------------------------------------------------------------

def test_moyal_structure():
    P = moyal()
    x1, x2 = R2.gens()
    assert P.derive(0, x2) == 1 and P.derive(0, x1) == 0
    assert P.derive(1, x1) == -1 and P.derive(1, x2) == 0
    assert P.fm.phi == P.pi
    assert P.is_flat()


def test_jet_structure():
    P = jet_case()
    u = poly_parse("1 + x1*x2", J6)
    assert P.fm.phi[0][1] == u
    assert P.fm.omega[0][1] == -series_invert(u)
    assert not P.is_flat()
    assert all(v.is_zero() for v in phi_invariance_residuals(P).values())


def test_symplectic_requires_jacobi_and_invertibility():
    with pytest.raises(StructureError):
        symplectic_structure(mat([[0, "x1", 0], ["-x1", 0, "x2"], [0, "-x2", 0]], R3))
    with pytest.raises(StructureError):
        symplectic_structure(mat([[0, "x1"], ["-x1", 0]], R2))


def test_explicit_flat_torus_and_inconsistent_c():
    pi = mat([[0, 1], [-1, 0]], R2)
    V = mat([[1, 0], [0, 1]], R2)
    phi = mat([[0, 1], [-1, 0]], R2)
    zero = [[[R2.zero()] * 2 for _ in range(2)] for _ in range(2)]
    P = explicit_structure(pi, V, phi, None, zero)
    cd = curvature(P)
    assert cd.b.is_zero() and cd.alpha.is_zero() and cd.beta.is_zero()
    bad = [[[R2.zero()] * 2 for _ in range(2)] for _ in range(2)]
    bad[0][1][0], bad[1][0][0] = R2.one(), -R2.one()
    with pytest.raises(StructureError, match="bracket-consistency violated"):
        explicit_structure(pi, V, phi, None, bad)


def test_explicit_rejects_wrong_pi():
    pi = mat([[0, 2], [-2, 0]], R2)
    V = mat([[1, 0], [0, 1]], R2)
    phi = mat([[0, 1], [-1, 0]], R2)
    zero = [[[R2.zero()] * 2 for _ in range(2)] for _ in range(2)]
    with pytest.raises(StructureError, match="not reproduced"):
        explicit_structure(pi, V, phi, None, zero)


def test_explicit_so3_torsion_control():
    R = BaseRing.polynomial(["x1"])
    n = 4
    phi = mat([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], R)
    C = [[[R.zero()] * n for _ in range(n)] for _ in range(n)]
    for a, b, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        C[a][b][k], C[b][a][k] = R.one(), -R.one()
    P = explicit_structure([[R.zero()]], [[R.zero()] for _ in range(n)], phi, None, C)
    assert not op_d(torsion(P), P.fm).is_zero()
    with pytest.raises(InvariantError) as exc:
        curvature(P)
    assert exc.value.identity == "dψ=0"


# -- connection ---------------------------------------------------------------------------

def test_nabla_examples():
    P = moyal()
    x1 = Weyl.base(R2.var(0), 2)
    assert nabla(x1, P) == Weyl.monomial(R2, (0, 0), [1], coeff=-1)
    for y in fibre_generators(P):
        assert nabla(y, P).is_zero()
    assert torsion(P).is_zero()


def test_inner_potential_examples():
    P = moyal()
    zero = [Weyl.zero(2, R2)] * 2
    assert inner_potential(zero, P).is_zero()
    # B = d on generators recovers dbar
    images = [op_d(y, P.fm) for y in fibre_generators(P)]
    assert inner_potential(images, P) == dbar(2, R2)
    # B(y1) = hbar e1, B(y2) = 0: verified by back-substitution
    images = [Weyl.monomial(R2, (0, 0), [0], 1), Weyl.zero(2, R2)]
    v = inner_potential(images, P)
    for a, y in enumerate(fibre_generators(P)):
        assert hbar_commutator(v, y, P.fm) == images[a]


def test_inner_potential_non_integrable():
    P = moyal()
    # B(y1) = y1 e1 and B(y2) = 0 gives a gradient field that is not closed
    images = [Weyl.monomial(R2, (1, 0), [0]), Weyl.zero(2, R2)]
    with pytest.raises(InvariantError):
        inner_potential(images, P)


def test_curvature_moyal_is_zero():
    cd = curvature(moyal())
    assert cd.alpha.is_zero() and cd.beta.is_zero() and cd.b.is_zero()
    assert all(cd.checks.values())


def test_curvature_jet_case():
    P = jet_case()
    cd = curvature(P)
    assert not cd.b.is_zero()
    assert all(cd.checks.values()) and len(cd.checks) == 8
    assert cd.beta == cd.psi
    assert op_d(cd.psi, P.fm).is_zero()
    e12 = 0b11
    assert cd.alpha.nonzero_terms() == {((1, 1), e12, 0): J6.one()}
    assert cd.beta.terms[((1, 0), e12, 0)] == J6.var(1)
    assert cd.beta.terms[((0, 1), e12, 0)] == J6.var(0)


def test_symplectic_c_is_derivative_of_pi():
    P = jet_case()
    pi12 = P.pi[0][1]
    assert P.C[0][1][0] == pi12.diff(0)
    assert P.C[0][1][1] == pi12.diff(1)
    assert P.C[1][0][0] == -pi12.diff(0)
    assert P.C[0][0][0].is_zero()


def test_closed_4d_form():
    R = BaseRing.polynomial(["x1", "x2", "x3", "x4"])
    w = mat([[0, 1, "x1", 0], [-1, 0, 0, 0], ["-x1", 0, 0, 1], [0, 0, -1, 0]], R)
    pi = matrix_invert(w)
    assert jacobi_check(pi).passed
    cd = curvature(symplectic_structure(pi))
    assert cd.alpha.is_zero()
    assert cd.beta.nonzero_terms() == {((1, 0, 0, 0), 0b1010, 0): R.one()}

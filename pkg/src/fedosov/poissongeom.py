"""Poisson structures, Hamiltonian basis data, the connection and its curvature.

A :class:`PoissonStructure` fixes a basis ``D_1..D_n`` of derivations of the
base ring (``D_a = sum_j V_aj d/dx_j``), the skew form ``phi_ab`` on that
basis with inverse ``omega``, and structure functions ``c_ab^k`` with
``[D_a, D_b] = sum_k c_ab^k D_k``.  Fibre coordinate ``y_a`` is attached to
``D_a`` and ``e^a`` is the dual 1-form.

The connection ``nabla`` is ``nabla_{D_a} D_b = [D_a, D_b]`` on the fibre and
the Chevalley-Eilenberg differential on forms, extended as an odd derivation
with the new form factor written on the left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from gmpy2 import mpq

from fedosov.exactring import (
    INF,
    BaseRing,
    Matrix,
    Poly,
    RingError,
    SingularError,
    mat_is_identity,
    mat_mul,
    matrix_invert,
)
from fedosov.weylcore import (
    FormMatrix,
    Weyl,
    WeylError,
    _Acc,
    _below,
    dbar,
    hbar_commutator,
    mask_indices,
    op_d,
    s_decompose,
    y_derivative,
    y_multiply,
)


class StructureError(ValueError):
    """Input data does not describe a valid nonsingular Poisson structure."""


class InvariantError(RuntimeError):
    """An identity that must hold for validated input failed.

    ``identity`` names the failed relation (e.g. ``"dψ=0"``).
    """

    def __init__(self, identity: str, detail: str = ""):
        super().__init__(f"invariant violated: {identity}" + (f" ({detail})" if detail else ""))
        self.identity = identity
        self.detail = detail


# -- Jacobi identity -------------------------------------------------------------

@dataclass
class JacobiReport:
    passed: bool
    residuals: dict[tuple[int, int, int], Poly]

    def nonzero(self) -> dict[tuple[int, int, int], Poly]:
        return {k: v for k, v in self.residuals.items() if not v.is_zero()}


def check_skew(mat: Matrix, name: str = "matrix") -> None:
    n = len(mat)
    if any(len(r) != n for r in mat):
        raise StructureError(f"{name} is not square")
    for i in range(n):
        for j in range(i, n):
            if not (mat[i][j] + mat[j][i]).is_zero():
                raise StructureError(f"{name} is not skew at ({i + 1},{j + 1})")


def jacobi_check(pi: Matrix) -> JacobiReport:
    """Cyclic sum ``sum_l pi^{il} d_l pi^{jk} + cyclic`` for every ``i<j<k`` (1-based keys)."""
    check_skew(pi, "Pi")
    m = len(pi)
    ring = pi[0][0].ring
    residuals = {}
    for i, j, k in combinations(range(m), 3):
        s = ring.zero()
        for l in range(m):
            s = (s + pi[i][l] * pi[j][k].diff(l) + pi[j][l] * pi[k][i].diff(l)
                 + pi[k][l] * pi[i][j].diff(l))
        residuals[(i + 1, j + 1, k + 1)] = s
    return JacobiReport(all(r.is_zero() for r in residuals.values()), residuals)


# -- structure -------------------------------------------------------------------------

@dataclass(eq=False)
class PoissonStructure:
    ring: BaseRing
    mode: str
    pi: Matrix
    V: Matrix
    fm: FormMatrix
    C: list  # C[a][b][k] = c_ab^k

    @property
    def m(self) -> int:
        return self.ring.nvars

    @property
    def n(self) -> int:
        return self.fm.n

    def derive(self, a: int, f: Poly) -> Poly:
        """``D_a f``."""
        out = self.ring.zero()
        for j, v in enumerate(self.V[a]):
            if not (v.is_zero() and v.exact):
                out = out + v * f.diff(j)
        return out

    def bracket(self, f: Poly, g: Poly) -> Poly:
        """``f(f, g) = sum pi^{ij} d_i f d_j g``."""
        out = self.ring.zero()
        for i in range(self.m):
            fi = f.diff(i)
            if fi.is_zero() and fi.exact:
                continue
            for j in range(self.m):
                p = self.pi[i][j]
                if p.is_zero() and p.exact:
                    continue
                out = out + p * fi * g.diff(j)
        return out

    def is_flat(self) -> bool:
        return all(c.is_zero() for r in self.C for cc in r for c in cc)

    def xprec(self) -> float:
        ps = [e.prec for r in self.pi + self.V for e in r]
        ps += [c.prec for r in self.C for cc in r for c in cc]
        return min(ps + [self.fm.xprec], default=INF)


def vector_field_bracket(V: Matrix, a: int, b: int) -> list[Poly]:
    """Coefficients of ``[D_a, D_b]`` on ``d/dx_j``."""
    m = len(V[0])
    ring = V[0][0].ring
    out = []
    for j in range(m):
        s = ring.zero()
        for l in range(m):
            s = s + V[a][l] * V[b][j].diff(l) - V[b][l] * V[a][j].diff(l)
        out.append(s)
    return out


def _check_bracket_consistency(V: Matrix, C: list) -> None:
    n, m = len(V), len(V[0])
    for a in range(n):
        for b in range(n):
            w = vector_field_bracket(V, a, b)
            for j in range(m):
                s = w[j]
                for k in range(n):
                    s = s - C[a][b][k] * V[k][j]
                if not s.is_zero():
                    raise StructureError(
                        f"bracket-consistency violated at a={a + 1}, b={b + 1}, j={j + 1}: {s}")


def symplectic_structure(pi: Matrix) -> PoissonStructure:
    """Hamiltonian basis ``D_a = f(x_a, .)`` of a nonsingular bracket, ``n = m``."""
    check_skew(pi, "Pi")
    rep = jacobi_check(pi)
    if not rep.passed:
        i, j, k = next(iter(rep.nonzero()))
        raise StructureError(f"Jacobi identity fails at ({i},{j},{k}): {rep.residuals[(i, j, k)]}")
    try:
        omega = matrix_invert(pi)
    except (SingularError, RingError) as exc:
        raise StructureError(f"Pi is not invertible: {exc}") from exc
    fm = FormMatrix(pi, omega)
    n = len(pi)
    ring = pi[0][0].ring
    # solve C from the vector-field brackets: c_ab = W_ab . V^{-1}, V^{-1} = omega
    C = [[[ring.zero()] * n for _ in range(n)] for _ in range(n)]
    for a in range(n):
        for b in range(n):
            w = vector_field_bracket(pi, a, b)
            for k in range(n):
                s = ring.zero()
                for j in range(n):
                    s = s + w[j] * omega[j][k]
                # the closed form d_k pi^{ab} is exact; the solve only carries omega's precision
                exact = pi[a][b].diff(k)
                if not (s - exact).is_zero():
                    raise InvariantError("c_ab^k = ∂_k π^ab", f"a={a + 1} b={b + 1} k={k + 1}")
                C[a][b][k] = exact
    _check_bracket_consistency(pi, C)
    return PoissonStructure(ring, "symplectic_coordinates", pi, [list(r) for r in pi], fm, C)


def explicit_structure(pi: Matrix, V: Matrix, phi: Matrix, omega: Matrix | None,
                       C: list) -> PoissonStructure:
    """Validate user-supplied basis data."""
    check_skew(pi, "Pi")
    rep = jacobi_check(pi)
    if not rep.passed:
        i, j, k = next(iter(rep.nonzero()))
        raise StructureError(f"Jacobi identity fails at ({i},{j},{k}): {rep.residuals[(i, j, k)]}")
    n, m = len(phi), len(pi)
    if len(V) != n or any(len(r) != m for r in V):
        raise StructureError(f"V must be {n}x{m}")
    check_skew(phi, "phi")
    if omega is None:
        try:
            omega = matrix_invert(phi)
        except (SingularError, RingError) as exc:
            raise StructureError(f"phi is not invertible: {exc}") from exc
    if len(omega) != n or any(len(r) != n for r in omega):
        raise StructureError(f"omega must be {n}x{n}")
    check_skew(omega, "omega")
    if not (mat_is_identity(mat_mul(omega, phi)) and mat_is_identity(mat_mul(phi, omega))):
        raise StructureError("omega is not the inverse of phi")
    if len(C) != n or any(len(r) != n or any(len(c) != n for c in r) for r in C):
        raise StructureError(f"C must be {n}x{n}x{n}")
    for a in range(n):
        for b in range(n):
            for k in range(n):
                if not (C[a][b][k] + C[b][a][k]).is_zero():
                    raise StructureError(
                        f"C is not antisymmetric at a={a + 1}, b={b + 1}, k={k + 1}")
    _check_bracket_consistency(V, C)
    # the bracket must be the one the basis data describes
    for i in range(m):
        for j in range(m):
            s = pi[i][j]
            for a in range(n):
                for b in range(n):
                    s = s - omega[b][a] * V[a][i] * V[b][j]
            if not s.is_zero():
                raise StructureError(f"Pi is not reproduced by (V, omega) at ({i + 1},{j + 1})")
    return PoissonStructure(pi[0][0].ring, "explicit_basis", pi, V, FormMatrix(phi, omega), C)


# -- connection -------------------------------------------------------------------------

def nabla(a: Weyl, P: PoissonStructure) -> Weyl:
    """Odd derivation of bidegree (0, 1); see the module docstring."""
    n = P.n
    acc = _Acc()
    pairs = [(i, j) for i, j in combinations(range(n), 2)]
    for (alpha, s, k), f in a.terms.items():
        # coefficient part: sum_a e^a D_a f
        for i in range(n):
            if s >> i & 1:
                continue
            g = P.derive(i, f)
            if g.is_zero() and g.exact:
                continue
            sign = -1 if _below(s, i) & 1 else 1
            acc.add((alpha, s | 1 << i, k), g, sign)
        # fibre part: y_b -> sum_{i,k} c_ib^k y_k e^i
        for b in range(n):
            if not alpha[b]:
                continue
            base = alpha[:b] + (alpha[b] - 1,) + alpha[b + 1:]
            for i in range(n):
                if s >> i & 1:
                    continue
                sign = (-1 if _below(s, i) & 1 else 1) * alpha[b]
                for kk in range(n):
                    c = P.C[i][b][kk]
                    if c.is_zero() and c.exact:
                        continue
                    gamma = base[:kk] + (base[kk] + 1,) + base[kk + 1:]
                    acc.add((gamma, s | 1 << i, k), f * c, sign)
        # form part: e^c -> -sum_{i<j} c_ij^c e^i e^j, i.e. -sum c_ij^c e^i e^j iota_c
        for c in mask_indices(s):
            rest = s & ~(1 << c)
            sign_c = -1 if _below(s, c) & 1 else 1
            for i, j in pairs:
                if rest >> i & 1 or rest >> j & 1:
                    continue
                cc = P.C[i][j][c]
                if cc.is_zero() and cc.exact:
                    continue
                # e^i e^j (even) in front of rest
                sign = -sign_c
                sign *= -1 if _below(rest, j) & 1 else 1
                sign *= -1 if _below(rest | 1 << j, i) & 1 else 1
                acc.add((alpha, rest | 1 << i | 1 << j, k), f * cc, sign)
    return acc.build(a.n, a.ring, a.trunc)


def torsion(P: PoissonStructure) -> Weyl:
    """``psi = sum_{i<j} sum_k c_ij^k y_k e^i e^j``."""
    n = P.n
    terms = {}
    for i, j in combinations(range(n), 2):
        for k in range(n):
            c = P.C[i][j][k]
            if c.is_zero() and c.exact:
                continue
            alpha = tuple(int(t == k) for t in range(n))
            terms[(alpha, 1 << i | 1 << j, 0)] = c
    return Weyl(n, P.ring, terms)


def inner_potential(images: list[Weyl], P: PoissonStructure) -> Weyl:
    """``v`` with ``(1/hbar)[v, y_a] = images[a]`` and no y-degree-0 part.

    Solves ``dv/dy_c = sum_a images[a] omega^{ac}`` and integrates with the
    Euler operator.  Raises :class:`InvariantError` if the gradient field is
    not integrable.
    """
    n = P.n
    omega = P.fm.omega
    if len(images) != n:
        raise WeylError(f"need {n} generator images")
    grads = []
    for c in range(n):
        g = Weyl.zero(n, P.ring)
        for a in range(n):
            if images[a]:
                g = g + images[a].scale(omega[a][c])
        grads.append(g)
    for c, d in combinations(range(n), 2):
        if not (y_derivative(grads[c], d) - y_derivative(grads[d], c)).is_zero():
            raise InvariantError("integrability of the inner potential",
                                 f"mixed derivative y{c + 1}, y{d + 1}")
    v = Weyl.zero(n, P.ring, min((g.trunc for g in grads), default=INF) + 1)
    for c in range(n):
        for p, _q, comp in s_decompose(grads[c]):
            v = v + y_multiply(comp, c).scale(_inv(p + 1))
    for a in range(n):
        back = hbar_commutator(v, _gen(P, a), P.fm)
        if not (back - images[a]).is_zero():
            raise InvariantError("(1/ħ)[v, y_a] = B(y_a)", f"a={a + 1}")
    return v


def _inv(p: int) -> mpq:
    return mpq(1, p)


def _gen(P: PoissonStructure, a: int) -> Weyl:
    return Weyl.monomial(P.ring, [int(i == a) for i in range(P.n)])


def fibre_generators(P: PoissonStructure) -> list[Weyl]:
    return [_gen(P, a) for a in range(P.n)]


# -- curvature --------------------------------------------------------------------------

@dataclass
class CurvatureData:
    alpha: Weyl
    beta: Weyl
    b: Weyl
    psi: Weyl
    checks: dict[str, bool] = field(default_factory=dict)


def curvature(P: PoissonStructure) -> CurvatureData:
    """Potentials of ``nabla^2`` and ``nabla d + d nabla``, with their identities verified."""
    n, ring, fm = P.n, P.ring, P.fm
    checks: dict[str, bool] = {}

    def require(name: str, ok: bool, detail: str = ""):
        checks[name] = ok
        if not ok:
            raise InvariantError(name, detail)

    psi = torsion(P)
    require("dψ=0", op_d(psi, fm).is_zero())
    beta = nabla(dbar(n, ring), P)
    require("∇d̄=ψ", (beta - psi).is_zero())
    gens = fibre_generators(P)
    images = [nabla(nabla(y, P), P) for y in gens]
    alpha = inner_potential(images, P)
    b = alpha + beta
    for name, got, want in (("α s-degree (2,2)", alpha, (2, 2)), ("β s-degree (1,2)", beta, (1, 2))):
        require(name, all((p, q) == want for p, q, _ in s_decompose(got)))
    require("∇α=0", nabla(alpha, P).is_zero())
    require("dβ=0", op_d(beta, fm).is_zero())
    require("(d+∇)b=0", (op_d(b, fm) + nabla(b, P)).is_zero())
    for a, y in enumerate(gens):
        lhs = hbar_commutator(b, y, fm)
        ny = nabla(y, P)
        dy = op_d(y, fm)
        rhs = nabla(ny, P) + op_d(ny, fm) + nabla(dy, P)
        require("(1/ħ)ad b=∇²+d∇+∇d", (lhs - rhs).is_zero(), f"y{a + 1}")
    return CurvatureData(alpha, beta, b, psi, checks)


def phi_invariance_residuals(P: PoissonStructure) -> dict[tuple[int, int, int], Poly]:
    """``D_c phi_ab - sum_k (c_ca^k phi_kb + c_cb^k phi_ak)`` for all triples (1-based)."""
    n = P.n
    phi = P.fm.phi
    out = {}
    for c in range(n):
        for a in range(n):
            for b in range(n):
                s = P.derive(c, phi[a][b])
                for k in range(n):
                    s = s - P.C[c][a][k] * phi[k][b] - P.C[c][b][k] * phi[a][k]
                out[(c + 1, a + 1, b + 1)] = s
    return out

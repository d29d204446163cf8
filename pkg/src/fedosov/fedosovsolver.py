"""Fixed-point solver, the flat connection ``D`` and the star product.

``r`` solves ``r + delta(nabla r + (1/2hbar)[r, r]) = -delta(b)``; then
``D = d + nabla + (1/hbar) ad r`` squares to zero, ``Q = Id + delta(nabla +
(1/hbar) ad r)`` conjugates ``D`` to ``d``, flat sections are ``tau(a) =
Q^{-1}(a)`` and ``a * b = Q(tau(a) o tau(b))``.

All Weyl elements here are truncated at filtration degree ``D_max``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, TypeVar

from gmpy2 import mpq

from fedosov.exactring import INF, Poly, format_poly
from fedosov.poissongeom import CurvatureData, InvariantError, PoissonStructure, curvature, nabla
from fedosov.weylcore import Weyl, hbar_commutator, op_d, op_delta, weyl_product

T = TypeVar("T")


class SolverError(RuntimeError):
    """The fixed-point iteration did not contract; ``trace`` holds per-step valuations."""

    def __init__(self, msg: str, trace: list):
        super().__init__(f"{msg}; trace={trace}")
        self.trace = trace


def fixed_point_solve(phi: Callable[[T], T], rhs: T, max_iter: int, *,
                      valuation: Callable[[T], float] | None = None,
                      start: T | None = None) -> tuple[T, int]:
    """Solve ``x + phi(x) = rhs`` by ``x_{k+1} = rhs - phi(x_k)``.

    Stops when two successive iterates are equal.  Each difference
    ``x_{k+1} - x_k`` must have strictly higher valuation than the previous
    one; otherwise :class:`SolverError` is raised with the trace of
    valuations.  Returns ``(x, iterations)``.
    """
    # progress is measured on what is known to be nonzero
    val = valuation or (lambda e: e.valuation(nonzero=True))
    x = rhs if start is None else start
    trace: list = []
    last = -INF
    for it in range(1, max_iter + 2):
        nxt = rhs - phi(x)
        diff = nxt - x
        if diff.is_zero():
            return nxt, it
        v = val(diff)
        trace.append(v)
        if v <= last:
            raise SolverError("iteration does not gain filtration degree", trace)
        last = v
        x = nxt
    raise SolverError(f"no fixed point within {max_iter + 1} iterations", trace)


# -- the connection ------------------------------------------------------------------------

@dataclass(eq=False)
class FedosovConnection:
    structure: PoissonStructure
    curv: CurvatureData
    r: Weyl
    N_hbar: int
    D_max: int
    iterations: int
    checks: dict[str, bool] = field(default_factory=dict)
    _tau: dict = field(default_factory=dict, repr=False)

    @property
    def fm(self):
        return self.structure.fm

    @property
    def n(self) -> int:
        return self.structure.n

    def lift(self, f: Poly) -> Weyl:
        return Weyl.base(f, self.n, self.D_max)

    def ad_r(self, a: Weyl, cap: float | None = None) -> Weyl:
        """``(1/hbar)[r, a]``, computed up to filtration degree ``cap`` (default D_max)."""
        cap = self.D_max if cap is None else cap
        if not self.r.terms:
            return Weyl.zero(a.n, a.ring, min(a.trunc, cap))
        return hbar_commutator(self.r, a, self.fm, cap)

    def D(self, a: Weyl) -> Weyl:
        return op_d(a, self.fm) + nabla(a, self.structure) + self.ad_r(a)

    def _qcorr(self, a: Weyl) -> Weyl:
        # delta raises the degree by one, so degree D_max - 1 of the argument suffices
        top = self.D_max - 1
        t = nabla(a, self.structure).truncate(top) + self.ad_r(a, top)
        return op_delta(t, self.fm).truncate(self.D_max)

    def Q(self, a: Weyl) -> Weyl:
        return a.truncate(self.D_max) + self._qcorr(a)

    def Q_inverse(self, a: Weyl) -> Weyl:
        x, _ = fixed_point_solve(self._qcorr, a.truncate(self.D_max), self.D_max + 1)
        return x

    def tau(self, f: Poly) -> Weyl:
        """Flat section ``Q^{-1}(f)`` of a base element (memoized)."""
        key = (f, f.prec)  # Poly equality ignores precision
        t = self._tau.get(key)
        if t is None:
            t = self.Q_inverse(self.lift(f))
            self._tau[key] = t
        return t

    def star(self, a: Poly, b: Poly, order: int | None = None) -> "StarExpansion":
        return star(a, b, self, order)


def solve_r(P: PoissonStructure, curv: CurvatureData, N_hbar: int,
            D_max: int | None = None) -> FedosovConnection:
    """Solve for ``r`` and verify ``delta r = 0``, the flatness equation and ``D^2 = 0``."""
    if N_hbar < 0:
        raise ValueError("hbar order must be non-negative")
    D_max = 2 * N_hbar if D_max is None else D_max
    if D_max < 0:
        raise ValueError("D_max must be non-negative")
    fm = P.fm
    rhs = -op_delta(curv.b, fm).truncate(D_max)

    def phi(x: Weyl) -> Weyl:
        t = nabla(x, P).truncate(D_max - 1)
        if x:
            t = t + hbar_commutator(x, x, fm, D_max - 1).scale(mpq(1, 2))
        return op_delta(t, fm).truncate(D_max)

    r, iters = fixed_point_solve(phi, rhs, D_max + 1)
    fc = FedosovConnection(P, curv, r, N_hbar, D_max, iters)
    fc.checks = verify_connection(fc)
    return fc


def verify_connection(fc: FedosovConnection) -> dict[str, bool]:
    P, fm, r = fc.structure, fc.fm, fc.r
    checks: dict[str, bool] = {}

    def require(name: str, ok: bool, detail: str = ""):
        checks[name] = ok
        if not ok:
            raise InvariantError(name, detail)

    require("δr=0", op_delta(r, fm).is_zero())
    require("r filtration ≥ 2", r.valuation() >= 2)
    res = curvature_residual(fc)
    require("b+dr+∇r+(1/2ħ)[r,r]=0", res.is_zero(), str(res))
    for name, g in generators(fc):
        dd = fc.D(fc.D(g))
        require("D²=0", dd.is_zero(), f"on {name}: {dd}")
    return checks


def curvature_residual(fc: FedosovConnection) -> Weyl:
    r, fm, P = fc.r, fc.fm, fc.structure
    res = fc.curv.b.truncate(fc.D_max) + op_d(r, fm) + nabla(r, P)
    if r:
        res = res + hbar_commutator(r, r, fm, fc.D_max).scale(mpq(1, 2))
    return res


def generators(fc: FedosovConnection) -> list[tuple[str, Weyl]]:
    P, n, ring = fc.structure, fc.n, fc.structure.ring
    out = []
    for j, x in enumerate(ring.gens()):
        out.append((ring.names[j], fc.lift(x)))
    for a in range(n):
        alpha = [int(i == a) for i in range(n)]
        out.append((f"y{a + 1}", Weyl.monomial(ring, alpha, trunc=fc.D_max)))
        out.append((f"e{a + 1}", Weyl.monomial(ring, [0] * n, [a], trunc=fc.D_max)))
    return out


def build_connection(P: PoissonStructure, N_hbar: int, D_max: int | None = None) -> FedosovConnection:
    return solve_r(P, curvature(P), N_hbar, D_max)


# -- star product -------------------------------------------------------------------------

@dataclass
class StarExpansion:
    a: Poly
    b: Poly
    coeffs: list[Poly]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def prec(self) -> float:
        """Base-ring precision to which every coefficient is known."""
        return min((c.prec for c in self.coeffs), default=INF)

    def to_json_obj(self) -> dict:
        return {"a": format_poly(self.a), "b": format_poly(self.b),
                "F": [format_poly(c) for c in self.coeffs]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def quantize(a: Poly, fc: FedosovConnection) -> Weyl:
    return fc.tau(a)


def star(a: Poly, b: Poly, fc: FedosovConnection, order: int | None = None) -> StarExpansion:
    """Coefficients ``F_0..F_N`` of ``a * b = Q(tau(a) o tau(b))``."""
    N = fc.N_hbar if order is None else order
    if 2 * N > fc.D_max:
        raise ValueError(f"order {N} needs D_max >= {2 * N}, have {fc.D_max}")
    if (a.is_zero() and a.exact) or (b.is_zero() and b.exact):
        return StarExpansion(a, b, [a.ring.zero()] * (N + 1))
    w = fc.Q(weyl_product(fc.tau(a), fc.tau(b), fc.fm, fc.D_max))
    stray = w.part(lambda k: any(k[0]) or k[1])
    if stray:
        raise InvariantError("star product lies in A[[ħ]]", str(stray))
    return StarExpansion(a, b, w.hbar_coefficients(N))


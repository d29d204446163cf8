"""Independent oracles and deformation-theory checks for star products.

A *star function* here is any callable ``(a, b, order) -> [F_0, ..., F_order]``
on base-ring elements; :func:`connection_star_fn` adapts a solved connection.
All checks are exact.  In jet mode a residual counts as zero when it vanishes
modulo the precision it carries, and reports record that precision.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from gmpy2 import mpq

from fedosov.exactring import INF, BaseRing, Matrix, Poly, format_poly
from fedosov.weylcore import Weyl

StarFn = Callable[[Poly, Poly, int], list]
Bilinear = Callable[[Poly, Poly], Poly]


# -- sampling -----------------------------------------------------------------------

def random_monomial(ring: BaseRing, rng: random.Random, max_degree: int = 4,
                    min_degree: int = 0) -> Poly:
    deg = rng.randint(min_degree, max_degree)
    exps = [0] * ring.nvars
    for _ in range(deg):
        exps[rng.randrange(ring.nvars)] += 1
    return Poly.from_terms(ring, {tuple(exps): 1})


def random_element(ring: BaseRing, rng: random.Random, max_degree: int = 3, terms: int = 3) -> Poly:
    """Small random polynomial with integer coefficients in [-3, 3]."""
    out = ring.zero()
    for _ in range(terms):
        out = out + random_monomial(ring, rng, max_degree).scale(rng.randint(-3, 3))
    return out


def sample_tuples(ring: BaseRing, seed: int, count: int, arity: int, max_degree: int = 4,
                  min_degree: int = 0) -> list[tuple[Poly, ...]]:
    rng = random.Random(seed)
    return [tuple(random_monomial(ring, rng, max_degree, min_degree) for _ in range(arity))
            for _ in range(count)]


def all_monomials(ring: BaseRing, max_degree: int) -> list[Poly]:
    out = []
    m = ring.nvars

    def rec(i: int, left: int, exps: list):
        if i == m:
            out.append(Poly.from_terms(ring, {tuple(exps): 1}))
            return
        for e in range(left + 1):
            exps.append(e)
            rec(i + 1, left - e, exps)
            exps.pop()

    rec(0, max_degree, [])
    return sorted(out, key=lambda p: (p.degree(), str(p)))


# -- reports -----------------------------------------------------------------------

def _fmt_prec(p: float) -> int | None:
    return None if p in (INF, -INF) else int(p)


@dataclass
class SampleResidual:
    inputs: tuple[Poly, ...]
    residuals: list[Poly]

    def to_json_obj(self) -> dict:
        return {"inputs": [format_poly(p) for p in self.inputs],
                "residuals": [format_poly(r) for r in self.residuals],
                "prec": [_fmt_prec(r.prec) for r in self.residuals]}


@dataclass
class AssocReport:
    """Per-order associativity residuals.

    ``target`` is the base precision a residual must be known to for a zero
    to count (the configured jet order; ``-inf`` accepts any).
    """

    order: int
    samples: list[SampleResidual]
    seed: int | None = None
    target: float = -INF

    @property
    def residuals_zero(self) -> bool:
        return all(r.is_zero() for s in self.samples for r in s.residuals)

    @property
    def passed(self) -> bool:
        return self.residuals_zero and self.prec >= self.target

    def failing_orders(self) -> list[int]:
        return sorted({n for s in self.samples for n, r in enumerate(s.residuals) if not r.is_zero()})

    def first_failing_order(self) -> int | None:
        f = self.failing_orders()
        return f[0] if f else None

    @property
    def prec(self) -> float:
        return min((r.prec for s in self.samples for r in s.residuals), default=INF)

    def to_json_obj(self) -> dict:
        return {"pass": self.passed, "order": self.order, "seed": self.seed,
                "failing_orders": self.failing_orders(), "prec": _fmt_prec(self.prec),
                "target_prec": _fmt_prec(self.target),
                "samples": [s.to_json_obj() for s in self.samples]}


@dataclass
class CheckReport:
    name: str
    samples: list[SampleResidual] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    target: float = -INF

    @property
    def passed(self) -> bool:
        return (all(r.is_zero() for s in self.samples for r in s.residuals)
                and self.prec >= self.target
                and all(v for k, v in self.extra.items() if k.endswith("_pass")))

    @property
    def prec(self) -> float:
        return min((r.prec for s in self.samples for r in s.residuals), default=INF)

    def to_json_obj(self) -> dict:
        return {"name": self.name, "pass": self.passed, "prec": _fmt_prec(self.prec),
                "target_prec": _fmt_prec(self.target), **self.extra,
                "samples": [s.to_json_obj() for s in self.samples]}


# -- oracles ----------------------------------------------------------------------------

def moyal_oracle(a: Poly, b: Poly, pi: Matrix, N: int) -> list[Poly]:
    """Closed-form Moyal coefficients for a constant bivector."""
    m = len(pi)
    if any(not (p.is_constant() and p.exact) for row in pi for p in row):
        raise ValueError("Moyal oracle needs a constant Pi")
    consts = [[p.constant_term() for p in row] for row in pi]
    ring = a.ring
    out = [a * b]
    # pairs maps the left factor to the accumulated right factor
    pairs: dict[Poly, Poly] = {a: b}
    for k in range(1, N + 1):
        nxt: dict[Poly, Poly] = {}
        for f, g in pairs.items():
            for i in range(m):
                fi = f.diff(i)
                if fi.is_zero() and fi.exact:
                    continue
                gi = ring.zero()
                for j in range(m):
                    if consts[i][j]:
                        gi = gi + g.diff(j).scale(consts[i][j])
                if not (gi.is_zero() and gi.exact):
                    nxt[fi] = nxt[fi] + gi if fi in nxt else gi
        pairs = nxt
        s = ring.zero()
        for f, g in pairs.items():
            s = s + f * g
        out.append(s.scale(mpq(1, math.factorial(k) * 2 ** k)))
    return out


def connection_star_fn(fc) -> StarFn:
    """Memoized star function of a solved connection."""
    cache: dict = {}

    def fn(a: Poly, b: Poly, order: int) -> list[Poly]:
        key = (a, a.prec, b, b.prec)  # Poly equality ignores precision
        hit = cache.get(key)
        if hit is None or len(hit) <= order:
            hit = fc.star(a, b, fc.N_hbar).coeffs
            cache[key] = hit
        return hit[:order + 1]

    return fn


def with_fault(fn: StarFn, order: int, var: int = 0) -> StarFn:
    """Add the non-cocycle ``G(a, b) = (da/dx_var) * b`` to ``F_order``."""

    def faulty(a: Poly, b: Poly, n: int) -> list[Poly]:
        out = list(fn(a, b, n))
        if order <= n:
            out[order] = out[order] + a.diff(var) * b
        return out

    return faulty


# -- associativity ----------------------------------------------------------------------

def associativity_residuals(fn: StarFn, a: Poly, b: Poly, c: Poly, N: int) -> list[Poly]:
    """Per-order residual of ``sum_{i+j=n} F_i(F_j(a,b),c) - F_i(a,F_j(b,c))``."""
    ab = fn(a, b, N)
    bc = fn(b, c, N)
    res = [a.ring.zero() for _ in range(N + 1)]
    for j in range(N + 1):
        if not ab[j].is_zero() or not ab[j].exact:
            left = fn(ab[j], c, N - j)
            for i in range(N - j + 1):
                res[i + j] = res[i + j] + left[i]
        if not bc[j].is_zero() or not bc[j].exact:
            right = fn(a, bc[j], N - j)
            for i in range(N - j + 1):
                res[i + j] = res[i + j] - right[i]
    return res


def associativity_check(fn: StarFn, samples: Sequence[tuple[Poly, Poly, Poly]], N: int,
                        seed: int | None = None, mapper=map, target: float = -INF) -> AssocReport:
    rows = list(mapper(lambda t: associativity_residuals(fn, *t, N), samples))
    return AssocReport(N, [SampleResidual(t, r) for t, r in zip(samples, rows)], seed, target)


# -- first order ----------------------------------------------------------------------------

def bracket_of(pi: Matrix) -> Bilinear:
    m = len(pi)

    def br(f: Poly, g: Poly) -> Poly:
        out = f.ring.zero()
        for i in range(m):
            fi = f.diff(i)
            if fi.is_zero() and fi.exact:
                continue
            for j in range(m):
                if not (pi[i][j].is_zero() and pi[i][j].exact):
                    out = out + pi[i][j] * fi * g.diff(j)
        return out

    return br


def first_order_check(fn: StarFn, pi: Matrix, pairs: Sequence[tuple[Poly, Poly]],
                      target: float = -INF) -> CheckReport:
    """``(a*b - b*a)`` at order hbar equals the Poisson bracket."""
    br = bracket_of(pi)
    rep = CheckReport("first_order_commutator", target=target)
    for a, b in pairs:
        f1 = fn(a, b, 1)[1] - fn(b, a, 1)[1] - br(a, b)
        rep.samples.append(SampleResidual((a, b), [f1]))
    return rep


def unit_check(fn: StarFn, elements: Sequence[Poly], N: int, target: float = -INF) -> CheckReport:
    """``1*b = b*1 = b`` with no higher-order terms."""
    rep = CheckReport("unit", target=target)
    for b in elements:
        one = b.ring.one()
        want = [b] + [b.ring.zero()] * N
        left = fn(one, b, N)
        right = fn(b, one, N)
        rep.samples.append(SampleResidual(
            (b,), [l - w for l, w in zip(left, want)] + [r - w for r, w in zip(right, want)]))
    return rep


def center_check(fn: StarFn, central: Sequence[Poly], elements: Sequence[Poly], N: int,
                 target: float = -INF) -> CheckReport:
    """For Casimirs ``c``: ``c*b = b*c = c.b``."""
    rep = CheckReport("center", target=target)
    for c in central:
        for b in elements:
            want = [c * b] + [b.ring.zero()] * N
            res = [x - w for x, w in zip(fn(c, b, N), want)]
            res += [x - w for x, w in zip(fn(b, c, N), want)]
            rep.samples.append(SampleResidual((c, b), res))
    return rep


def f1_of(fn: StarFn) -> Bilinear:
    return lambda a, b: fn(a, b, 1)[1]


def antisymmetric_part(F1: Bilinear) -> Bilinear:
    return lambda a, b: (F1(a, b) - F1(b, a)).scale(mpq(1, 2))


def jacobi_f1_check(F1: Bilinear, triples: Sequence[tuple[Poly, Poly, Poly]],
                    target: float = -INF) -> CheckReport:
    """The antisymmetric part of ``F_1`` satisfies the Jacobi identity."""
    A = antisymmetric_part(F1)
    rep = CheckReport("jacobi_F1", target=target)
    for a, b, c in triples:
        res = A(A(a, b), c) + A(A(b, c), a) + A(A(c, a), b)
        rep.samples.append(SampleResidual((a, b, c), [res]))
    return rep


# -- Hochschild ------------------------------------------------------------------------------

def _is_antisymmetric(F1: Bilinear, triples) -> bool:
    return all((F1(x, y) + F1(y, x)).is_zero() for x, y, _ in triples)


def hochschild_cocycle_check(F1: Bilinear, triples: Sequence[tuple[Poly, Poly, Poly]]) -> CheckReport:
    """``x F1(y,z) - F1(xy,z) + F1(x,yz) - F1(x,y) z = 0``; plus Leibniz if antisymmetric."""
    rep = CheckReport("hochschild_cocycle")
    anti = _is_antisymmetric(F1, triples)
    rep.extra["antisymmetric"] = anti
    for x, y, z in triples:
        res = [x * F1(y, z) - F1(x * y, z) + F1(x, y * z) - F1(x, y) * z]
        if anti:
            res.append(F1(x * y, z) - x * F1(y, z) - y * F1(x, z))
        rep.samples.append(SampleResidual((x, y, z), res))
    return rep


def transpose_cocycle_check(F1: Bilinear, triples: Sequence[tuple[Poly, Poly, Poly]]) -> CheckReport:
    """Runs the cocycle check on ``F1'(x,y) = F1(y,x)``.

    ``passed`` is the transpose's own status; ``consistent_pass`` records that
    the transpose passes exactly when the original does.
    """
    orig = hochschild_cocycle_check(F1, triples)
    tr = hochschild_cocycle_check(lambda x, y: F1(y, x), triples)
    rep = CheckReport("transpose_cocycle", tr.samples)
    rep.extra["original_pass"] = orig.passed
    rep.extra["consistent_pass"] = orig.passed == tr.passed
    return rep


def gauge_equivalence_check(F1: Bilinear, F1p: Bilinear, Q1: Callable[[Poly], Poly],
                            pairs: Sequence[tuple[Poly, Poly]]) -> CheckReport:
    """``F1'(x,y) - F1(x,y) = x Q1(y) - Q1(xy) + Q1(x) y``."""
    rep = CheckReport("gauge_equivalence")
    for x, y in pairs:
        res = F1p(x, y) - F1(x, y) - (x * Q1(y) - Q1(x * y) + Q1(x) * y)
        rep.samples.append(SampleResidual((x, y), [res]))
    return rep


def coboundary(F1: Bilinear, Q1: Callable[[Poly], Poly]) -> Bilinear:
    """``F1 + (x Q1(y) - Q1(xy) + Q1(x) y)``."""
    return lambda x, y: F1(x, y) + x * Q1(y) - Q1(x * y) + Q1(x) * y


# -- Moyal agreement -----------------------------------------------------------------------

def moyal_agreement_check(fn: StarFn, pi: Matrix, pairs: Sequence[tuple[Poly, Poly]], N: int,
                          mapper=map, target: float = -INF) -> CheckReport:
    rep = CheckReport("moyal_agreement", target=target)

    def one(p):
        a, b = p
        got = fn(a, b, N)
        want = moyal_oracle(a, b, pi, N)
        return [g - w for g, w in zip(got, want)]

    for (a, b), res in zip(pairs, mapper(one, pairs)):
        rep.samples.append(SampleResidual((a, b), res))
    return rep


# -- Weyl-level sampling ---------------------------------------------------------------------

def random_weyl_term(ring: BaseRing, n: int, rng: random.Random, p: int, q: int, k: int = 0,
                     coeff_degree: int = 2) -> Weyl:
    """Single term ``c(x) hbar^k y^alpha e^S`` with ``|alpha| = p`` and ``|S| = q``."""
    alpha = [0] * n
    for _ in range(p):
        alpha[rng.randrange(n)] += 1
    forms = rng.sample(range(n), q)
    coeff = random_element(ring, rng, coeff_degree, 2)
    if coeff.is_zero():
        coeff = ring.one()
    return Weyl.monomial(ring, alpha, forms, k, coeff)


def random_weyl(ring: BaseRing, n: int, rng: random.Random, terms: int = 3, max_y: int = 3,
                max_k: int = 1, max_forms: int = 2, coeff_degree: int = 2,
                parity: int | None = None) -> Weyl:
    """Sum of random terms; ``parity`` fixes the form-degree parity."""
    out = Weyl.zero(n, ring)
    for _ in range(terms):
        q = rng.randint(0, min(max_forms, n))
        if parity is not None and q % 2 != parity:
            q = q + 1 if q + 1 <= min(max_forms, n) else q - 1
        out = out + random_weyl_term(ring, n, rng, rng.randint(0, max_y), q,
                                     rng.randint(0, max_k), coeff_degree)
    return out

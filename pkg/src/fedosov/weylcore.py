"""Formal Weyl algebra with exterior forms, W(E) (x) Lambda(E*).

Elements are stored as symmetric-ordering symbols: a term is a key
``(alpha, S, k)`` standing for ``hbar^k * y^alpha * e^S`` with a base-ring
coefficient.  ``alpha`` is the y-multidegree, ``S`` a bitmask of form indices
(0-based, kept sorted so the exterior sign lives in the coefficient), ``k``
the hbar power.  The filtration degree of a key is ``|alpha| + 2k``.

Forms commute with y and with the base ring; only form/form swaps cost a
sign.  The fibrewise product is the exponential contraction formula with a
factor hbar/2 per contraction, so ``[y_a, y_b] = hbar * phi_ab``.

Truncation
----------
Every element carries ``trunc``: it is known exactly in all filtration
degrees ``<= trunc`` (``inf`` for finite exact elements) and stores nothing
above.  Operations derive the ``trunc`` of their result from their inputs,
e.g. ``d`` lowers it by one and dividing a commutator by hbar lowers it by
two, so a residual is only ever compared in the degrees it really knows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Iterator, Sequence

from gmpy2 import mpq

from fedosov.exactring import (
    INF,
    BaseRing,
    Matrix,
    Poly,
    RingError,
    format_poly,
    mat_is_identity,
    mat_mul,
    matrix_invert,
    poly_parse,
    rat,
)

Key = tuple  # (alpha: tuple[int, ...], smask: int, k: int)


class WeylError(ValueError):
    pass


# -- exterior sign helpers -------------------------------------------------------

@lru_cache(maxsize=None)
def wedge_sign(s: int, t: int) -> int:
    """Sign of e^S ^ e^T relative to the sorted monomial e^(S|T); 0 if they overlap."""
    if s & t:
        return 0
    swaps = 0
    tt = t
    while tt:
        low = tt & -tt
        swaps += bin(s & ~((low << 1) - 1)).count("1")
        tt ^= low
    return -1 if swaps & 1 else 1


def _below(s: int, i: int) -> int:
    return bin(s & ((1 << i) - 1)).count("1")


def mask_indices(s: int) -> list[int]:
    out = []
    i = 0
    while s:
        if s & 1:
            out.append(i)
        s >>= 1
        i += 1
    return out


def key_degree(key: Key) -> int:
    return sum(key[0]) + 2 * key[2]


# -- form data ---------------------------------------------------------------------

@dataclass(eq=False)
class FormMatrix:
    """Skew form ``phi_ab = phi(e_a, e_b)`` and its inverse ``omega``.

    Caches the contraction tables used by the Weyl product.
    """

    phi: Matrix
    omega: Matrix
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.phi)
        if n == 0 or any(len(r) != n for r in self.phi) or len(self.omega) != n:
            raise WeylError("phi and omega must be square of equal size")
        self.phi = [list(r) for r in self.phi]
        self.omega = [list(r) for r in self.omega]
        for i in range(n):
            for j in range(n):
                if not (self.phi[i][j] + self.phi[j][i]).is_zero():
                    raise WeylError(f"phi is not skew at ({i + 1},{j + 1})")
                if not (self.omega[i][j] + self.omega[j][i]).is_zero():
                    raise WeylError(f"omega is not skew at ({i + 1},{j + 1})")
        if not (mat_is_identity(mat_mul(self.omega, self.phi))
                and mat_is_identity(mat_mul(self.phi, self.omega))):
            raise WeylError("omega is not the inverse of phi")
        self._pairs = [(i, j, self.phi[i][j]) for i in range(n) for j in range(n)
                       if i != j and not (self.phi[i][j].is_zero() and self.phi[i][j].exact)]

    @classmethod
    def from_phi(cls, phi: Matrix) -> "FormMatrix":
        return cls(phi, matrix_invert(phi))

    @classmethod
    def standard(cls, ring: BaseRing, n: int) -> "FormMatrix":
        """Darboux form: phi_{2i-1,2i} = 1."""
        if n % 2:
            raise WeylError("standard form needs even rank")
        phi = [[ring.zero() for _ in range(n)] for _ in range(n)]
        for i in range(0, n, 2):
            phi[i][i + 1] = ring.one()
            phi[i + 1][i] = -ring.one()
        return cls.from_phi(phi)

    @property
    def n(self) -> int:
        return len(self.phi)

    @property
    def ring(self) -> BaseRing:
        return self.phi[0][0].ring

    @property
    def xprec(self) -> float:
        return min((e.prec for r in self.phi + self.omega for e in r), default=INF)

    def contractions(self, alpha: tuple, beta: tuple) -> list[tuple[tuple, int, Poly]]:
        """Terms of the symbol product ``y^alpha o y^beta``.

        Returns ``(gamma, c, coeff)`` meaning ``coeff * hbar^c * y^gamma``;
        ``coeff`` includes the factor ``(1/2)^c``.
        """
        tab = self._tables.get((alpha, beta))
        if tab is None:
            tab = self._build_table(alpha, beta)
            self._tables[(alpha, beta)] = tab
        return tab

    def _build_table(self, alpha: tuple, beta: tuple) -> list:
        ring = self.ring
        n = self.n
        pairs = [(i, j, p) for (i, j, p) in self._pairs if alpha[i] and beta[j]]
        acc: dict[tuple, Poly] = {}
        rows = [0] * n
        cols = [0] * n

        def rec(idx: int, c: int, coef: Poly):
            if idx == len(pairs):
                w = mpq(1, 2 ** c)
                for i in range(n):
                    w *= math.perm(alpha[i], rows[i]) * math.perm(beta[i], cols[i])
                gamma = tuple(alpha[i] - rows[i] + beta[i] - cols[i] for i in range(n))
                key = (gamma, c)
                term = coef.scale(w)
                acc[key] = acc[key] + term if key in acc else term
                return
            i, j, p = pairs[idx]
            rec(idx + 1, c, coef)
            kk = 0
            power = coef
            while rows[i] < alpha[i] and cols[j] < beta[j]:
                kk += 1
                rows[i] += 1
                cols[j] += 1
                power = power * p
                rec(idx + 1, c + kk, power.scale(mpq(1, math.factorial(kk))))
            rows[i] -= kk
            cols[j] -= kk

        rec(0, 0, ring.one())
        return [(g, c, coef) for (g, c), coef in sorted(acc.items()) if not coef.is_zero()
                or coef.prec != INF]


# -- elements ----------------------------------------------------------------------------

class Weyl:
    """Immutable element of the truncated W(E) (x) Lambda(E*)."""

    __slots__ = ("n", "ring", "terms", "trunc")

    def __init__(self, n: int, ring: BaseRing, terms: dict | None = None, trunc: float = INF):
        self.n = n
        self.ring = ring
        self.trunc = trunc
        out = {}
        for key, c in (terms or {}).items():
            if len(key[0]) != n or key[1] >= (1 << n) or key[2] < 0:
                raise WeylError(f"malformed key {key}")
            if key_degree(key) > trunc:
                continue
            if c.terms or not c.exact:
                out[key] = c
        self.terms = out

    @classmethod
    def _raw(cls, n, ring, terms, trunc) -> "Weyl":
        obj = object.__new__(cls)
        obj.n, obj.ring, obj.terms, obj.trunc = n, ring, terms, trunc
        return obj

    # -- constructors ------------------------------------------------------------------

    @classmethod
    def zero(cls, n: int, ring: BaseRing, trunc: float = INF) -> "Weyl":
        return cls._raw(n, ring, {}, trunc)

    @classmethod
    def base(cls, f: Poly, n: int, trunc: float = INF) -> "Weyl":
        return cls(n, f.ring, {((0,) * n, 0, 0): f}, trunc)

    @classmethod
    def monomial(cls, ring: BaseRing, alpha: Sequence[int], forms: Iterable[int] = (), k: int = 0,
                 coeff=1, trunc: float = INF) -> "Weyl":
        """``coeff * hbar^k * y^alpha * e^{forms}`` with forms given 0-based in wedge order."""
        n = len(alpha)
        mask = 0
        sign = 1
        for i in reversed(list(forms)):
            if mask >> i & 1:
                return cls.zero(n, ring, trunc)
            sign *= -1 if _below(mask, i) & 1 else 1
            mask |= 1 << i
        c = ring(coeff) if not isinstance(coeff, Poly) else coeff
        return cls(n, ring, {(tuple(alpha), mask, k): c * sign}, trunc)

    # -- inspection ----------------------------------------------------------------------

    def is_zero(self) -> bool:
        """True if every stored coefficient vanishes (modulo its precision)."""
        return not any(c.terms for c in self.terms.values())

    def __bool__(self):
        return not self.is_zero()

    def nonzero_terms(self) -> dict:
        return {k: c for k, c in self.terms.items() if c.terms}

    @property
    def xprec(self) -> float:
        """Base-ring precision to which every coefficient is known."""
        return min((c.prec for c in self.terms.values()), default=INF)

    def valuation(self, nonzero: bool = False) -> float:
        """Lowest filtration degree present; ``trunc + 1`` for zero.

        Coefficients that vanish only modulo their base precision count as
        present unless ``nonzero`` is set.
        """
        keys = self.nonzero_terms() if nonzero else self.terms
        if not keys:
            return self.trunc + 1
        return min(key_degree(k) for k in keys)

    def nc_valuation(self) -> float:
        """Lowest filtration degree among non-central terms (y-degree >= 1)."""
        degs = [key_degree(k) for k in self.terms if any(k[0])]
        if not degs:
            return self.trunc + 1
        return min(degs)

    def max_degree(self) -> int:
        return max((key_degree(k) for k in self.terms), default=-1)

    def form_degrees(self) -> set[int]:
        return {bin(k[1]).count("1") for k in self.terms}

    def parity(self) -> int:
        """Form parity; raises if the element mixes parities."""
        ps = {d & 1 for d in self.form_degrees()}
        if len(ps) > 1:
            raise WeylError("element has mixed parity")
        return ps.pop() if ps else 0

    def sorted_keys(self, nonzero: bool = False) -> list[Key]:
        keys = self.nonzero_terms() if nonzero else self.terms
        return sorted(keys, key=lambda k: (key_degree(k), k[2], bin(k[1]).count("1"), k[1],
                                                 tuple(-a for a in k[0])))

    def part(self, pred) -> "Weyl":
        return Weyl._raw(self.n, self.ring, {k: c for k, c in self.terms.items() if pred(k)},
                         self.trunc)

    def scalar_part(self) -> "Weyl":
        """The s-degree (0,0) component (no y, no forms)."""
        return self.part(lambda k: not any(k[0]) and not k[1])

    def hbar_coefficients(self, order: int) -> list[Poly]:
        """Coefficients of hbar^0..hbar^order of the s-degree (0,0) part."""
        zero_a = (0,) * self.n
        out = []
        for k in range(order + 1):
            c = self.terms.get((zero_a, 0, k))
            if c is None:
                prec = self.xprec if 2 * k <= self.trunc else -1
                c = Poly._make(self.ring, {}, prec)
            elif 2 * k > self.trunc:
                c = Poly._make(self.ring, {}, -1)
            out.append(c)
        return out

    # -- linear structure ---------------------------------------------------------------

    def _check(self, other: "Weyl"):
        if not isinstance(other, Weyl):
            raise TypeError(f"expected Weyl, got {type(other).__name__}")
        if other.n != self.n or other.ring != self.ring:
            raise WeylError("dimension/mode mismatch")

    def __add__(self, other: "Weyl") -> "Weyl":
        self._check(other)
        trunc = min(self.trunc, other.trunc)
        acc = _Acc()
        acc.add_all(self, 1, trunc)
        acc.add_all(other, 1, trunc)
        return acc.build(self.n, self.ring, trunc)

    def __neg__(self) -> "Weyl":
        return Weyl._raw(self.n, self.ring, {k: -c for k, c in self.terms.items()},
                         self.trunc)

    def __sub__(self, other: "Weyl") -> "Weyl":
        return self + (-other)

    def scale(self, s) -> "Weyl":
        if isinstance(s, Poly):
            return Weyl(self.n, self.ring, {k: c * s for k, c in self.terms.items()},
                        self.trunc)
        s = rat(s)
        if not s:
            return Weyl.zero(self.n, self.ring, self.trunc)
        return Weyl._raw(self.n, self.ring, {k: c.scale(s) for k, c in self.terms.items()},
                         self.trunc)

    def truncate(self, top: float) -> "Weyl":
        if top >= self.trunc and all(key_degree(k) <= top for k in self.terms):
            return self
        return Weyl._raw(self.n, self.ring,
                         {k: c for k, c in self.terms.items() if key_degree(k) <= top},
                         min(self.trunc, top))

    def shift_hbar(self, j: int) -> "Weyl":
        """Multiply by hbar^j (j may be negative if every term allows it)."""
        out = {}
        for (a, s, k), c in self.terms.items():
            if k + j < 0:
                raise WeylError("division by hbar leaves a negative power")
            out[(a, s, k + j)] = c
        return Weyl._raw(self.n, self.ring, out, self.trunc + 2 * j)

    def map_coefficients(self, fn) -> "Weyl":
        return Weyl(self.n, self.ring, {k: fn(c) for k, c in self.terms.items()}, self.trunc)

    def agrees(self, other: "Weyl") -> bool:
        """Equality in every degree both operands know."""
        return (self - other).is_zero()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Weyl):
            return NotImplemented
        return (self.n == other.n and self.ring == other.ring
                and self.nonzero_terms() == other.nonzero_terms())

    __hash__ = None  # type: ignore[assignment]

    # -- display / serialization -----------------------------------------------------

    def to_json_obj(self) -> list[dict]:
        out = []
        for key in self.sorted_keys(nonzero=True):
            a, s, k = key
            out.append({"y": list(a), "forms": [i + 1 for i in mask_indices(s)], "hbar": k,
                        "coeff": format_poly(self.terms[key])})
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: list[dict], n: int, ring: BaseRing, trunc: float = INF) -> "Weyl":
        acc = _Acc()
        for t in obj:
            w = cls.monomial(ring, t["y"], [i - 1 for i in t["forms"]], t["hbar"],
                             poly_parse(t["coeff"], ring))
            acc.add_all(w, 1, trunc)
        return acc.build(n, ring, trunc)

    def __str__(self) -> str:
        if self.is_zero():
            return "0"
        parts = []
        for key in self.sorted_keys(nonzero=True):
            a, s, k = key
            bits = []
            if k:
                bits.append("h" if k == 1 else f"h^{k}")
            for i, e in enumerate(a):
                if e:
                    bits.append(f"y{i + 1}" if e == 1 else f"y{i + 1}^{e}")
            if s:
                bits.append("^".join(f"e{i + 1}" for i in mask_indices(s)))
            coeff = format_poly(self.terms[key])
            if bits:
                parts.append(("" if coeff == "1" else f"({coeff})*") + "*".join(bits))
            else:
                parts.append(f"({coeff})")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Weyl({self}, trunc={self.trunc})"


class _Acc:
    """Accumulates ``key -> coefficient`` sums as raw term dicts."""

    __slots__ = ("d",)

    def __init__(self):
        self.d: dict = {}

    def add(self, key: Key, poly: Poly, s=1):
        ent = self.d.get(key)
        if ent is None:
            ent = self.d[key] = [{}, INF]
        terms = ent[0]
        get = terms.get
        if s == 1:
            for m, c in poly.terms.items():
                terms[m] = get(m, 0) + c
        else:
            for m, c in poly.terms.items():
                terms[m] = get(m, 0) + c * s
        if poly.prec < ent[1]:
            ent[1] = poly.prec

    def add_all(self, w: Weyl, s, trunc: float):
        for key, c in w.terms.items():
            if key_degree(key) <= trunc:
                self.add(key, c, s)

    def build(self, n: int, ring: BaseRing, trunc: float) -> Weyl:
        out = {}
        for key, (terms, prec) in self.d.items():
            if key_degree(key) > trunc:
                continue
            p = Poly._normalize(ring, terms, prec)
            # a zero known only modulo x^(prec+1) stays stored: it is not an exact zero
            if p.terms or not p.exact:
                out[key] = p
        return Weyl._raw(n, ring, out, trunc)


# -- products ------------------------------------------------------------------------------

def _product(a: Weyl, b: Weyl, fm: FormMatrix, top: float, odd_only: bool,
             hbar_shift: int) -> Weyl:
    n = a.n
    acc = _Acc()
    zero_alpha = (0,) * n
    bterms = sorted(b.terms.items(), key=lambda kv: key_degree(kv[0]))
    for (alpha, s, k), f in a.terms.items():
        da = sum(alpha) + 2 * k
        if odd_only and alpha == zero_alpha:
            continue
        for (beta, t, l), g in bterms:
            db = sum(beta) + 2 * l
            if da + db + 2 * hbar_shift > top:
                break
            sign = wedge_sign(s, t)
            if not sign:
                continue
            if odd_only and beta == zero_alpha:
                continue
            table = fm.contractions(alpha, beta)
            fg = None
            st = s | t
            for gamma, c, coef in table:
                if odd_only:
                    if not c & 1:
                        continue
                    w = 2 * sign
                else:
                    w = sign
                if fg is None:
                    fg = f * g
                if coef.is_constant() and coef.exact:
                    acc.add((gamma, st, k + l + c + hbar_shift), fg, w * coef.constant_term())
                else:
                    acc.add((gamma, st, k + l + c + hbar_shift), fg * coef, w)
    return acc.build(n, a.ring, top)


def weyl_product(a: Weyl, b: Weyl, fm: FormMatrix, cap: float = INF) -> Weyl:
    """Fibrewise product ``a o b``; result known to ``min(Ta + vb, Tb + va)``."""
    a._check(b)
    if fm.n != a.n or fm.ring != a.ring:
        raise WeylError("form matrix does not match elements")
    trunc = min(a.trunc + b.valuation(), b.trunc + a.valuation(), cap)
    return _product(a, b, fm, trunc, False, 0)


def commutator(a: Weyl, b: Weyl, fm: FormMatrix, cap: float = INF) -> Weyl:
    """Super-commutator ``a o b - (-1)^{|a||b|} b o a`` (form parity)."""
    a._check(b)
    trunc = min(a.trunc + b.nc_valuation(), b.trunc + a.nc_valuation(), cap)
    return _product(a, b, fm, trunc, True, 0)


def hbar_commutator(a: Weyl, b: Weyl, fm: FormMatrix, cap: float = INF) -> Weyl:
    """``(1/hbar) [a, b]``; every surviving contraction carries at least one hbar."""
    a._check(b)
    trunc = min(a.trunc + b.nc_valuation(), b.trunc + a.nc_valuation()) - 2
    trunc = min(trunc, cap)
    return _product(a, b, fm, trunc, True, -1)


# -- Koszul operators -----------------------------------------------------------------------

def op_d(a: Weyl, fm: FormMatrix) -> Weyl:
    """``d = sum_{i,j} e^i phi_ij d/dy_j``: odd derivation of bidegree (-1, 1)."""
    n = a.n
    acc = _Acc()
    trunc = a.trunc - 1
    for (alpha, s, k), f in a.terms.items():
        for j in range(n):
            if not alpha[j]:
                continue
            beta = alpha[:j] + (alpha[j] - 1,) + alpha[j + 1:]
            for i in range(n):
                if s >> i & 1:
                    continue
                p = fm.phi[i][j]
                if p.is_zero() and p.exact:
                    continue
                sign = -1 if _below(s, i) & 1 else 1
                acc.add((beta, s | 1 << i, k), f * p, sign * alpha[j])
    return acc.build(n, a.ring, trunc)


def op_partial(a: Weyl, fm: FormMatrix) -> Weyl:
    """``partial(e^b) = sum_c omega^{cb} y_c``: odd derivation of bidegree (1, -1)."""
    return _partial(a, fm, weighted=False)


def op_delta(a: Weyl, fm: FormMatrix) -> Weyl:
    """``delta = partial / (p + q)`` on s-degree (p, q); kills the (0, 0) part."""
    return _partial(a, fm, weighted=True)


def _partial(a: Weyl, fm: FormMatrix, weighted: bool) -> Weyl:
    n = a.n
    acc = _Acc()
    trunc = a.trunc + 1
    for (alpha, s, k), f in a.terms.items():
        if not s:
            continue
        w = mpq(1, sum(alpha) + bin(s).count("1")) if weighted else mpq(1)
        for b in mask_indices(s):
            sign = -1 if _below(s, b) & 1 else 1
            rest = s & ~(1 << b)
            for c in range(n):
                o = fm.omega[c][b]
                if o.is_zero() and o.exact:
                    continue
                gamma = alpha[:c] + (alpha[c] + 1,) + alpha[c + 1:]
                acc.add((gamma, rest, k), f * o, sign * w)
    return acc.build(n, a.ring, trunc)


def euler_weights(a: Weyl) -> Weyl:
    """Multiply each s-degree (p, q) component by (p + q)."""
    return Weyl._raw(a.n, a.ring,
                     {k: c.scale(sum(k[0]) + bin(k[1]).count("1")) for k, c in a.terms.items()
                      if sum(k[0]) + bin(k[1]).count("1")},
                     a.trunc)


def s_decompose(a: Weyl) -> list[tuple[int, int, Weyl]]:
    """Split by s-degree ``(|alpha|, |S|)`` in increasing order."""
    groups: dict[tuple[int, int], dict] = {}
    for key, c in a.terms.items():
        groups.setdefault((sum(key[0]), bin(key[1]).count("1")), {})[key] = c
    return [(p, q, Weyl._raw(a.n, a.ring, terms, a.trunc))
            for (p, q), terms in sorted(groups.items())]


def dbar(n: int, ring: BaseRing) -> Weyl:
    """``sum_a y_a e^a``, the element with ``d = (1/hbar) ad(dbar)``."""
    terms = {}
    for a in range(n):
        alpha = tuple(int(i == a) for i in range(n))
        terms[(alpha, 1 << a, 0)] = ring.one()
    return Weyl(n, ring, terms)


# -- symbol-level helpers ---------------------------------------------------------------------

def y_derivative(a: Weyl, c: int) -> Weyl:
    """Symbol-level ``d/dy_c``."""
    out = {}
    for (alpha, s, k), f in a.terms.items():
        if alpha[c]:
            beta = alpha[:c] + (alpha[c] - 1,) + alpha[c + 1:]
            out[(beta, s, k)] = f.scale(alpha[c])
    return Weyl._raw(a.n, a.ring, out, a.trunc - 1)


def y_multiply(a: Weyl, c: int) -> Weyl:
    """Symbol-level (commutative) multiplication by ``y_c``."""
    out = {}
    for (alpha, s, k), f in a.terms.items():
        beta = alpha[:c] + (alpha[c] + 1,) + alpha[c + 1:]
        out[(beta, s, k)] = f
    return Weyl._raw(a.n, a.ring, out, a.trunc + 1)


@dataclass
class WeylAlgebra:
    """Convenience bundle of rank, base ring, form and default truncation."""

    fm: FormMatrix
    trunc: float = INF

    @property
    def n(self) -> int:
        return self.fm.n

    @property
    def ring(self) -> BaseRing:
        return self.fm.ring

    def y(self, a: int) -> Weyl:
        return Weyl.monomial(self.ring, [int(i == a) for i in range(self.n)], trunc=self.trunc)

    def e(self, a: int) -> Weyl:
        return Weyl.monomial(self.ring, [0] * self.n, [a], trunc=self.trunc)

    def hbar(self, k: int = 1) -> Weyl:
        return Weyl.monomial(self.ring, [0] * self.n, (), k, trunc=self.trunc)

    def base(self, f) -> Weyl:
        return Weyl.base(self.ring(f), self.n, self.trunc)

    def mono(self, alpha, forms=(), k=0, coeff=1) -> Weyl:
        return Weyl.monomial(self.ring, alpha, forms, k, coeff, trunc=self.trunc)

    def mul(self, a: Weyl, b: Weyl) -> Weyl:
        return weyl_product(a, b, self.fm)

    def comm(self, a: Weyl, b: Weyl) -> Weyl:
        return commutator(a, b, self.fm)

    def d(self, a: Weyl) -> Weyl:
        return op_d(a, self.fm)

    def partial(self, a: Weyl) -> Weyl:
        return op_partial(a, self.fm)

    def delta(self, a: Weyl) -> Weyl:
        return op_delta(a, self.fm)

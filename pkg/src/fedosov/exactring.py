"""Exact rational polynomials and jets.

A :class:`BaseRing` is either the polynomial ring Q[x_1..x_m] or the jet ring
Q[x_1..x_m] / m^(M+1) of truncated power series at the origin.  Elements
(:class:`Poly`) are immutable sparse term maps with ``gmpy2.mpq``
coefficients.

Jet elements carry a precision ``prec``: the element is known exactly in all
total degrees ``<= prec``.  Exact inputs have ``prec = inf``.  Truncating a
product at ``M`` sets ``prec = M``; differentiation lowers ``prec`` by one,
because the degree-M part of a derivative depends on the discarded degree
M+1 part.  Every identity checked in jet mode is therefore checked modulo the
precision actually carried by the residual, never beyond it.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from gmpy2 import mpq

from fedosov.kernels import mul_terms

Rational = mpq
INF = math.inf

_BITS = 8
_MASK = (1 << _BITS) - 1
MAX_DEGREE = _MASK


class ParseError(ValueError):
    """Malformed polynomial text; ``pos`` is the 0-based offending offset."""

    def __init__(self, msg: str, pos: int, text: str = ""):
        super().__init__(f"{msg} at position {pos}" + (f" in {text!r}" if text else ""))
        self.pos = pos


class RingError(ValueError):
    pass


class SingularError(ArithmeticError):
    pass


def rat(x) -> mpq:
    """Coerce an int, str ``"p/q"``, Fraction or mpq to :data:`Rational`."""
    if isinstance(x, str):
        return mpq(x.strip())
    return mpq(x)


@dataclass(frozen=True)
class BaseRing:
    """Ring descriptor: ordered variable names plus optional jet order."""

    names: tuple[str, ...]
    jet: int | None = None
    _degshift: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise RingError(f"duplicate variable names in {self.names}")
        if self.jet is not None and not (0 <= self.jet <= MAX_DEGREE):
            raise RingError(f"jet order must lie in [0, {MAX_DEGREE}]")
        object.__setattr__(self, "_degshift", _BITS * len(self.names))

    @classmethod
    def polynomial(cls, names: Sequence[str]) -> "BaseRing":
        return cls(tuple(names), None)

    @classmethod
    def jets(cls, names: Sequence[str], order: int) -> "BaseRing":
        return cls(tuple(names), int(order))

    @property
    def nvars(self) -> int:
        return len(self.names)

    @property
    def mode(self) -> str:
        return "polynomial" if self.jet is None else "jet"

    @property
    def cap(self) -> float:
        return INF if self.jet is None else self.jet

    # -- monomial packing ---------------------------------------------------
    # key = deg << (8m) | e_1 << 8(m-1) | ... | e_m, so integer order is
    # graded lex with x_1 > x_2 > ... and monomial product is key addition.

    def pack(self, exps: Sequence[int]) -> int:
        m = len(self.names)
        if len(exps) != m:
            raise RingError(f"exponent vector {tuple(exps)} has wrong length for {m} variables")
        key = 0
        deg = 0
        for e in exps:
            if e < 0:
                raise RingError("negative exponent")
            deg += e
            key = (key << _BITS) | e
        if deg > MAX_DEGREE:
            raise OverflowError(f"total degree {deg} exceeds {MAX_DEGREE}")
        return key | (deg << self._degshift)

    def unpack(self, key: int) -> tuple[int, ...]:
        m = len(self.names)
        return tuple((key >> (_BITS * (m - 1 - i))) & _MASK for i in range(m))

    def key_degree(self, key: int) -> int:
        return key >> self._degshift

    def unit_key(self, i: int) -> int:
        """Packed key of the variable x_i (0-based)."""
        return (1 << (_BITS * (len(self.names) - 1 - i))) | (1 << self._degshift)

    def degree_bound(self, top: float) -> int | None:
        """Exclusive key bound selecting total degree ``<= top``."""
        if top == INF:
            return None
        return (int(top) + 1) << self._degshift

    # -- constructors ---------------------------------------------------------

    def zero(self) -> "Poly":
        return Poly._make(self, {}, INF)

    def one(self) -> "Poly":
        return self.const(1)

    def const(self, c) -> "Poly":
        c = rat(c)
        return Poly._make(self, {0: c} if c else {}, INF)

    def var(self, i: int | str) -> "Poly":
        if isinstance(i, str):
            i = self.index(i)
        return Poly.from_terms(self, {tuple(int(j == i) for j in range(self.nvars)): 1})

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise RingError(f"unknown variable {name!r}") from None

    def gens(self) -> list["Poly"]:
        return [self.var(i) for i in range(self.nvars)]

    def parse(self, text: str) -> "Poly":
        return poly_parse(text, self)

    def __call__(self, x) -> "Poly":
        if isinstance(x, Poly):
            if x.ring != self:
                raise RingError("element belongs to a different ring")
            return x
        if isinstance(x, str):
            return self.parse(x)
        return self.const(x)


class Poly:
    """Immutable element of a :class:`BaseRing`."""

    __slots__ = ("ring", "terms", "prec", "_hash")

    def __init__(self, ring: BaseRing, terms: Mapping[tuple[int, ...], object] | None = None,
                 prec: float = INF):
        src = Poly.from_terms(ring, terms or {}, prec)
        self.ring = ring
        self.terms = src.terms
        self.prec = src.prec
        self._hash = None

    @classmethod
    def _make(cls, ring: BaseRing, terms: dict, prec: float) -> "Poly":
        obj = object.__new__(cls)
        obj.ring = ring
        obj.terms = terms
        obj.prec = prec
        obj._hash = None
        return obj

    @classmethod
    def from_terms(cls, ring: BaseRing, terms: Mapping[tuple[int, ...], object],
                   prec: float = INF) -> "Poly":
        packed: dict[int, mpq] = {}
        for exps, c in terms.items():
            c = rat(c)
            if c:
                k = ring.pack(exps)
                packed[k] = packed.get(k, 0) + c
        return cls._normalize(ring, packed, prec)

    @classmethod
    def _normalize(cls, ring: BaseRing, packed: dict, prec: float) -> "Poly":
        """Drop zeros and terms beyond ``min(jet, prec)``."""
        top = min(ring.cap, prec)
        if top == INF:
            return cls._make(ring, {k: c for k, c in packed.items() if c}, prec)
        bound = ring.degree_bound(top)
        out = {}
        dropped = False
        for k, c in packed.items():
            if not c:
                continue
            if k >= bound:
                dropped = True
            else:
                out[k] = c
        if dropped:
            prec = min(prec, top)
        return cls._make(ring, out, prec if top >= 0 else min(prec, top))

    # -- inspection -----------------------------------------------------------

    def items(self) -> list[tuple[tuple[int, ...], mpq]]:
        """Terms as (exponent tuple, coefficient), in canonical descending order."""
        unpack = self.ring.unpack
        return [(unpack(k), self.terms[k]) for k in sorted(self.terms, reverse=True)]

    def as_dict(self) -> dict[tuple[int, ...], mpq]:
        return dict(self.items())

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_constant(self) -> bool:
        return all(k == 0 for k in self.terms)

    def constant_term(self) -> mpq:
        return self.terms.get(0, mpq(0))

    def degree(self) -> int:
        """Total degree; -1 for zero."""
        if not self.terms:
            return -1
        return self.ring.key_degree(max(self.terms))

    def valuation(self) -> float:
        """Lowest total degree present; for zero, ``prec + 1`` (inf if exact)."""
        if not self.terms:
            return self.prec + 1
        return self.ring.key_degree(min(self.terms))

    @property
    def exact(self) -> bool:
        return self.prec == INF

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.ring != self.ring:
                raise RingError(f"ring mismatch: {self.ring} vs {other.ring}")
            return other
        return self.ring.const(other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        if not other.terms and other.prec >= self.prec:
            return self
        if not self.terms and self.prec >= other.prec:
            return other
        out = dict(self.terms)
        get = out.get
        for k, c in other.terms.items():
            out[k] = get(k, 0) + c
        return Poly._normalize(self.ring, out, min(self.prec, other.prec))

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._make(self.ring, {k: -c for k, c in self.terms.items()}, self.prec)

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def scale(self, c) -> "Poly":
        c = rat(c)
        if not c:
            return self.ring.zero()
        if c == 1:
            return self
        return Poly._make(self.ring, {k: v * c for k, v in self.terms.items()}, self.prec)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return self.scale(other)
        other = self._coerce(other)
        ring = self.ring
        prec = min(self.prec + other.valuation(), other.prec + self.valuation())
        if not self.terms or not other.terms:
            return Poly._make(ring, {}, prec)
        top = min(ring.cap, prec)
        if top < 0:
            return Poly._make(ring, {}, top)
        terms = mul_terms(self.terms, other.terms, ring.degree_bound(top))
        if ring.jet is not None and self.degree() + other.degree() > ring.jet:
            prec = min(prec, ring.jet)
        elif ring.jet is None and self.degree() + other.degree() > MAX_DEGREE:
            raise OverflowError(f"total degree exceeds {MAX_DEGREE}")
        return Poly._make(ring, terms, prec)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        result = self.ring.one()
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def diff(self, i: int) -> "Poly":
        """Partial derivative with respect to x_i (0-based)."""
        ring = self.ring
        shift = _BITS * (ring.nvars - 1 - i)
        uk = ring.unit_key(i)
        out = {}
        for k, c in self.terms.items():
            e = (k >> shift) & _MASK
            if e:
                out[k - uk] = c * e
        return Poly._make(ring, out, self.prec - 1)

    def truncate(self, top: float) -> "Poly":
        """Forget everything above total degree ``top``."""
        if top >= self.prec:
            return self
        return Poly._normalize(self.ring, dict(self.terms), top)

    def with_prec(self, prec: float) -> "Poly":
        return Poly._normalize(self.ring, dict(self.terms), min(prec, self.prec))

    # -- comparison -----------------------------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.ring == other.ring and self.terms == other.terms
        if isinstance(other, (int, mpq)) or type(other).__name__ == "Fraction":
            return self.terms == ({0: mpq(other)} if other else {})
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.ring, frozenset(self.terms.items())))
        return self._hash

    def agrees(self, other) -> bool:
        """Equality modulo the joint precision of both operands."""
        return (self - self._coerce(other)).is_zero()

    # -- printing -------------------------------------------------------------

    def __str__(self) -> str:
        return format_poly(self)

    def __repr__(self) -> str:
        p = "" if self.prec == INF else f", prec={self.prec}"
        return f"Poly({format_poly(self)!r}{p})"


def format_poly(p: Poly) -> str:
    """Canonical text form, parseable by :func:`poly_parse`."""
    if not p.terms:
        return "0"
    names = p.ring.names
    parts: list[str] = []
    for exps, c in p.items():
        mono = "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e)
        neg = c < 0
        a = -c if neg else c
        if not mono:
            body = str(a)
        elif a == 1:
            body = mono
        else:
            body = f"{a}*{mono}"
        if not parts:
            parts.append(f"-{body}" if neg else body)
        else:
            parts.append(f" - {body}" if neg else f" + {body}")
    return "".join(parts)


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|[-+*/^()−]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start(m.lastindex)
        if m.group(1):
            toks.append(("num", m.group(1), start))
        elif m.group(2):
            toks.append(("name", m.group(2), start))
        else:
            op = m.group(3)
            toks.append(("op", {"−": "-", "**": "^"}[op] if op in ("−", "**") else op, start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, ring: BaseRing):
        self.text = text
        self.ring = ring
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        t = self.take()
        if t[1] != value or t[0] != "op":
            raise ParseError(f"expected {value!r}, got {t[1] or 'end of input'!r}", t[2], self.text)

    def parse(self) -> Poly:
        if self.peek()[0] == "end":
            raise ParseError("empty expression", 0, self.text)
        result = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected {t[1]!r}", t[2], self.text)
        return result

    def expr(self) -> Poly:
        result = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def term(self) -> Poly:
        result = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            result = result * self.factor()
        return result

    def factor(self) -> Poly:
        t = self.peek()
        if t[0] == "op" and t[1] in "+-":
            self.take()
            f = self.factor()
            return -f if t[1] == "-" else f
        base = self.primary()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            e = self.take()
            if e[0] != "num":
                raise ParseError("exponent must be a non-negative integer", e[2], self.text)
            base = base ** int(e[1])
        return base

    def primary(self) -> Poly:
        t = self.take()
        if t[0] == "num":
            num = int(t[1])
            if self.peek()[0] == "op" and self.peek()[1] == "/":
                self.take()
                d = self.take()
                if d[0] != "num":
                    raise ParseError("denominator must be an integer literal", d[2], self.text)
                if int(d[1]) == 0:
                    raise ParseError("zero denominator", d[2], self.text)
                return self.ring.const(mpq(num, int(d[1])))
            return self.ring.const(num)
        if t[0] == "name":
            if t[1] not in self.ring.names:
                raise ParseError(f"unknown variable {t[1]!r}", t[2], self.text)
            return self.ring.var(t[1])
        if t[0] == "op" and t[1] == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {t[1] or 'end of input'!r}", t[2], self.text)


def poly_parse(text: str, ring: BaseRing | Sequence[str]) -> Poly:
    """Parse ``text`` into a canonical element of ``ring``.

    A bare sequence of variable names selects the polynomial ring.
    """
    if not isinstance(ring, BaseRing):
        ring = BaseRing.polynomial(ring)
    if not isinstance(text, str):
        raise ParseError("expression must be a string", 0)
    return _Parser(text, ring).parse()


# -- ring operations named in the interface ------------------------------------

def ring_arith(a: Poly, b: Poly, op: str) -> Poly:
    if a.ring != b.ring:
        raise RingError(f"mode mismatch: {a.ring} vs {b.ring}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def series_invert(a: Poly) -> Poly:
    """Inverse of a jet with nonzero constant term, by the geometric series."""
    ring = a.ring
    if ring.jet is None:
        raise RingError("series_invert needs jet mode; polynomial inverses are generally not polynomial")
    a0 = a.constant_term()
    if not a0:
        raise SingularError("constant term is zero")
    inv0 = 1 / a0
    u = ring.one() - a.scale(inv0)
    acc = ring.one()
    for _ in range(ring.jet):
        acc = ring.one() + u * acc
    return acc.scale(inv0)


# -- matrices -------------------------------------------------------------------

Matrix = list  # list[list[Poly]]


def identity(ring: BaseRing, n: int) -> Matrix:
    return [[ring.one() if i == j else ring.zero() for j in range(n)] for i in range(n)]


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    ring = a[0][0].ring
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = ring.zero()
            for t in range(k):
                s = s + a[i][t] * b[t][j]
            row.append(s)
        out.append(row)
    return out


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_is_identity(a: Matrix) -> bool:
    return all((a[i][j] - (1 if i == j else 0)).is_zero()
               for i in range(len(a)) for j in range(len(a)))


def rational_inverse(m: Sequence[Sequence[mpq]]) -> list[list[mpq]]:
    """Gauss-Jordan inverse over Q; raises :class:`SingularError`."""
    n = len(m)
    aug = [[mpq(x) for x in row] + [mpq(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            raise SingularError("matrix is singular at the origin")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _scalar_matrix(ring: BaseRing, m: Sequence[Sequence[mpq]]) -> Matrix:
    return [[ring.const(x) for x in row] for row in m]


def matrix_invert(p: Matrix) -> Matrix:
    """Two-sided inverse of a square matrix of ring elements.

    Jet mode: Neumann series around the constant part, which must be
    invertible over Q.  Polynomial mode: adjugate over the determinant via
    Faddeev-LeVerrier; the determinant must be a nonzero constant.
    """
    n = len(p)
    if any(len(row) != n for row in p):
        raise RingError("matrix must be square")
    ring = p[0][0].ring
    if ring.jet is not None:
        inv0 = _scalar_matrix(ring, rational_inverse([[x.constant_term() for x in row] for row in p]))
        nil = mat_sub(p, _scalar_matrix(ring, [[x.constant_term() for x in row] for row in p]))
        x = [[-e for e in row] for row in mat_mul(inv0, nil)]
        acc = identity(ring, n)
        term = acc
        for _ in range(ring.jet):
            term = mat_mul(x, term)
            if all(e.is_zero() and e.exact for row in term for e in row):
                break  # nilpotent part: the series terminates exactly
            acc = mat_add(acc, term)
        omega = mat_mul(acc, inv0)
    else:
        omega = _faddeev_inverse(p, ring)
    if not (mat_is_identity(mat_mul(p, omega)) and mat_is_identity(mat_mul(omega, p))):
        raise SingularError("inverse postcondition failed")
    return omega


def _faddeev_inverse(a: Matrix, ring: BaseRing) -> Matrix:
    n = len(a)
    eye = identity(ring, n)
    m = [[ring.zero()] * n for _ in range(n)]
    c = ring.one()
    for k in range(1, n + 1):
        m = mat_add(mat_mul(a, m), [[e * c for e in row] for row in eye])
        am = mat_mul(a, m)
        c = sum((am[i][i] for i in range(n)), ring.zero()).scale(mpq(-1, k))
    det = c if n % 2 == 0 else -c
    if det.is_zero() or not det.is_constant():
        raise SingularError(f"no polynomial inverse: determinant is {det}")
    return [[e.scale(-1 / c.constant_term()) for e in row] for row in m]

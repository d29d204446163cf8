"""Pure-Python term kernels.

Monomials are packed into a single int (see ``exactring.BaseRing``) so that
monomial multiplication is integer addition and a total-degree bound is a
single comparison against ``bound``.  Coefficients are ``gmpy2.mpq``.
"""

from __future__ import annotations

IMPLEMENTATION = "python"


def mul_terms(a: dict, b: dict, bound: int | None) -> dict:
    """Product of two packed term maps, dropping keys ``>= bound``."""
    if len(a) < len(b):
        a, b = b, a
    out: dict = {}
    get = out.get
    if bound is None:
        for kb, cb in b.items():
            for ka, ca in a.items():
                k = ka + kb
                out[k] = get(k, 0) + ca * cb
    else:
        sa = sorted(a.items())
        for kb, cb in b.items():
            lim = bound - kb
            for ka, ca in sa:
                if ka >= lim:
                    break
                k = ka + kb
                out[k] = get(k, 0) + ca * cb
    return {k: v for k, v in out.items() if v}


def addmul_terms(acc: dict, a: dict, b: dict, scale, bound: int | None) -> None:
    """In place ``acc += scale * a * b`` (zeros are left for the caller to prune)."""
    get = acc.get
    if bound is None:
        for kb, cb in b.items():
            cb = cb * scale
            for ka, ca in a.items():
                k = ka + kb
                acc[k] = get(k, 0) + ca * cb
    else:
        sa = sorted(a.items())
        for kb, cb in b.items():
            lim = bound - kb
            cb = cb * scale
            for ka, ca in sa:
                if ka >= lim:
                    break
                k = ka + kb
                acc[k] = get(k, 0) + ca * cb

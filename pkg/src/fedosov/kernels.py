"""Kernel selection.

The compiled extension ``fedosov._ckernels`` is used when it has been built
and ``FEDOSOV_PURE_PYTHON`` is unset; otherwise the pure-Python fallback.
Both expose the same functions and produce identical term maps.
"""

from __future__ import annotations

import os

from fedosov import _pykernels

if os.environ.get("FEDOSOV_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from fedosov import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _pykernels

mul_terms = _impl.mul_terms
addmul_terms = _impl.addmul_terms
IMPLEMENTATION: str = _impl.IMPLEMENTATION

__all__ = ["mul_terms", "addmul_terms", "IMPLEMENTATION"]

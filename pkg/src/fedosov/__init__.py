"""Exact symbolic Fedosov deformation quantization."""

from __future__ import annotations

__version__ = "0.1.0"

from fedosov.exactring import BaseRing, Poly, format_poly, matrix_invert, poly_parse  # noqa: E402
from fedosov.fedosovsolver import FedosovConnection, StarExpansion, build_connection, star  # noqa: E402
from fedosov.poissongeom import (  # noqa: E402
    InvariantError,
    PoissonStructure,
    explicit_structure,
    jacobi_check,
    symplectic_structure,
)
from fedosov.weylcore import FormMatrix, Weyl, WeylAlgebra, weyl_product  # noqa: E402

__all__ = [
    "__version__", "BaseRing", "Poly", "format_poly", "matrix_invert", "poly_parse",
    "FedosovConnection", "StarExpansion", "build_connection", "star",
    "InvariantError", "PoissonStructure", "explicit_structure", "jacobi_check", "symplectic_structure",
    "FormMatrix", "Weyl", "WeylAlgebra", "weyl_product",
]

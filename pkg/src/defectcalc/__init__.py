"""defectcalc: de Rham currents for layered media and their defects.

Layerings are represented by currents (differential forms, chains and
operator wrappers around them); defects are read off from boundaries
evaluated on compactly supported test forms.
"""
__version__ = "1.0.0"

from .currents import (  # noqa: E402
    Current,
    TestForm,
    boundary,
    chain_current,
    contract,
    evaluate,
    form_current,
    linear_combine,
    restrict,
    vector_product,
)
from .exterior import DifferentialForm, VectorField, basis, d, interior, wedge  # noqa: E402
from .geometry import Chain, Clip, Puncture, QuadratureSpec, Region, Simplex  # noqa: E402
from .symexpr import ScalarExpr, parse  # noqa: E402

__all__ = [
    "Current",
    "TestForm",
    "boundary",
    "chain_current",
    "contract",
    "evaluate",
    "form_current",
    "linear_combine",
    "restrict",
    "vector_product",
    "DifferentialForm",
    "VectorField",
    "basis",
    "d",
    "interior",
    "wedge",
    "Chain",
    "Clip",
    "Puncture",
    "QuadratureSpec",
    "Region",
    "Simplex",
    "ScalarExpr",
    "parse",
]

"""de Rham currents as formal sums of atoms evaluated on test forms.

A p-current on R^n is a linear functional on compactly supported
p-forms.  Here a :class:`Current` is a finite combination of atoms:

* :class:`FormAtom` -- phi -> integral over a region of omega ^ phi
* :class:`ChainAtom` -- phi -> integral over a chain of u * phi
* :class:`BoundaryAtom` -- phi -> inner[d phi]
* :class:`RestrictAtom` -- phi -> inner[alpha ^ phi]
* :class:`VectorAtom` -- phi -> inner[X _| phi]

Operators never rewrite atoms; they wrap.  Whatever structure a boundary
has is discovered by evaluating it (see :mod:`defectcalc.defects`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .exterior import DifferentialForm, VectorField, d, interior, multi_indices, sample_points, wedge
from .geometry import (
    Chain,
    LadderResult,
    QuadratureSpec,
    Region,
    integrate_chain,
    integrate_region,
    integrate_region_ladder,
)
from .symexpr import ScalarExpr, bump, coords, parse

__all__ = [
    "FormAtom",
    "ChainAtom",
    "BoundaryAtom",
    "RestrictAtom",
    "VectorAtom",
    "Current",
    "TestForm",
    "SupportError",
    "form_current",
    "chain_current",
    "evaluate",
    "boundary",
    "restrict",
    "contract",
    "vector_product",
    "linear_combine",
]


class SupportError(ValueError):
    """A test form's support box is not inside the current's domain."""


@dataclass(frozen=True)
class FormAtom:
    form: DifferentialForm
    region: Region

    def degree(self) -> int:
        return self.form.dim - self.form.degree


@dataclass(frozen=True)
class ChainAtom:
    chain: Chain
    weight: ScalarExpr | None = None

    def degree(self) -> int:
        return self.chain.degree


@dataclass(frozen=True)
class BoundaryAtom:
    inner: "Current"

    def degree(self) -> int:
        return self.inner.degree - 1


@dataclass(frozen=True)
class RestrictAtom:
    inner: "Current"
    alpha: DifferentialForm

    def degree(self) -> int:
        return self.inner.degree - self.alpha.degree


@dataclass(frozen=True)
class VectorAtom:
    inner: "Current"
    field: VectorField

    def degree(self) -> int:
        return self.inner.degree + 1


Atom = Union[FormAtom, ChainAtom, BoundaryAtom, RestrictAtom, VectorAtom]


class Current:
    """Finite real combination of atoms, all of degree ``degree`` on R^``dim``.

    ``domain`` is the open box standing in for the ambient manifold; test
    forms must have their support box inside it.
    """

    __slots__ = ("dim", "degree", "atoms", "domain")

    def __init__(self, dim: int, degree: int, atoms: Iterable[tuple[float, Atom]] = (), domain=None):
        if not 0 <= degree <= dim:
            raise ValueError(f"current degree {degree} outside 0..{dim}")
        atoms = tuple((float(c), a) for c, a in atoms)
        for _, a in atoms:
            if a.degree() != degree:
                raise ValueError(f"{type(a).__name__} has degree {a.degree()}, expected {degree}")
        self.dim = dim
        self.degree = degree
        self.atoms = atoms
        self.domain = None if domain is None else tuple((float(a), float(b)) for a, b in domain)

    def __add__(self, other: "Current") -> "Current":
        return linear_combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Current") -> "Current":
        return linear_combine([(1.0, self), (-1.0, other)])

    def __rmul__(self, a: float) -> "Current":
        return linear_combine([(a, self)])

    def __neg__(self) -> "Current":
        return linear_combine([(-1.0, self)])

    def __call__(self, phi, q: QuadratureSpec | None = None) -> float:
        return evaluate(self, phi, q)

    def __repr__(self):
        kinds = ", ".join(f"{c:g}*{type(a).__name__}" for c, a in self.atoms)
        return f"Current(dim={self.dim}, degree={self.degree}, [{kinds}])"


class TestForm:
    """Compactly supported p-form together with a box containing its support."""

    __test__ = False  # not a pytest class

    __slots__ = ("form", "support")

    def __init__(self, form: DifferentialForm, support):
        support = tuple((float(a), float(b)) for a, b in support)
        if len(support) != form.dim:
            raise ValueError("support box dimension mismatch")
        self.form = form
        self.support = support

    @property
    def degree(self) -> int:
        return self.form.degree

    @property
    def dim(self) -> int:
        return self.form.dim

    @classmethod
    def bump(cls, center: Sequence[float], radius: float, components=None, I=(), poly=None) -> "TestForm":
        """``poly * bump(radius; x - center) * dx_I``.

        ``components`` may instead give a full coefficient map
        ``{I: ScalarExpr}``; each coefficient is multiplied by the bump.
        """
        n = len(center)
        X = coords(n)
        b = bump(radius, *[X[i] - float(center[i]) for i in range(n)])
        if poly is not None:
            b = (parse(poly, n) if isinstance(poly, str) else poly) * b
        if components is None:
            components = {tuple(I): 1.0}
        coeffs = {}
        degree = None
        for J, c in components.items():
            J = tuple(J)
            degree = len(J)
            c = parse(c, n) if isinstance(c, str) else c
            coeffs[J] = b * c
        form = DifferentialForm(n, degree, coeffs)
        support = [(float(c) - radius, float(c) + radius) for c in center]
        return cls(form, support)

    def check_support(self, n_samples: int = 256, pad: float = 0.25) -> float:
        """Max |coefficient| at sample points outside the support box (should be 0)."""
        box = [(a - pad, b + pad) for a, b in self.support]
        P = sample_points(box, n_samples * 4)
        outside = np.zeros(len(P), dtype=bool)
        for j, (a, b) in enumerate(self.support):
            outside |= (P[:, j] < a) | (P[:, j] > b)
        P = P[outside][:n_samples]
        if not len(P) or not self.form.coeffs:
            return 0.0
        return float(np.max(np.abs(self.form.evaluate_at(P))))

    def scaled(self, a) -> "TestForm":
        return TestForm(a * self.form, self.support)

    def __add__(self, other: "TestForm") -> "TestForm":
        lo = [min(a[0], b[0]) for a, b in zip(self.support, other.support)]
        hi = [max(a[1], b[1]) for a, b in zip(self.support, other.support)]
        return TestForm(self.form + other.form, list(zip(lo, hi)))

    def to_dict(self) -> dict:
        return {"form": self.form.to_dict(), "support": [list(ab) for ab in self.support]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TestForm":
        return cls(DifferentialForm.from_dict(data["form"]), data["support"])

    def __repr__(self):
        return f"TestForm({self.form!r}, support={self.support})"


# -- constructors


def form_current(omega: DifferentialForm, region: Region, domain=None) -> Current:
    """T_omega[phi] = integral over region of omega ^ phi."""
    if omega.dim != region.dim:
        raise ValueError("form and region dimensions differ")
    return Current(
        omega.dim, omega.dim - omega.degree, [(1.0, FormAtom(omega, region))], domain or region.box
    )


def chain_current(c: Chain, weight: ScalarExpr | None = None, domain=None) -> Current:
    """T_c[phi] = integral over c of weight * phi."""
    if c.degree is None:
        raise ValueError("empty chain has no degree")
    return Current(c.dim, c.degree, [(1.0, ChainAtom(c, weight))], domain)


# -- evaluation


def _check_support(T: Current, support):
    if T.domain is None:
        return
    for (a, b), (s0, s1) in zip(T.domain, support):
        if s0 < a - 1e-12 or s1 > b + 1e-12:
            raise SupportError(f"test form support {support} escapes the domain {T.domain}")


def _eval(T: Current, phi: DifferentialForm, support, q: QuadratureSpec, ladders) -> float:
    total = []
    for c, atom in T.atoms:
        if c == 0.0:
            continue
        if isinstance(atom, FormAtom):
            integrand = wedge(atom.form, phi)
            if atom.region.punctures and q.epsilon_ladder:
                lad = integrate_region_ladder(integrand, atom.region, q, support)
                if ladders is not None:
                    ladders.append(lad)
                v = lad.extrapolated
            else:
                v = integrate_region(integrand, atom.region, q, support)
        elif isinstance(atom, ChainAtom):
            v = integrate_chain(phi, atom.chain, q, atom.weight, support)
        elif isinstance(atom, BoundaryAtom):
            v = _eval(atom.inner, d(phi), support, q, ladders)
        elif isinstance(atom, RestrictAtom):
            v = _eval(atom.inner, wedge(atom.alpha, phi), support, q, ladders)
        elif isinstance(atom, VectorAtom):
            v = _eval(atom.inner, interior(atom.field, phi), support, q, ladders)
        else:
            raise TypeError(f"unknown atom {atom!r}")
        total.append(c * v)
    return math.fsum(total)


def evaluate(
    T: Current,
    phi: TestForm,
    q: QuadratureSpec | None = None,
    ladders: list[LadderResult] | None = None,
) -> float:
    """T[phi].  Raw epsilon ladders of punctured atoms are appended to ``ladders`` if given."""
    q = q or QuadratureSpec()
    if not isinstance(phi, TestForm):
        raise TypeError("evaluate needs a TestForm (form plus support box)")
    if phi.dim != T.dim:
        raise ValueError(f"test form dim {phi.dim} != current dim {T.dim}")
    if phi.degree != T.degree:
        raise ValueError(f"test form degree {phi.degree} != current degree {T.degree}")
    _check_support(T, phi.support)
    return _eval(T, phi.form, phi.support, q, ladders)


# -- operations


def boundary(T: Current) -> Current:
    """dT[phi] = T[d phi]."""
    if T.degree < 1:
        raise ValueError("the boundary of a 0-current is not defined")
    return Current(T.dim, T.degree - 1, [(1.0, BoundaryAtom(T))], T.domain)


def restrict(T: Current, alpha: DifferentialForm) -> Current:
    """(T restricted by alpha)[phi] = T[alpha ^ phi]."""
    if alpha.dim != T.dim:
        raise ValueError("dimension mismatch")
    if alpha.degree > T.degree:
        raise ValueError(f"cannot restrict a {T.degree}-current by a {alpha.degree}-form")
    return Current(T.dim, T.degree - alpha.degree, [(1.0, RestrictAtom(T, alpha))], T.domain)


def contract(beta: DifferentialForm, T: Current) -> Current:
    """Left contraction beta _| T = (-1)^((n-p) q) T restricted by beta.

    With this sign, for T = T_omega of a smooth form the weak condition
    dT = beta _| T reduces to d(omega) = beta ^ omega.
    """
    sign = -1.0 if ((T.dim - T.degree) * beta.degree) % 2 else 1.0
    return sign * restrict(T, beta)


def vector_product(T: Current, X: VectorField) -> Current:
    """(T ^ X)[phi] = T[X _| phi]."""
    if X.dim != T.dim:
        raise ValueError("dimension mismatch")
    if T.degree >= T.dim:
        raise ValueError("T ^ X would exceed the top degree")
    return Current(T.dim, T.degree + 1, [(1.0, VectorAtom(T, X))], T.domain)


def linear_combine(terms: Sequence[tuple[float, Current]]) -> Current:
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    dim, degree = terms[0][1].dim, terms[0][1].degree
    domain = terms[0][1].domain
    atoms = []
    for a, T in terms:
        if T.dim != dim or T.degree != degree:
            raise ValueError("linear_combine needs currents of equal dimension and degree")
        if T.domain is not None:
            domain = T.domain if domain is None else _box_meet(domain, T.domain)
        atoms.extend((float(a) * c, atom) for c, atom in T.atoms)
    return Current(dim, degree, atoms, domain)


def _box_meet(a, b):
    return tuple((max(a0, b0), min(a1, b1)) for (a0, a1), (b0, b1) in zip(a, b))


def zero_current(dim: int, degree: int, domain=None) -> Current:
    return Current(dim, degree, (), domain)

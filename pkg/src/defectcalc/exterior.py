"""Differential forms with expression coefficients on R^n.

A k-form is stored as a map from strictly increasing multi-indices
(tuples of 1-based coordinate indices) to :class:`ScalarExpr`
coefficients.  Signs from reordering are computed at operation time,
so the stored representation is canonical.
"""
from __future__ import annotations

import itertools
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .symexpr import ScalarExpr, const, parse

__all__ = [
    "MultiIndex",
    "DifferentialForm",
    "VectorField",
    "multi_indices",
    "basis",
    "zero_form",
    "scalar_form",
    "one_form",
    "wedge",
    "d",
    "interior",
    "frobenius_residual",
    "sample_points",
    "is_zero",
    "max_abs",
]

MultiIndex = tuple  # strictly increasing tuple of 1-based ints

ZERO_TOL = 1e-9
N_SAMPLES = 256


def multi_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All increasing multi-indices of ``degree`` in ``1..dim``, lexicographic."""
    return list(itertools.combinations(range(1, dim + 1), degree))


def _check_index(I: Sequence[int], dim: int) -> tuple[int, ...]:
    I = tuple(int(i) for i in I)
    if any(b <= a for a, b in zip(I, I[1:])):
        raise ValueError(f"multi-index {I} is not strictly increasing")
    if I and (I[0] < 1 or I[-1] > dim):
        raise ValueError(f"multi-index {I} outside 1..{dim}")
    return I


def _merge_sign(I: Sequence[int], J: Sequence[int]) -> int:
    """Sign of the permutation sorting the concatenation I + J."""
    inversions = sum(1 for i in I for j in J if i > j)
    return -1 if inversions % 2 else 1


class DifferentialForm:
    """Degree-``degree`` form on R^``dim``; absent coefficients are zero."""

    __slots__ = ("dim", "degree", "coeffs")

    def __init__(self, dim: int, degree: int, coeffs: Mapping | None = None):
        if not 0 <= degree <= dim:
            raise ValueError(f"degree {degree} outside 0..{dim}")
        clean = {}
        for I, c in (coeffs or {}).items():
            I = _check_index(I, dim)
            if len(I) != degree:
                raise ValueError(f"multi-index {I} has degree {len(I)}, expected {degree}")
            if isinstance(c, str):
                c = parse(c, dim)
            elif not isinstance(c, ScalarExpr):
                c = const(float(c), dim)
            if c.dim != dim:
                raise ValueError("coefficient dimension mismatch")
            if not c.is_zero:
                clean[I] = c
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def __setattr__(self, name, value):
        raise AttributeError("DifferentialForm is immutable")

    # -- linear structure
    def _check_compatible(self, other: "DifferentialForm"):
        if not isinstance(other, DifferentialForm):
            raise TypeError("expected a DifferentialForm")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if other.degree != self.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other):
        self._check_compatible(other)
        out = dict(self.coeffs)
        for I, c in other.coeffs.items():
            out[I] = out[I] + c if I in out else c
        return DifferentialForm(self.dim, self.degree, out)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, f):
        """Multiply by a number or a scalar field."""
        if isinstance(f, DifferentialForm):
            return NotImplemented
        if isinstance(f, str):
            f = parse(f, self.dim)
        return DifferentialForm(self.dim, self.degree, {I: c * f for I, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    @property
    def is_structurally_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, I: Sequence[int]) -> ScalarExpr:
        return self.coeffs.get(tuple(I), const(0.0, self.dim))

    # -- evaluation
    def evaluate_at(self, points) -> np.ndarray:
        """Coefficient array of shape ``(N, C(dim, degree))``.

        Columns follow :func:`multi_indices` order.  A single point may be
        passed as a 1-D sequence, giving shape ``(C(dim, degree),)``.
        """
        P = np.asarray(points, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        out = np.zeros((P.shape[0], comb(self.dim, self.degree)))
        for col, I in enumerate(multi_indices(self.dim, self.degree)):
            if I in self.coeffs:
                out[:, col] = self.coeffs[I].eval_many(P)
        return out[0] if single else out

    def on_vectors(self, point: Sequence[float], vectors: Sequence[Sequence[float]]) -> float:
        """Multilinear action on ``degree`` vectors at ``point`` (determinant expansion)."""
        V = np.asarray(vectors, dtype=float).reshape(self.degree, self.dim)
        total = 0.0
        for I, c in self.coeffs.items():
            minor = V[:, [i - 1 for i in I]]
            total += c(*point) * (np.linalg.det(minor) if self.degree else 1.0)
        return float(total)

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "degree": self.degree,
            "coeffs": {",".join(map(str, I)): str(c) for I, c in self.coeffs.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DifferentialForm":
        dim, degree = int(data["dim"]), int(data["degree"])
        coeffs = {}
        for key, text in data.get("coeffs", {}).items():
            I = tuple(int(s) for s in key.split(",") if s.strip())
            coeffs[I] = parse(str(text), dim)
        return cls(dim, degree, coeffs)

    def __repr__(self):
        if not self.coeffs:
            return f"DifferentialForm(dim={self.dim}, degree={self.degree}, 0)"
        terms = []
        for I, c in self.coeffs.items():
            name = "^".join(f"dx{i}" for i in I) or "1"
            terms.append(f"({c})*{name}")
        return f"DifferentialForm(dim={self.dim}, degree={self.degree}, {' + '.join(terms)})"


class VectorField:
    __slots__ = ("dim", "components")

    def __init__(self, components: Sequence):
        dim = len(components)
        comps = []
        for c in components:
            if isinstance(c, str):
                c = parse(c, dim)
            elif not isinstance(c, ScalarExpr):
                c = const(float(c), dim)
            if c.dim != dim:
                raise ValueError("component count must equal the ambient dimension")
            comps.append(c)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "components", tuple(comps))

    def __setattr__(self, name, value):
        raise AttributeError("VectorField is immutable")

    @classmethod
    def coordinate(cls, i: int, dim: int) -> "VectorField":
        """The coordinate field d/dx_i."""
        return cls([1.0 if j == i else 0.0 for j in range(1, dim + 1)])

    def to_list(self) -> list[str]:
        return [str(c) for c in self.components]


# -- constructors


def basis(I: Sequence[int], dim: int) -> DifferentialForm:
    """The basis form dx_I (sorted, with the permutation sign applied)."""
    I = tuple(int(i) for i in I)
    if len(set(I)) != len(I):
        return DifferentialForm(dim, len(I))
    order = sorted(range(len(I)), key=lambda k: I[k])
    inv = sum(1 for a in range(len(order)) for b in range(a + 1, len(order)) if order[a] > order[b])
    sign = -1.0 if inv % 2 else 1.0
    return DifferentialForm(dim, len(I), {tuple(sorted(I)): sign})


def zero_form(dim: int, degree: int) -> DifferentialForm:
    return DifferentialForm(dim, degree)


def scalar_form(f, dim: int) -> DifferentialForm:
    return DifferentialForm(dim, 0, {(): f})


def one_form(components: Sequence) -> DifferentialForm:
    """1-form sum_i components[i] dx_{i+1}."""
    dim = len(components)
    return DifferentialForm(dim, 1, {(i + 1,): c for i, c in enumerate(components)})


# -- operations


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    n, k = a.dim, a.degree + b.degree
    if k > n:
        # forms of degree > n vanish; represent as an empty top form
        return DifferentialForm(n, n)
    out: dict = {}
    for I, ca in a.coeffs.items():
        for J, cb in b.coeffs.items():
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            term = ca * cb
            if _merge_sign(I, J) < 0:
                term = -term
            out[K] = out[K] + term if K in out else term
    return DifferentialForm(n, k, out)


def d(a: DifferentialForm) -> DifferentialForm:
    """Exterior derivative; for a top-degree form returns the empty top form."""
    n = a.dim
    if a.degree == n:
        return DifferentialForm(n, n)
    out: dict = {}
    for I, c in a.coeffs.items():
        for j in range(1, n + 1):
            if j in I:
                continue
            dc = c.diff(j)
            if dc.is_zero:
                continue
            if sum(1 for i in I if i < j) % 2:
                dc = -dc
            K = tuple(sorted(I + (j,)))
            out[K] = out[K] + dc if K in out else dc
    return DifferentialForm(n, a.degree + 1, out)


def interior(X: VectorField, a: DifferentialForm) -> DifferentialForm:
    """Contraction X _| a in the first slot."""
    if X.dim != a.dim:
        raise ValueError(f"dimension mismatch: {X.dim} vs {a.dim}")
    if a.degree == 0:
        raise ValueError("cannot contract a 0-form")
    out: dict = {}
    for I, c in a.coeffs.items():
        for m, i in enumerate(I):
            comp = X.components[i - 1]
            if comp.is_zero:
                continue
            term = comp * c
            if m % 2:
                term = -term
            K = I[:m] + I[m + 1 :]
            out[K] = out[K] + term if K in out else term
    return DifferentialForm(a.dim, a.degree - 1, out)


def frobenius_residual(omega: DifferentialForm) -> DifferentialForm:
    """omega ^ d(omega) for a 1-form; vanishing certifies complete integrability."""
    if omega.degree != 1:
        raise ValueError("frobenius_residual needs a 1-form")
    return wedge(omega, d(omega))


# -- numerical zero testing


def sample_points(box: Sequence[Sequence[float]], n: int = N_SAMPLES) -> np.ndarray:
    """Deterministic low-discrepancy (unscrambled Halton) sample of a box.

    The first Halton point sits on the box corner, so the sequence is
    started one step in.
    """
    box = np.asarray(box, dtype=float)
    sampler = qmc.Halton(d=len(box), scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(n)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def max_abs(a: DifferentialForm, points) -> float:
    if not a.coeffs:
        return 0.0
    return float(np.max(np.abs(a.evaluate_at(points))))


def is_zero(a: DifferentialForm, box, tol: float = ZERO_TOL, n: int = N_SAMPLES) -> bool:
    """Numerical zero test: max |coefficient| over the sample of ``box`` <= tol."""
    return max_abs(a, sample_points(box, n)) <= tol

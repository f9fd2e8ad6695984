"""Integration domains and deterministic quadrature.

Top-degree forms are integrated over :class:`Region` objects (an
axis-aligned box, optionally clipped by axis-aligned half-spaces and
punctured by thin tubes around coordinate subspaces) with composite
tensor Gauss-Legendre rules.  Forms of degree p are integrated over
weighted chains of affine p-simplices with a collapsed (Duffy) Gauss
rule.

All reductions go through :func:`math.fsum` over per-cell partial sums
taken in a fixed order, so a result never depends on how the work was
batched.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from .exterior import DifferentialForm, multi_indices
from .symexpr import ScalarExpr

__all__ = [
    "Box",
    "Clip",
    "Puncture",
    "Region",
    "Simplex",
    "Chain",
    "QuadratureSpec",
    "LadderResult",
    "integrate_region",
    "integrate_region_ladder",
    "integrate_chain",
    "boundary_chain",
    "box_intersection",
    "parallelogram_chain",
    "polyline_chain",
]

Box = tuple  # ((a1, b1), ..., (an, bn))

_CHUNK_NODES = 200_000


def _as_box(box) -> tuple[tuple[float, float], ...]:
    out = tuple((float(a), float(b)) for a, b in box)
    if not out:
        raise ValueError("box must have at least one axis")
    return out


def box_intersection(a, b):
    """Intersection of two boxes, or None if it has no interior."""
    out = []
    for (a0, a1), (b0, b1) in zip(a, b):
        lo, hi = max(a0, b0), min(a1, b1)
        if not lo < hi:
            return None
        out.append((lo, hi))
    return tuple(out)


def _box_contains(outer, inner) -> bool:
    return all(o0 <= i0 and i1 <= o1 for (o0, o1), (i0, i1) in zip(outer, inner))


@dataclass(frozen=True)
class Clip:
    """Half-space ``x_axis <= value`` (side '<=') or ``x_axis >= value`` (side '>=')."""

    axis: int
    side: str
    value: float

    def __post_init__(self):
        if self.side not in ("<=", ">="):
            raise ValueError(f"clip side must be '<=' or '>=', got {self.side!r}")


@dataclass(frozen=True)
class Puncture:
    """Exclusion of the closed radius-``radius`` tube around ``{x_i = c_i for i in fixed}``."""

    fixed: tuple[tuple[int, float], ...]
    radius: float

    def __init__(self, fixed: Mapping[int, float] | Sequence, radius: float):
        items = fixed.items() if isinstance(fixed, Mapping) else fixed
        items = tuple(sorted((int(i), float(v)) for i, v in items))
        if not items:
            raise ValueError("a puncture must fix at least one coordinate")
        if not radius > 0:
            raise ValueError("puncture radius must be positive")
        object.__setattr__(self, "fixed", items)
        object.__setattr__(self, "radius", float(radius))

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.fixed)

    def distance_bounds(self, cell) -> tuple[float, float]:
        lo2 = hi2 = 0.0
        for i, c in self.fixed:
            a, b = cell[i - 1]
            near = 0.0 if a <= c <= b else min(abs(a - c), abs(b - c))
            far = max(abs(a - c), abs(b - c))
            lo2 += near * near
            hi2 += far * far
        return math.sqrt(lo2), math.sqrt(hi2)

    def distance(self, P: np.ndarray) -> np.ndarray:
        s = 0.0
        for i, c in self.fixed:
            s = s + (P[:, i - 1] - c) ** 2
        return np.sqrt(s)


@dataclass(frozen=True)
class Region:
    box: tuple
    clips: tuple = ()
    punctures: tuple = ()

    def __init__(self, box, clips: Sequence[Clip] = (), punctures: Sequence[Puncture] = ()):
        box = _as_box(box)
        for a, b in box:
            if not a < b:
                raise ValueError(f"degenerate box axis ({a}, {b})")
        for c in clips:
            if not 1 <= c.axis <= len(box):
                raise ValueError(f"clip axis {c.axis} outside 1..{len(box)}")
        for p in punctures:
            if any(not 1 <= i <= len(box) for i in p.axes):
                raise ValueError("puncture axis outside the region's dimension")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "clips", tuple(clips))
        object.__setattr__(self, "punctures", tuple(punctures))

    @property
    def dim(self) -> int:
        return len(self.box)

    def clipped_box(self):
        """The box after applying all clips (clips are axis-aligned), or None if empty."""
        box = [list(ab) for ab in self.box]
        for c in self.clips:
            lo, hi = box[c.axis - 1]
            if c.side == "<=":
                hi = min(hi, c.value)
            else:
                lo = max(lo, c.value)
            box[c.axis - 1] = [lo, hi]
        if any(not lo < hi for lo, hi in box):
            return None
        return tuple((lo, hi) for lo, hi in box)

    def to_dict(self) -> dict:
        return {
            "box": [list(ab) for ab in self.box],
            "clips": [{"axis": c.axis, "side": c.side, "value": c.value} for c in self.clips],
            "punctures": [
                {"fixed": {str(i): v for i, v in p.fixed}, "radius": p.radius} for p in self.punctures
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Region":
        clips = [Clip(int(c["axis"]), c["side"], float(c["value"])) for c in data.get("clips", [])]
        punctures = [
            Puncture({int(k): float(v) for k, v in p["fixed"].items()}, float(p["radius"]))
            for p in data.get("punctures", [])
        ]
        return cls(data["box"], clips, punctures)


def default_ladder(eps0: float = 0.25, rungs: int = 7) -> tuple[float, ...]:
    return tuple(eps0 * 2.0**-k for k in range(rungs))


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature knobs.

    ``cells_per_axis`` and ``gauss_order`` drive region integration (the
    grid spans the part of the region that meets the test form's support).
    ``simplex_cells`` subdivides each collapsed simplex coordinate.
    """

    cells_per_axis: int = 16
    gauss_order: int = 6
    epsilon_ladder: tuple = field(default_factory=default_ladder)
    simplex_cells: int = 2
    max_depth: int = 4

    def __post_init__(self):
        object.__setattr__(self, "epsilon_ladder", tuple(float(e) for e in self.epsilon_ladder))
        if self.cells_per_axis < 1 or self.gauss_order < 1 or self.simplex_cells < 1:
            raise ValueError("quadrature parameters must be positive")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        lad = self.epsilon_ladder
        if any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad, lad[1:])):
            raise ValueError("epsilon_ladder must be positive and strictly decreasing")

    def to_dict(self) -> dict:
        return {
            "cells_per_axis": self.cells_per_axis,
            "gauss_order": self.gauss_order,
            "epsilon_ladder": list(self.epsilon_ladder),
            "simplex_cells": self.simplex_cells,
            "max_depth": self.max_depth,
        }


@lru_cache(maxsize=None)
def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@lru_cache(maxsize=None)
def _tensor_rule(dim: int, order: int):
    """Gauss-Legendre tensor nodes on [0,1]^dim, lexicographic."""
    x, w = _gauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([math.prod(t) for t in itertools.product(w, repeat=dim)])
    return nodes, weights


def _split(cell, axes):
    """Dyadic split of ``cell`` along ``axes``; children in lexicographic order."""
    halves = []
    for i, (a, b) in enumerate(cell):
        if i + 1 in axes:
            m = 0.5 * (a + b)
            halves.append(((a, m), (m, b)))
        else:
            halves.append(((a, b),))
    return [tuple(c) for c in itertools.product(*halves)]


def _leaf_cells(box, q: QuadratureSpec, punctures: Sequence[Puncture], radius: float | None):
    """Yield (cell, needs_mask) in deterministic lexicographic order."""
    edges = [np.linspace(a, b, q.cells_per_axis + 1) for a, b in box]
    axes = tuple(sorted({i for p in punctures for i in p.axes}))

    def classify(cell):
        straddle = False
        for p in punctures:
            r = p.radius if radius is None else radius
            lo, hi = p.distance_bounds(cell)
            if hi <= r:
                return "inside"
            if lo < r:
                straddle = True
        return "straddle" if straddle else "outside"

    def visit(cell, depth):
        kind = classify(cell)
        if kind == "inside":
            return
        if kind == "outside":
            yield cell, False
        elif depth >= q.max_depth:
            yield cell, True
        else:
            for child in _split(cell, axes):
                yield from visit(child, depth + 1)

    for idx in itertools.product(range(q.cells_per_axis), repeat=len(box)):
        cell = tuple((float(edges[j][k]), float(edges[j][k + 1])) for j, k in enumerate(idx))
        yield from visit(cell, 0)


def _top_coefficient(omega: DifferentialForm) -> ScalarExpr | None:
    n = omega.dim
    return omega.coeffs.get(tuple(range(1, n + 1)))


def _integrate_cells(f: ScalarExpr, cells, q, punctures, radius) -> float:
    n = f.dim
    nodes, weights = _tensor_rule(n, q.gauss_order)
    m = len(weights)
    partial: list[float] = []
    batch: list = []

    def flush():
        if not batch:
            return
        lo = np.array([[a for a, _ in c] for c, _ in batch])
        hi = np.array([[b for _, b in c] for c, _ in batch])
        h = hi - lo
        vol = np.prod(h, axis=1)
        P = (lo[:, None, :] + nodes[None, :, :] * h[:, None, :]).reshape(-1, n)
        keep = np.ones(P.shape[0], dtype=bool)
        masked = np.repeat(np.array([mk for _, mk in batch]), m)
        if masked.any():
            for p in punctures:
                r = p.radius if radius is None else radius
                keep &= ~(masked & (p.distance(P) <= r))
        vals = np.zeros(P.shape[0])
        if keep.all():
            vals = f.eval_many(P)
        elif keep.any():
            vals[keep] = f.eval_many(P[keep])
        sums = (vals.reshape(-1, m) * weights[None, :]).sum(axis=1) * vol
        partial.extend(sums.tolist())
        batch.clear()

    per_batch = max(1, _CHUNK_NODES // m)
    for item in cells:
        batch.append(item)
        if len(batch) >= per_batch:
            flush()
    flush()
    return math.fsum(partial)


def _integrate_fixed(omega, region: Region, q: QuadratureSpec, support, radius) -> float:
    f = _top_coefficient(omega)
    if f is None:
        return 0.0
    box = region.clipped_box()
    if box is None:
        return 0.0
    if support is not None:
        box = box_intersection(box, _as_box(support))
        if box is None:
            return 0.0
    cells = _leaf_cells(box, q, region.punctures, radius)
    return _integrate_cells(f, cells, q, region.punctures, radius)


@dataclass(frozen=True)
class LadderResult:
    """Raw epsilon-ladder integrals and their extrapolation to eps = 0.

    The error model is ``a + b * eps**order``; ``order`` is estimated from
    the last three rungs and falls back to 1 when the estimate is not
    trustworthy (differences changing sign, or a rate outside 0.5..4).
    """

    eps: tuple
    values: tuple
    extrapolated: float
    previous_extrapolated: float
    order: float = 1.0

    @property
    def stability(self) -> float:
        """Relative change between the last two extrapolations."""
        scale = max(abs(self.extrapolated), 1e-300)
        return abs(self.extrapolated - self.previous_extrapolated) / scale

    @property
    def monotone(self) -> bool:
        dv = np.diff(self.values)
        return bool(np.all(dv >= 0) or np.all(dv <= 0))

    def to_dict(self) -> dict:
        return {
            "eps": list(self.eps),
            "values": list(self.values),
            "order": self.order,
            "extrapolated": self.extrapolated,
            "previous_extrapolated": self.previous_extrapolated,
        }


ORDER_RANGE = (0.5, 4.0)


def _power_limit(e0, v0, e1, v1, p):
    a, b = e0**p, e1**p
    return (a * v1 - b * v0) / (a - b)


def _estimate_order(eps, vals) -> float:
    (e0, e1, e2), (v0, v1, v2) = eps[-3:], vals[-3:]
    d01, d12 = v1 - v0, v2 - v1
    if d01 == 0.0 or d12 == 0.0 or (d01 > 0) != (d12 > 0):
        return 1.0
    target = d01 / d12

    def f(p):
        return (e0**p - e1**p) / (e1**p - e2**p) - target

    lo, hi = ORDER_RANGE
    if f(lo) * f(hi) > 0:
        return 1.0
    return float(brentq(f, lo, hi, xtol=1e-12))


def integrate_region_ladder(
    omega: DifferentialForm, region: Region, q: QuadratureSpec, support=None
) -> LadderResult:
    """Integrate over the region with every puncture radius set to each ladder rung."""
    _check_top(omega, region)
    lad = q.epsilon_ladder
    if len(lad) < 2:
        raise ValueError("epsilon ladder needs at least two rungs")
    vals = tuple(_integrate_fixed(omega, region, q, support, e) for e in lad)
    p = _estimate_order(lad, vals) if len(lad) >= 3 else 1.0
    ext = _power_limit(lad[-2], vals[-2], lad[-1], vals[-1], p)
    if len(lad) >= 4:
        p_prev = _estimate_order(lad[:-1], vals[:-1])
        prev = _power_limit(lad[-3], vals[-3], lad[-2], vals[-2], p_prev)
    elif len(lad) == 3:
        prev = _power_limit(lad[-3], vals[-3], lad[-2], vals[-2], p)
    else:
        prev = ext
    return LadderResult(lad, vals, ext, prev, p)


def _check_top(omega: DifferentialForm, region: Region):
    if omega.dim != region.dim:
        raise ValueError(f"form dim {omega.dim} != region dim {region.dim}")
    if omega.degree != region.dim:
        raise ValueError(f"need a degree-{region.dim} form, got degree {omega.degree}")


def integrate_region(omega: DifferentialForm, region: Region, q: QuadratureSpec, support=None) -> float:
    """Integral of a top-degree form over ``region``.

    ``support`` (a box) restricts the grid to where the integrand can be
    nonzero.  Punctured regions are integrated along the epsilon ladder
    and the extrapolated value is returned; an empty ladder uses the
    punctures' own radii.
    """
    _check_top(omega, region)
    if region.punctures and q.epsilon_ladder:
        return integrate_region_ladder(omega, region, q, support).extrapolated
    return _integrate_fixed(omega, region, q, support, None)


# ---------------------------------------------------------------------------
# simplices and chains


@dataclass(frozen=True)
class Simplex:
    vertices: tuple

    def __init__(self, vertices):
        V = tuple(tuple(float(c) for c in v) for v in vertices)
        if not V:
            raise ValueError("a simplex needs at least one vertex")
        if len({len(v) for v in V}) != 1:
            raise ValueError("vertices must share one ambient dimension")
        if len(V) > 1:
            E = np.array(V[1:]) - np.array(V[0])
            gram = np.linalg.det(E @ E.T)
            scale = max(float(np.max(np.abs(E))), 1.0) ** (2 * len(E))
            if not gram > 1e-24 * scale:
                raise ValueError("simplex vertices are affinely dependent")
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self) -> int:
        return len(self.vertices[0])

    @property
    def degree(self) -> int:
        return len(self.vertices) - 1

    def edges(self) -> np.ndarray:
        V = np.array(self.vertices)
        return (V[1:] - V[0]).T  # (n, p)

    def faces(self) -> list[tuple[int, "Simplex"]]:
        return [
            ((-1) ** i, Simplex(self.vertices[:i] + self.vertices[i + 1 :]))
            for i in range(len(self.vertices))
        ]


class Chain:
    """Formal real combination of oriented affine p-simplices."""

    __slots__ = ("terms",)

    def __init__(self, terms: Sequence[tuple[float, Simplex]] = ()):
        terms = tuple((float(w), s if isinstance(s, Simplex) else Simplex(s)) for w, s in terms)
        if len({s.degree for _, s in terms}) > 1:
            raise ValueError("all simplices in a chain must have the same degree")
        if len({s.dim for _, s in terms}) > 1:
            raise ValueError("all simplices in a chain must share an ambient dimension")
        self.terms = terms

    @property
    def degree(self) -> int | None:
        return self.terms[0][1].degree if self.terms else None

    @property
    def dim(self) -> int | None:
        return self.terms[0][1].dim if self.terms else None

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "Chain") -> "Chain":
        return Chain(self.terms + other.terms)

    def scaled(self, a: float) -> "Chain":
        return Chain([(a * w, s) for w, s in self.terms])

    def simplified(self) -> "Chain":
        """Merge simplices with the same vertex set (tracking orientation); drop zero weights."""
        acc: dict = {}
        for w, s in self.terms:
            order = sorted(range(len(s.vertices)), key=lambda k: s.vertices[k])
            key = tuple(s.vertices[k] for k in order)
            inv = sum(1 for a in range(len(order)) for b in range(a + 1, len(order)) if order[a] > order[b])
            sign = -1.0 if inv % 2 else 1.0
            if key in acc:
                acc[key] = (acc[key][0] + sign * w, acc[key][1])
            else:
                acc[key] = (sign * w, Simplex(key))
        return Chain([(w, s) for w, s in acc.values() if w != 0.0])

    def bounding_box(self):
        V = np.array([v for _, s in self.terms for v in s.vertices])
        return tuple(zip(V.min(axis=0).tolist(), V.max(axis=0).tolist()))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "degree": self.degree,
            "terms": [{"weight": w, "vertices": [list(v) for v in s.vertices]} for w, s in self.terms],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Chain":
        return cls([(float(t.get("weight", 1.0)), Simplex(t["vertices"])) for t in data["terms"]])

    def __repr__(self):
        return f"Chain(degree={self.degree}, {len(self.terms)} simplices)"


def boundary_chain(c: Chain) -> Chain:
    """Alternating-face boundary, with coinciding faces merged."""
    if c.degree is None:
        return Chain()
    if c.degree < 1:
        raise ValueError("the boundary of a 0-chain is not defined")
    faces = [(w * sign, f) for w, s in c.terms for sign, f in s.faces()]
    return Chain(faces).simplified()


def _collapse(nodes: np.ndarray, p: int):
    """Duffy map of unit-cube points to the reference p-simplex, with its Jacobian."""
    lam = np.empty_like(nodes)
    rest = np.ones(nodes.shape[:-1])
    jac = np.ones(nodes.shape[:-1])
    for k in range(p):
        lam[..., k] = rest * nodes[..., k]
        if k < p - 1:
            jac *= (1.0 - nodes[..., k]) ** (p - 1 - k)
        rest = rest * (1.0 - nodes[..., k])
    return lam, jac


@lru_cache(maxsize=8)
def _simplex_cells_rule(p: int, order: int, cells: int):
    """Collapsed Gauss rule on the reference p-simplex, split into cube cells.

    Returns the cell offsets (C, p), the tensor rule on the unit cube and
    the images of each cell's 2^p corners (C, 2^p, p).  The collapse is
    multilinear on each cell, so a cell's image lies in the convex hull
    of its corner images.  Nodes are built per chunk by :func:`_cell_nodes`.
    """
    nodes, weights = _tensor_rule(p, order)
    offs = np.array(list(itertools.product(range(cells), repeat=p)), dtype=float)
    unit = np.array(list(itertools.product((0.0, 1.0), repeat=p)))
    corners, _ = _collapse((offs[:, None, :] + unit[None, :, :]) / cells, p)
    return offs, nodes, weights, corners


def _cell_nodes(rule, ci, cells: int, p: int):
    """Simplex coordinates (K, m, p) and weights (K, m) of the nodes in cells ``ci``.

    Weights include the Duffy Jacobian; over all cells they sum to 1/p!.
    """
    offs, nodes, weights, _ = rule
    lam, jac = _collapse((offs[ci][:, None, :] + nodes[None, :, :]) / cells, p)
    return lam, weights[None, :] * jac / cells**p


def _overlaps(simplex: Simplex, support) -> bool:
    V = np.array(simplex.vertices)
    lo, hi = V.min(axis=0), V.max(axis=0)
    return all(l <= b and h >= a for l, h, (a, b) in zip(lo, hi, support))


def integrate_chain(
    phi: DifferentialForm,
    c: Chain,
    q: QuadratureSpec,
    weight: ScalarExpr | None = None,
    support=None,
) -> float:
    """Integral of a p-form over a weighted p-chain, optionally times a scalar ``weight``.

    Each simplex is parameterized affinely from its first vertex; the
    integrand is phi evaluated on the edge vectors (a constant set of
    minors per simplex) times the scalar coefficient fields at the nodes.
    """
    if not c.terms:
        return 0.0
    if phi.degree != c.degree:
        raise ValueError(f"form degree {phi.degree} != chain degree {c.degree}")
    if phi.dim != c.dim:
        raise ValueError(f"form dim {phi.dim} != chain dim {c.dim}")
    if not phi.coeffs:
        return 0.0
    n, p = phi.dim, phi.degree
    terms = [(w, s) for w, s in c.terms if support is None or _overlaps(s, support)]
    if not terms:
        return 0.0

    if p == 0:
        P = np.array([s.vertices[0] for _, s in terms])
        vals = phi.coeffs[()].eval_many(P)
        if weight is not None:
            vals = vals * weight.eval_many(P)
        return math.fsum((np.array([w for w, _ in terms]) * vals).tolist())

    if p == 1:
        return _integrate_segments(phi, terms, q, weight, support)

    order = q.gauss_order + p // 2  # absorbs the Duffy Jacobian degree
    idx = multi_indices(n, p)
    groups: dict[int, list] = {}
    for w, s in terms:
        groups.setdefault(_simplex_cells(s, q, support), []).append((w, s))
    partial: list[float] = []
    for cells in sorted(groups):
        partial.extend(_integrate_simplices(phi, groups[cells], idx, order, cells, weight, support))
    return math.fsum(partial)


def _simplex_cells(s: Simplex, q: QuadratureSpec, support) -> int:
    """Subdivisions per reference axis sized from the support's grid spacing.

    The collapsed (Duffy) rule loses accuracy near the apex, so curves and
    surfaces use half the region grid spacing. Solid simplices keep the
    region spacing: their cell count grows cubically and the coarser grid
    already stays below 1e-8 on bump integrands.
    """
    if support is None:
        return q.simplex_cells
    refine = 2 if s.degree <= 2 else 1
    h = min(b - a for a, b in support) / (refine * q.cells_per_axis)
    diam = float(np.max(np.abs(s.edges())))
    return max(q.simplex_cells, int(math.ceil(diam / h - 1e-9)))


def _integrate_simplices(phi, terms, idx, order, cells, weight, support) -> list[float]:
    """Per-simplex integrals; rule cells whose image misses ``support`` are skipped."""
    n, p = phi.dim, phi.degree
    rule = _simplex_cells_rule(p, order, cells)
    corners = rule[3]
    C, m = len(corners), len(rule[2])
    V0 = np.array([s.vertices[0] for _, s in terms])  # (S, n)
    E = np.array([s.edges() for _, s in terms])  # (S, n, p)
    minors = {}
    for I in idx:
        if I in phi.coeffs:
            mI = np.linalg.det(E[:, [i - 1 for i in I], :])  # (S,)
            if np.any(mI):
                minors[I] = mI
    # kept (simplex, cell) pairs, ordered by simplex then cell
    if support is None:
        s_idx = np.repeat(np.arange(len(terms)), C)
        c_idx = np.tile(np.arange(C), len(terms))
    else:
        lo = np.array([a for a, _ in support])
        hi = np.array([b for _, b in support])
        s_parts, c_parts = [], []
        block = max(1, _CHUNK_NODES // (C * corners.shape[1]))
        for a in range(0, len(terms), block):
            Pc = V0[a : a + block, None, None, :] + np.einsum("cjk,snk->scjn", corners, E[a : a + block])
            hit = np.all((Pc.min(axis=2) <= hi) & (Pc.max(axis=2) >= lo), axis=2)  # (S_block, C)
            si, ci = np.nonzero(hit)
            s_parts.append(si + a)
            c_parts.append(ci)
        s_idx, c_idx = np.concatenate(s_parts), np.concatenate(c_parts)
    cell_sums = np.zeros(len(s_idx))
    step = max(1, _CHUNK_NODES // m)
    for a in range(0, len(s_idx), step):
        si, ci = s_idx[a : a + step], c_idx[a : a + step]
        lam, qw = _cell_nodes(rule, ci, cells, p)
        P = (V0[si, None, :] + np.einsum("kmp,knp->kmn", lam, E[si])).reshape(-1, n)
        integrand = np.zeros(len(P))
        for I, mI in minors.items():
            integrand += phi.coeffs[I].eval_many(P) * np.repeat(mI[si], m)
        if weight is not None:
            integrand *= weight.eval_many(P)
        cell_sums[a : a + step] = (integrand.reshape(-1, m) * qw).sum(axis=1)
    bounds = np.searchsorted(s_idx, np.arange(len(terms) + 1))
    return [w * math.fsum(cell_sums[bounds[k] : bounds[k + 1]].tolist()) for k, (w, _) in enumerate(terms)]


def _clip_segment(a, b, support):
    """Parameter interval of the segment a + t (b - a) inside ``support`` (Liang-Barsky)."""
    t0, t1 = 0.0, 1.0
    if support is None:
        return t0, t1
    for ai, bi, (lo, hi) in zip(a, b, support):
        di = bi - ai
        if di == 0.0:
            if ai < lo or ai > hi:
                return None
            continue
        s0, s1 = (lo - ai) / di, (hi - ai) / di
        if s0 > s1:
            s0, s1 = s1, s0
        t0, t1 = max(t0, s0), min(t1, s1)
        if t0 >= t1:
            return None
    return t0, t1


def _integrate_segments(phi, terms, q, weight, support) -> float:
    """Segments are clipped to the support, then integrated with a composite rule.

    The clipped span gets twice the density of the region grid per
    simplex cell; bump flanks need it and segments are cheap.
    """
    n = phi.dim
    x, w = _gauss(q.gauss_order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    cells = 2 * q.cells_per_axis * q.simplex_cells
    partial: list[float] = []
    for wt, s in terms:
        a, b = np.array(s.vertices[0]), np.array(s.vertices[1])
        span = _clip_segment(a, b, support)
        if span is None:
            continue
        t0, t1 = span
        edges = np.linspace(t0, t1, cells + 1)
        h = np.diff(edges)
        t = (edges[:-1, None] + x[None, :] * h[:, None]).ravel()
        W = (w[None, :] * h[:, None]).ravel()
        P = a[None, :] + t[:, None] * (b - a)[None, :]
        vals = np.zeros(len(t))
        for (i,), c in phi.coeffs.items():
            if b[i - 1] != a[i - 1]:
                vals += c.eval_many(P) * (b[i - 1] - a[i - 1])
        if weight is not None:
            vals *= weight.eval_many(P)
        sums = (vals * W).reshape(cells, -1).sum(axis=1)
        partial.extend((wt * sums).tolist())
    return math.fsum(partial)


# ---------------------------------------------------------------------------
# chain builders


def parallelogram_chain(origin, u, v, nu: int, nv: int) -> Chain:
    """Triangulated parallelogram origin + s*u + t*v, oriented by (u, v).

    Each of the ``nu * nv`` patches is split into two positively oriented
    triangles.
    """
    o, u, v = (np.asarray(a, dtype=float) for a in (origin, u, v))
    terms = []
    for i in range(nu):
        for j in range(nv):
            p00 = o + (i / nu) * u + (j / nv) * v
            p10 = o + ((i + 1) / nu) * u + (j / nv) * v
            p01 = o + (i / nu) * u + ((j + 1) / nv) * v
            p11 = o + ((i + 1) / nu) * u + ((j + 1) / nv) * v
            terms.append((1.0, Simplex([p00, p10, p11])))
            terms.append((1.0, Simplex([p00, p11, p01])))
    return Chain(terms)


def polyline_chain(points, weight: float = 1.0) -> Chain:
    pts = [tuple(float(c) for c in p) for p in points]
    return Chain([(weight, Simplex([a, b])) for a, b in zip(pts, pts[1:])])

"""Frank's rules for networks of line dislocations with scalar strengths.

A network is a set of oriented polylines with constant strengths a_i in
an open box.  Its dislocation current is D = sum_i a_i T_{L_i}; both
rules follow from dD = 0:

* branching: at every interior node the signed strength sum vanishes
  (+a for an edge that starts there, -a for one that ends there);
* constancy: a line current with a non-constant weight u has
  dT_{uL}[f] = -int_L f du != 0 for some bump f.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .currents import TestForm, boundary, chain_current, evaluate
from .geometry import QuadratureSpec, Region, polyline_chain
from .symexpr import ScalarExpr, parse

__all__ = [
    "Edge",
    "DislocationNetwork",
    "NetworkError",
    "RuleReport",
    "boundary_eval",
    "check_rules",
    "constancy_residuals",
]

BOUNDARY_TOL = 1e-9
BRANCH_TOL = 1e-12
CONSTANCY_TOL = 1e-9


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    polyline: tuple
    strength: float
    weight: ScalarExpr | None = None  # optional non-constant strength field along the line

    def __init__(self, polyline, strength: float, weight: ScalarExpr | None = None):
        pts = tuple(tuple(float(c) for c in p) for p in polyline)
        if len(pts) < 2:
            raise NetworkError("an edge polyline needs at least two points")
        object.__setattr__(self, "polyline", pts)
        object.__setattr__(self, "strength", float(strength))
        object.__setattr__(self, "weight", weight)

    @property
    def start(self):
        return self.polyline[0]

    @property
    def end(self):
        return self.polyline[-1]

    def reversed(self) -> "Edge":
        """Same line traversed backwards with the strength negated."""
        return Edge(self.polyline[::-1], -self.strength, self.weight)


class DislocationNetwork:
    def __init__(self, domain, nodes: Sequence[Sequence[float]], edges: Sequence[Edge]):
        self.domain = tuple((float(a), float(b)) for a, b in domain)
        self.nodes = [tuple(float(c) for c in p) for p in nodes]
        self.edges = list(edges)
        self._validate()

    @property
    def dim(self) -> int:
        return len(self.domain)

    def boundary_distance(self, p) -> float:
        return min(min(c - a, b - c) for c, (a, b) in zip(p, self.domain))

    def is_interior(self, p) -> bool:
        return self.boundary_distance(p) > BOUNDARY_TOL

    def node_index(self, p) -> int | None:
        for k, nd in enumerate(self.nodes):
            if math.dist(nd, p) <= BOUNDARY_TOL:
                return k
        return None

    def _validate(self):
        for k, e in enumerate(self.edges):
            for p in e.polyline:
                if len(p) != self.dim:
                    raise NetworkError(f"edge {k}: point {p} has wrong dimension")
                if self.boundary_distance(p) < -BOUNDARY_TOL:
                    raise NetworkError(f"edge {k}: point {p} lies outside the domain")
            for p in (e.start, e.end):
                if self.node_index(p) is None and self.is_interior(p):
                    raise NetworkError(f"edge {k}: dangling endpoint {p} (neither a node nor on the boundary)")

    def node_sums(self) -> list[float]:
        """Signed strength sum at every listed node (+ start, - end)."""
        sums = [[] for _ in self.nodes]
        for e in self.edges:
            i, j = self.node_index(e.start), self.node_index(e.end)
            if i is not None:
                sums[i].append(e.strength)
            if j is not None:
                sums[j].append(-e.strength)
        return [math.fsum(s) for s in sums]

    def to_dict(self) -> dict:
        edges = []
        for e in self.edges:
            item = {"polyline": [list(p) for p in e.polyline], "strength": e.strength}
            if e.weight is not None:
                item["u"] = str(e.weight)
            edges.append(item)
        return {
            "domain": {"box": [list(ab) for ab in self.domain]},
            "nodes": [list(p) for p in self.nodes],
            "edges": edges,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DislocationNetwork":
        dom = data["domain"]
        box = Region.from_dict(dom).box if isinstance(dom, Mapping) else dom
        dim = len(box)
        edges = [
            Edge(e["polyline"], e.get("strength", 1.0), parse(e["u"], dim) if e.get("u") else None)
            for e in data["edges"]
        ]
        return cls(box, data.get("nodes", []), edges)


def boundary_eval(net: DislocationNetwork, f: TestForm) -> float:
    """dD[f] = sum_i a_i (f(end_i) - f(start_i)) for a bump 0-form f.

    The line integral of df telescopes, so only endpoint values enter.
    """
    if f.degree != 0:
        raise ValueError("boundary_eval needs a 0-form")
    for (a, b), (s0, s1) in zip(net.domain, f.support):
        if not (a < s0 and s1 < b):
            raise ValueError(f"test form support {f.support} touches the domain boundary")
    g = f.form.coefficient(())
    terms = []
    for e in net.edges:
        fe, fs = g(*e.end), g(*e.start)
        for p, v in ((e.start, fs), (e.end, fe)):
            if not net.is_interior(p) and v != 0.0:
                raise ValueError(f"test form does not vanish at boundary point {p}")
        terms.append(e.strength * (fe - fs))
    return math.fsum(terms)


@dataclass
class RuleReport:
    node_sums: list
    interior_nodes: list
    edge_constancy: list = field(default_factory=list)  # (edge index, max |dT_uL[f]|, constant?)
    branch_tol: float = BRANCH_TOL
    constancy_tol: float = CONSTANCY_TOL

    @property
    def branching_ok(self) -> bool:
        return all(abs(s) <= self.branch_tol for s, inner in zip(self.node_sums, self.interior_nodes) if inner)

    @property
    def constancy_ok(self) -> bool:
        return all(c for _, _, c in self.edge_constancy)

    @property
    def verdict(self) -> str:
        if not self.branching_ok:
            return "violates-branching"
        if not self.constancy_ok:
            return "violates-constancy"
        return "consistent"

    @property
    def max_node_residual(self) -> float:
        vals = [abs(s) for s, inner in zip(self.node_sums, self.interior_nodes) if inner]
        return max(vals, default=0.0)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "node_sums": list(self.node_sums),
            "interior_nodes": list(self.interior_nodes),
            "max_node_residual": self.max_node_residual,
            "edge_constancy": [
                {"edge": k, "residual": r, "constant": c} for k, r, c in self.edge_constancy
            ],
        }


def _edge_probes(e: Edge, radius: float, n: int) -> list[TestForm]:
    P = np.asarray(e.polyline)
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    margin = min(2 * radius, 0.25 * total)
    probes = []
    for s in np.linspace(margin, total - margin, n):
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        c = P[k] + (s - cum[k]) * (P[k + 1] - P[k]) / seg[k]
        probes.append(TestForm.bump(tuple(float(v) for v in c), radius))
    return probes


def constancy_residuals(
    e: Edge, probes: Sequence[TestForm], q: QuadratureSpec | None = None
) -> list[float]:
    """dT_{uL}[f] = T_{uL}[df] for each probe, with u the edge's weight field times its strength."""
    q = q or QuadratureSpec()
    u = e.weight if e.weight is not None else None
    T = chain_current(polyline_chain(e.polyline, e.strength), weight=u)
    D = boundary(T)
    return [evaluate(D, f, q) for f in probes]


def check_rules(
    net: DislocationNetwork,
    u_per_edge: Mapping[int, ScalarExpr] | None = None,
    q: QuadratureSpec | None = None,
    probes: Mapping[int, Sequence[TestForm]] | None = None,
    probe_radius: float = 0.2,
    n_probes: int = 3,
    constancy_tol: float = CONSTANCY_TOL,
) -> RuleReport:
    """Branching sums at interior nodes plus constancy checks on weighted edges.

    ``u_per_edge`` supplies a strength field for selected edges (edge
    weights already on the network are used too); each is probed with
    bumps along the edge, or with the caller's ``probes``.
    """
    sums = net.node_sums()
    interior = [net.is_interior(p) for p in net.nodes]
    report = RuleReport(sums, interior, constancy_tol=constancy_tol)
    fields = {k: e.weight for k, e in enumerate(net.edges) if e.weight is not None}
    fields.update(u_per_edge or {})
    for k in sorted(fields):
        e = net.edges[k]
        e = Edge(e.polyline, e.strength, fields[k])
        fs = (probes or {}).get(k) or _edge_probes(e, probe_radius, n_probes)
        res = max(abs(v) for v in constancy_residuals(e, fs, q))
        report.edge_constancy.append((k, res, res <= constancy_tol))
    return report

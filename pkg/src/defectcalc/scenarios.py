"""Worked examples: layering currents with known dislocation currents.

Every constructor returns a :class:`Scenario` whose ``current`` is built
from atoms and whose ``expected_boundary`` computes dT[probe] by an
independent route (a closed form, a 1-D line integral, or an integral
over the interface), so the two can be compared probe by probe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .currents import Current, TestForm, boundary, chain_current, evaluate, form_current, linear_combine
from .defects import bump_mass
from .exterior import DifferentialForm, basis, d, max_abs, one_form, sample_points, wedge
from .geometry import (
    Clip,
    Puncture,
    QuadratureSpec,
    Region,
    integrate_region,
    parallelogram_chain,
)
from . import symexpr as S
from .symexpr import ScalarExpr, atan2, bump, coords, parse

__all__ = [
    "Scenario",
    "edge_dislocation",
    "open_book_2d",
    "open_book_3d",
    "screw_dislocation",
    "interface_coherence",
    "broken_leaves",
    "broken_leaves_sequence",
    "leaf_current",
    "limit_oracle",
    "helicoid_check",
    "line_integral",
    "SCENARIOS",
]

CUBE = ((-1.0, 1.0),) * 3
SQUARE = ((-1.0, 1.0),) * 2


@dataclass
class Scenario:
    name: str
    dim: int
    current: Current
    expected_boundary: Callable[..., float] | None = None
    default_probe: TestForm | None = None
    notes: str = ""
    extras: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)  # a small fixed sweep, default_probe first

    @property
    def dislocation(self) -> Current:
        return boundary(self.current)


def line_integral(psi: TestForm, start, direction, length: float, panels: int = 64, order: int = 10) -> float:
    """Integral of a 1-form along the straight segment start + t*direction, t in [0, length].

    Composite Gauss-Legendre on the part of the segment inside the probe's
    support box; ``direction`` must be a unit vector.
    """
    a = np.asarray(start, dtype=float)
    u = np.asarray(direction, dtype=float)
    t0, t1 = 0.0, float(length)
    for ai, ui, (lo, hi) in zip(a, u, psi.support):
        if ui == 0.0:
            if not lo <= ai <= hi:
                return 0.0
            continue
        s0, s1 = sorted(((lo - ai) / ui, (hi - ai) / ui))
        t0, t1 = max(t0, s0), min(t1, s1)
    if t0 >= t1:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(t0, t1, panels + 1)
    h = np.diff(edges)
    t = ((edges[:-1, None] + edges[1:, None]) / 2 + x[None, :] * h[:, None] / 2).ravel()
    W = (w[None, :] * h[:, None] / 2).ravel()
    P = a[None, :] + t[:, None] * u[None, :]
    vals = np.zeros(len(t))
    for (i,), c in psi.form.coeffs.items():
        if u[i - 1] != 0.0:
            vals += c.eval_many(P) * u[i - 1]
    return math.fsum((vals * W).tolist())


def edge_dislocation(patches: int = 32) -> Scenario:
    """Half-plane h = {x = 0, z <= 0} in the cube; dT_h = T_L with L the y-axis.

    h is oriented by (d/dz, d/dy) so that its boundary inside the cube is
    L traversed in +y.
    """
    h = parallelogram_chain((0.0, -1.0, -1.0), (0.0, 0.0, 1.0), (0.0, 2.0, 0.0), patches, patches)
    T = chain_current(h, domain=CUBE)

    def expected(psi: TestForm, q: QuadratureSpec | None = None) -> float:
        return line_integral(psi, (0.0, -1.0, 0.0), (0.0, 1.0, 0.0), 2.0)

    probe = TestForm.bump((0.0, 0.2, 0.0), 0.3, I=(2,))
    sweep = [
        probe,
        TestForm.bump((0.05, -0.4, 0.1), 0.25, components={(1,): "y", (2,): "1 + x", (3,): "z"}),
        TestForm.bump((0.0, 0.0, 0.0), 0.3, I=(1,)),
        TestForm.bump((0.7, 0.0, 0.0), 0.2, I=(2,)),
    ]
    return Scenario(
        "edge-dislocation", 3, T, expected, probe,
        notes="removed half-plane; boundary is the y-axis line with unit strength",
        extras={"line": [(0.0, -1.0, 0.0), (0.0, 1.0, 0.0)], "strength": 1.0},
        probes=sweep,
    )


def _dtheta(dim: int) -> DifferentialForm:
    X = coords(dim)
    x, y = X[0], X[1]
    r2 = x**2 + y**2
    comps = [-y / r2, x / r2] + [0.0] * (dim - 2)
    return one_form(comps)


def open_book_2d() -> Scenario:
    """d(theta) on the punctured square; its boundary is 2*pi times the Dirac delta at 0."""
    region = Region(SQUARE, punctures=[Puncture({1: 0.0, 2: 0.0}, 0.25)])
    T = form_current(_dtheta(2), region, SQUARE)

    def expected(beta: TestForm, q: QuadratureSpec | None = None) -> float:
        return 2 * math.pi * beta.form.coefficient(())(0.0, 0.0)

    x, y = coords(2)
    probe = TestForm(DifferentialForm(2, 0, {(): bump(0.5, x, y)}), [(-0.5, 0.5)] * 2)
    sweep = [
        probe,
        TestForm.bump((0.1, -0.05), 0.3, poly="1 + x - 2*y"),
        TestForm.bump((0.5, 0.5), 0.3),
    ]
    return Scenario("open-book-2d", 2, T, expected, probe, notes="rays from the origin", probes=sweep)


def _axis_integral(gamma: TestForm, panels: int = 64, order: int = 10) -> float:
    return line_integral(gamma, (0.0, 0.0, -1.0), (0.0, 0.0, 1.0), 2.0, panels, order)


def open_book_3d() -> Scenario:
    """d(theta) in the cube minus the z-axis; dT = 2*pi * (current of the z-axis)."""
    region = Region(CUBE, punctures=[Puncture({1: 0.0, 2: 0.0}, 0.25)])
    T = form_current(_dtheta(3), region, CUBE)

    def expected(gamma: TestForm, q: QuadratureSpec | None = None) -> float:
        return 2 * math.pi * _axis_integral(gamma)

    probe = TestForm.bump((0.0, 0.0, 0.0), 0.5, I=(3,))
    sweep = [
        probe,
        TestForm.bump((0.1, -0.1, 0.3), 0.4, components={(3,): "1 + z", (1,): "y"}),
        TestForm.bump((0.0, 0.0, -0.2), 0.3, components={(1,): 1.0, (2,): "x"}),
    ]
    return Scenario(
        "open-book-3d", 3, T, expected, probe,
        notes="pages of an open book with the spine on the z-axis",
        extras={"line": [(0.0, 0.0, -1.0), (0.0, 0.0, 1.0)], "strength": 2 * math.pi},
        probes=sweep,
    )


def screw_dislocation(a: float = 1.0) -> Scenario:
    """Open book plus a * T_dz; same boundary as the open book since dz is closed."""
    book = open_book_3d()
    twist = form_current(basis((3,), 3), Region(CUBE), CUBE)
    S = linear_combine([(1.0, book.current), (a, twist)]) if a != 0.0 else book.current
    return Scenario(
        "screw-dislocation", 3, S, book.expected_boundary, book.default_probe,
        notes="helicoidal layers theta + a z = const",
        extras={"a": a, "open_book": book.current, "line": book.extras["line"], "strength": 2 * math.pi},
        probes=book.probes,
    )


def helicoid_check(a: float, level: float = 0.3, n: int = 64) -> dict:
    """Sample the helicoid theta + a z = level and test it against phi = d(theta) + a dz.

    Returns the max deviation of theta + a z from ``level`` (mod 2 pi) and
    the max |phi(tangent)| over both surface tangents.
    """
    rho = np.linspace(0.1, 0.9, n)
    z = np.linspace(-0.9, 0.9, n)
    R, Z = np.meshgrid(rho, z, indexing="ij")
    th = level - a * Z
    P = np.stack([R * np.cos(th), R * np.sin(th), Z], axis=-1).reshape(-1, 3)
    X = coords(3)
    psi = atan2(X[1], X[0]) + a * X[2]
    dev = psi.eval_many(P) - level
    dev = np.abs(np.arctan2(np.sin(dev), np.cos(dev)))
    phi = _dtheta(3) + a * basis((3,), 3)
    F = phi.evaluate_at(P)
    th = th.reshape(-1)
    t_rho = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=1)
    t_z = np.stack([a * R.reshape(-1) * np.sin(th), -a * R.reshape(-1) * np.cos(th), np.ones_like(th)], axis=1)
    tang = max(np.max(np.abs(np.sum(F * t_rho, axis=1))), np.max(np.abs(np.sum(F * t_z, axis=1))))
    return {"level_deviation": float(np.max(dev)), "tangent_residual": float(tang)}


def _as_form(f, dim=3) -> DifferentialForm:
    if isinstance(f, DifferentialForm):
        return f
    if isinstance(f, Mapping):
        return DifferentialForm.from_dict(f)
    return one_form([parse(c, dim) if isinstance(c, str) else c for c in f])


def interface_coherence(f_plus, f_minus) -> Scenario:
    """Layering f+ above the plane z = 0 and f- below it.

    ``expected_boundary`` uses the split into an interface term over
    Sigma with the jump f+ - f- plus interior terms with d f+ and d f-.
    """
    fp, fm = _as_form(f_plus), _as_form(f_minus)
    upper = Region(CUBE, clips=[Clip(3, ">=", 0.0)])
    lower = Region(CUBE, clips=[Clip(3, "<=", 0.0)])
    T = linear_combine([(1.0, form_current(fp, upper, CUBE)), (1.0, form_current(fm, lower, CUBE))])
    jump = fp - fm
    sigma = Region(SQUARE)

    def expected(psi: TestForm, q: QuadratureSpec | None = None) -> float:
        q = q or QuadratureSpec()
        # pull jump ^ psi back to z = 0: keep the dx^dy coefficient, set z = 0
        c = wedge(jump, psi.form).coefficient((1, 2))
        x, y = coords(2)
        c2 = _restrict_to_plane(c)
        s = integrate_region(DifferentialForm(2, 2, {(1, 2): c2}), sigma, q, psi.support[:2])
        s += integrate_region(wedge(d(fp), psi.form), upper, q, psi.support)
        s += integrate_region(wedge(d(fm), psi.form), lower, q, psi.support)
        return s

    P = sample_points(SQUARE, 256)
    P3 = np.column_stack([P, np.zeros(len(P))])
    jumps = jump.evaluate_at(P3)
    Pu = sample_points(((-1, 1), (-1, 1), (0, 1)))
    Pl = sample_points(((-1, 1), (-1, 1), (-1, 0)))
    extras = {
        "jump_max": [float(v) for v in np.max(np.abs(jumps), axis=0)],
        "interior_residual_plus": max_abs(d(fp), Pu),
        "interior_residual_minus": max_abs(d(fm), Pl),
    }
    extras["coherent"] = extras["jump_max"][0] <= 1e-9 and extras["jump_max"][1] <= 1e-9
    probe = TestForm.bump((0.0, 0.0, 0.0), 0.3, I=(1,))
    sweep = [probe, TestForm.bump((0.1, 0.0, 0.1), 0.3, I=(2,)), TestForm.bump((0.0, 0.2, 0.5), 0.3, I=(2,))]
    return Scenario("interface-coherence", 3, T, expected, probe, notes="interface at z = 0", extras=extras,
                    probes=sweep)


def _restrict_to_plane(c: ScalarExpr) -> ScalarExpr:
    """c(x, y, 0) as a 2-D expression."""
    def sub(node: S.Node) -> S.Node:
        if isinstance(node, S.Var):
            return S.Const(0.0) if node.index == 3 else node
        return _rebuild(node, sub)

    return ScalarExpr(sub(c.node), 2)


def _rebuild(node, f):
    if isinstance(node, (S.Const, S.Var)):
        return node
    if isinstance(node, S.Binary):
        return type(node)(f(node.a), f(node.b))
    if isinstance(node, S.Neg):
        return S.Neg(f(node.a))
    if isinstance(node, S.Pow):
        return S.Pow(f(node.a), node.n)
    if isinstance(node, S.Func):
        return S.Func(node.name, f(node.a))
    if isinstance(node, S.Atan2):
        return S.Atan2(f(node.y), f(node.x))
    if isinstance(node, S.Bump):
        return S.Bump(node.r, [f(e) for e in node.args], node.k)
    raise TypeError(node)


# -- broken leaves

MAX_LEVEL = 30


def _cutoff(i: int) -> tuple[ScalarExpr, float]:
    """Unit-mass bump in z supported on [-2^-i, 2^-i]."""
    w = 2.0**-i
    z = coords(3)[2]
    return bump(w, z) * (1.0 / bump_mass(w, 1)), w


def leaf_current(i: int) -> Current:
    """T_i[phi] = int alpha_i ^ phi with alpha_i = (1 - c_i) dy + c_i dz.

    The slab |z| <= 2^-i where c_i lives is its own atom, so the grid
    always resolves the cutoff.
    """
    if not 1 <= i <= MAX_LEVEL:
        raise ValueError(f"level {i} outside 1..{MAX_LEVEL}: the cutoff would be below quadrature resolution")
    c, w = _cutoff(i)
    dy, dz = basis((2,), 3), basis((3,), 3)
    alpha_i = (1.0 - c) * dy + c * dz
    core = Region(CUBE, clips=[Clip(3, ">=", -w), Clip(3, "<=", w)])
    above = Region(CUBE, clips=[Clip(3, ">=", w)])
    below = Region(CUBE, clips=[Clip(3, "<=", -w)])
    return linear_combine([
        (1.0, form_current(alpha_i, core, CUBE)),
        (1.0, form_current(dy, above, CUBE)),
        (1.0, form_current(dy, below, CUBE)),
    ])


def broken_leaves(i_max: int = 6, alpha: DifferentialForm | None = None, beta: DifferentialForm | None = None,
                  patches: int = 32) -> Scenario:
    """T[phi] = int_Sigma phi + int alpha ^ phi with Sigma = {z = 0}, plus the sequence T_i.

    ``expected_boundary`` is int d(alpha) ^ psi (Sigma is closed as a
    current).  Extras report the strong condition d(alpha) = 0 and, for
    the supplied beta, the weak conditions d(alpha) = beta ^ alpha
    everywhere and beta = 0 on Sigma.
    """
    if not 1 <= i_max <= MAX_LEVEL:
        raise ValueError(f"i_max must be in 1..{MAX_LEVEL}")
    alpha = alpha if alpha is not None else basis((2,), 3)
    sigma = parallelogram_chain((-1.0, -1.0, 0.0), (2.0, 0.0, 0.0), (0.0, 2.0, 0.0), patches, patches)
    T = linear_combine([(1.0, chain_current(sigma, domain=CUBE)), (1.0, form_current(alpha, Region(CUBE), CUBE))])

    def expected(psi: TestForm, q: QuadratureSpec | None = None) -> float:
        return integrate_region(wedge(d(alpha), psi.form), Region(CUBE), q or QuadratureSpec(), psi.support)

    P = sample_points(CUBE)
    S = sample_points(SQUARE)
    S3 = np.column_stack([S, np.zeros(len(S))])
    extras = {
        "i_max": i_max,
        "sequence": [leaf_current(i) for i in range(1, i_max + 1)],
        "sigma": sigma,
        "alpha": alpha,
        "beta": beta,
        "strong_residual": max_abs(d(alpha), P),
    }
    if beta is not None:
        extras["weak_interior_residual"] = max_abs(d(alpha) - wedge(beta, alpha), P)
        extras["weak_sigma_residual"] = max_abs(beta, S3)
    extras["sequence_probe"] = TestForm.bump((0.1, -0.1, 0.05), 0.4, I=(1, 2))
    probe = TestForm.bump((0.1, -0.1, 0.05), 0.4, I=(1,))
    sweep = [probe, TestForm.bump((0.0, 0.0, 0.0), 0.3, components={(2,): "x", (3,): 1.0})]
    return Scenario("broken-leaves", 3, T, expected, probe, notes="leaves broken along z = 0", extras=extras,
                    probes=sweep)


def limit_oracle(phi: TestForm, alpha: DifferentialForm | None = None, q: QuadratureSpec | None = None,
                 include_dxdz: bool = False) -> float:
    """int_Sigma phi + int alpha ^ phi by direct quadrature (Sigma oriented by dx^dy).

    With ``include_dxdz`` the extra interface term int_Sigma phi_13 that
    the sequence T_i also produces is added.
    """
    q = q or QuadratureSpec()
    alpha = alpha if alpha is not None else basis((2,), 3)
    c12 = _restrict_to_plane(phi.form.coefficient((1, 2)))
    s = integrate_region(DifferentialForm(2, 2, {(1, 2): c12}), Region(SQUARE), q, phi.support[:2])
    if include_dxdz:
        c13 = _restrict_to_plane(phi.form.coefficient((1, 3)))
        s += integrate_region(DifferentialForm(2, 2, {(1, 2): c13}), Region(SQUARE), q, phi.support[:2])
    return s + integrate_region(wedge(alpha, phi.form), Region(CUBE), q, phi.support)


def broken_leaves_sequence(phi: TestForm, i_values, q: QuadratureSpec | None = None) -> dict:
    """T_i[phi] for each level, the Cauchy increments and their successive ratios."""
    q = q or QuadratureSpec()
    vals = [evaluate(leaf_current(i), phi, q) for i in i_values]
    inc = [abs(b - a) for a, b in zip(vals, vals[1:])]
    ratios = [a / b if b else math.inf for a, b in zip(inc, inc[1:])]
    # increments shrink ~4x per level (c_i is even), so extrapolate with that rate
    limit = vals[-1] + (vals[-1] - vals[-2]) / 3.0 if len(vals) >= 2 else vals[-1]
    return {"levels": list(i_values), "values": vals, "increments": inc, "ratios": ratios, "limit": limit}


SCENARIOS = {
    "edge-dislocation": edge_dislocation,
    "open-book-2d": open_book_2d,
    "open-book-3d": open_book_3d,
    "screw-dislocation": screw_dislocation,
    "interface-coherence": lambda A=2.0, B=5.0, layering="horizontal": interface_coherence(
        *(([0, 0, A], [0, 0, B]) if layering == "horizontal" else ([0, A, 0], [0, B, 0]))
    ),
    "broken-leaves": broken_leaves,
}

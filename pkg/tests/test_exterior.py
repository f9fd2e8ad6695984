import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectcalc.exterior import (
    DifferentialForm,
    VectorField,
    basis,
    d,
    frobenius_residual,
    interior,
    is_zero,
    max_abs,
    multi_indices,
    one_form,
    sample_points,
    wedge,
)
from defectcalc.symexpr import parse

from .conftest import points_in, polynomial_text

BOX3 = [(-1.0, 1.0)] * 3
P3 = points_in(BOX3, 50, seed=11)


def dx(i, n=3):
    return basis((i,), n)


@st.composite
def poly_forms(draw, dim=3, degree=None):
    k = draw(st.integers(0, dim)) if degree is None else degree
    coeffs = {}
    for I in multi_indices(dim, k):
        if draw(st.booleans()):
            coeffs[I] = draw(polynomial_text(dim, max_terms=3, max_power=2))
    return DifferentialForm(dim, k, coeffs)


@st.composite
def vector_fields(draw, dim=3):
    return VectorField([draw(polynomial_text(dim, max_terms=2, max_power=2)) for _ in range(dim)])


def close(a, b, rel=1e-9):
    A, B = a.evaluate_at(P3), b.evaluate_at(P3)
    scale = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    return float(np.max(np.abs(A - B))) <= rel * scale


def test_multi_indices_are_increasing():
    for k in range(4):
        idx = multi_indices(3, k)
        assert idx == list(itertools.combinations(range(1, 4), k))
    assert multi_indices(3, 0) == [()]


def test_wedge_examples():
    assert wedge(dx(1), dx(2)).coefficient((1, 2))(0, 0, 0) == 1
    assert wedge(dx(2), dx(1)).coefficient((1, 2))(0, 0, 0) == -1
    assert wedge(basis((1, 2), 3), dx(1)).is_structurally_zero
    w = wedge(parse("z", 3) * dx(1) + dx(2), basis((3, 1), 3))
    assert w.degree == 3
    assert w.coefficient((1, 2, 3))(0.3, -0.2, 0.9) == 1


def test_wedge_determinant_oracle():
    a = one_form(["z", "1", "0"])
    b = basis((3, 1), 3)
    w = wedge(a, b)
    p = (0.4, -0.7, 0.2)
    E = np.eye(3)
    # (a^b)(e1,e2,e3) by alternating sum over shuffles: a(u) b(v, w) - a(v) b(u, w) + a(w) b(u, v)
    u, v, t = E
    val = (
        a.on_vectors(p, [u]) * b.on_vectors(p, [v, t])
        - a.on_vectors(p, [v]) * b.on_vectors(p, [u, t])
        + a.on_vectors(p, [t]) * b.on_vectors(p, [u, v])
    )
    assert w.on_vectors(p, E) == pytest.approx(val, abs=1e-15)
    assert val == pytest.approx(1.0)


def test_wedge_beyond_top_degree_is_zero():
    w = wedge(basis((1, 2), 3), basis((1, 3), 3))
    assert w.is_structurally_zero


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        wedge(basis((1,), 2), basis((1,), 3))


def test_d_examples():
    assert d(parse("x", 3) * dx(2)).coefficient((1, 2))(0.1, 0.2, 0.3) == 1
    X = parse("x", 3)
    Y = parse("y", 3)
    r2 = X**2 + Y**2
    dtheta = one_form([-Y / r2, X / r2, 0])
    P = points_in(BOX3, 256, seed=2)
    P = P[np.hypot(P[:, 0], P[:, 1]) > 0.05]
    assert max_abs(d(dtheta), P) <= 1e-9
    om = one_form(["x*y", "x^2", "1"])
    dom = d(om)
    for p in P3[:10]:
        assert dom.coefficient((1, 2))(*p) == pytest.approx(p[0], abs=1e-14)
    assert d(basis((1, 2, 3), 3)).is_structurally_zero


def test_interior_examples():
    ex, ey = VectorField.coordinate(1, 2), VectorField.coordinate(2, 2)
    a = basis((1, 2), 2)
    assert interior(ex, a).coefficient((2,))(0, 0) == 1
    assert interior(ey, a).coefficient((1,))(0, 0) == -1
    X = VectorField(["y", "0", "0"])
    r = interior(X, basis((1, 2, 3), 3))
    assert r.coefficient((2, 3))(1, 2, 3) == 2
    with pytest.raises(ValueError):
        interior(X, DifferentialForm(3, 0, {(): "1"}))


def test_interior_multilinear_oracle():
    X = VectorField(["y", "x*z", "1 - x"])
    a = DifferentialForm(3, 2, {(1, 2): "x + y", (1, 3): "z^2", (2, 3): "1"})
    p = (0.3, -0.5, 0.8)
    Xp = np.array([c(*p) for c in X.components])
    ia = interior(X, a)
    for v in np.eye(3):
        assert ia.on_vectors(p, [v]) == pytest.approx(a.on_vectors(p, [Xp, v]), abs=1e-14)


def test_frobenius_residual_of_planar_layering():
    # omega = f dx + g dy + dz gives omega ^ d omega = (g_x - f_y) dx^dy^dz
    f, g = "x*y^2 - 3*x", "sin(x*y)"
    om = one_form([f, g, "1"])
    r = frobenius_residual(om)
    expected = parse("y*cos(x*y) - 2*x*y", 3)
    for p in P3:
        assert r.coefficient((1, 2, 3))(*p) == pytest.approx(expected(*p), abs=1e-14)
    assert not is_zero(r, BOX3)
    closed = one_form(["2*x*y + 1", "x^2 - y", "1"])
    assert is_zero(d(closed), BOX3)
    assert is_zero(frobenius_residual(closed), BOX3)


def test_frobenius_examples():
    assert is_zero(frobenius_residual(dx(3)), BOX3)
    r = frobenius_residual(one_form(["z", "1", "0"]))
    assert r.coefficient((1, 2, 3))(0.2, 0.1, -0.4) == 1


def test_form_json_round_trip():
    a = DifferentialForm(3, 2, {(1, 3): "x*bump(0.5; y, z)", (2, 3): "-1.5"})
    b = DifferentialForm.from_dict(a.to_dict())
    assert np.array_equal(a.evaluate_at(P3), b.evaluate_at(P3))


def test_sample_points_deterministic():
    assert np.array_equal(sample_points(BOX3), sample_points(BOX3))
    P = sample_points([(0, 2), (-1, 0)])
    assert P.shape == (256, 2)
    assert P[:, 0].min() >= 0 and P[:, 0].max() <= 2


@settings(max_examples=100)
@given(poly_forms())
def test_d_squared_vanishes(a):
    if a.degree >= 2:
        return
    assert max_abs(d(d(a)), P3) <= 1e-12


@settings(max_examples=60)
@given(poly_forms(), poly_forms())
def test_leibniz(a, b):
    sign = -1 if a.degree % 2 else 1
    lhs = d(wedge(a, b))
    rhs = wedge(d(a), b) + sign * wedge(a, d(b))
    assert close(lhs, rhs)


@settings(max_examples=60)
@given(vector_fields(), poly_forms(), poly_forms())
def test_interior_antiderivation(X, a, b):
    if a.degree == 0 and b.degree == 0:
        return
    sign = -1 if a.degree % 2 else 1
    ab = wedge(a, b)
    if ab.degree == 0:
        return
    lhs = interior(X, ab)
    ia = interior(X, a) if a.degree else DifferentialForm(3, 0)
    ib = interior(X, b) if b.degree else DifferentialForm(3, 0)
    parts = []
    if a.degree:
        parts.append(wedge(ia, b))
    if b.degree:
        parts.append(sign * wedge(a, ib))
    rhs = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    assert close(lhs, rhs)


@settings(max_examples=60)
@given(poly_forms(), poly_forms(), poly_forms())
def test_wedge_associative_and_graded_commutative(a, b, c):
    assert close(wedge(wedge(a, b), c), wedge(a, wedge(b, c)))
    sign = -1 if (a.degree * b.degree) % 2 else 1
    assert close(wedge(a, b), sign * wedge(b, a))

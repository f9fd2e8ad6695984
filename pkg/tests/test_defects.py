import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectcalc.currents import TestForm, boundary, evaluate, form_current
from defectcalc.defects import (
    ProbeFamily,
    bump_mass,
    chain_localization,
    classify_layering,
    closedness_scan,
    line_strength_fit,
    solve_beta_pointwise,
    weak_frobenius_check,
)
from defectcalc.exterior import DifferentialForm, basis, d, frobenius_residual, one_form, scalar_form
from defectcalc.geometry import QuadratureSpec, Region
from defectcalc.scenarios import edge_dislocation
from defectcalc.symexpr import parse

from .conftest import points_in, polynomial_text

CUBE = [(-1.0, 1.0)] * 3
SMALL = [(-0.5, 0.5), (-0.2, 0.2), (-0.5, 0.5)]


def test_bump_mass_matches_direct_quadrature():
    x = np.linspace(-1, 1, 200001)
    t = 1 - x**2
    f = np.where(t > 0, np.exp(1 - 1 / np.where(t > 0, t, 1)), 0.0)
    assert bump_mass(1.0, 1) == pytest.approx(np.trapezoid(f, x), rel=1e-8)
    assert bump_mass(0.5, 2) == pytest.approx(bump_mass(1.0, 2) * 0.25, rel=1e-12)


def test_probe_family_grid():
    fam = ProbeFamily(SMALL, 1, radius=0.15, pitch=0.25)
    assert len(fam.centers) == 9 and len(fam) == 27
    for p in fam:
        for c, (a, b), (s0, s1) in zip(p.center, SMALL, p.test_form.support):
            assert a <= s0 and s1 <= b
    with pytest.raises(ValueError):
        ProbeFamily(SMALL, 4)
    assert len(ProbeFamily.at([(0, 0, 0), (0.1, 0, 0)], 2, 0.2)) == 6


def test_scan_closed_layering():
    T = form_current(one_form(["2*x*y", "x^2", "1"]), Region(CUBE))
    rep = closedness_scan(T, ProbeFamily(SMALL, 1, 0.15, 0.25))
    assert rep.verdict == "closed"
    assert rep.localization == []
    assert rep.max_residual <= 1e-9


def test_scan_localizes_edge_dislocation():
    sc = edge_dislocation()
    rep = closedness_scan(sc.current, ProbeFamily(SMALL, 1, 0.15, 0.25))
    assert rep.verdict == "defective"
    # the boundary is the y-axis; only probes touching it may respond
    for c in rep.localization:
        assert math.hypot(c[0], c[2]) < 0.15
    assert (0.0, 0.0, 0.0) in rep.localization
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "probe_center_x1,probe_center_x2,probe_center_x3,multiindex,value,normalized"
    assert len(csv_text.splitlines()) == len(rep.values) + 1


def test_scan_degree_mismatch():
    T = form_current(basis((3,), 3), Region(CUBE))
    with pytest.raises(ValueError):
        closedness_scan(T, ProbeFamily(SMALL, 2))


def test_line_fit_edge_and_homogeneity():
    sc = edge_dislocation()
    line = sc.extras["line"]
    fit = line_strength_fit(sc.current, line, n_stations=3)
    assert fit.mean == pytest.approx(1.0, abs=1e-6)
    assert fit.constant
    fit3 = line_strength_fit(3.0 * sc.current, line, n_stations=3)
    assert np.allclose(fit3.strengths, 3.0 * np.asarray(fit.strengths), rtol=1e-12)


def test_line_fit_off_the_defect_sees_nothing():
    sc = edge_dislocation()
    fit = line_strength_fit(sc.current, [(0.6, -1.0, 0.0), (0.6, 1.0, 0.0)], n_stations=3)
    assert max(abs(s) for s in fit.strengths) <= 1e-9
    with pytest.raises(ValueError):
        line_strength_fit(sc.current, [(0.0, 0.0, 0.0), (0.0, 0.1, 0.0)], n_stations=3)


def test_weak_frobenius_with_zero_beta_is_the_scan():
    sc = edge_dislocation()
    fam = ProbeFamily([(-0.3, 0.3), (-0.2, 0.2), (-0.3, 0.3)], 1, 0.15, 0.15)
    scan = closedness_scan(sc.current, fam)
    frob = weak_frobenius_check(sc.current, DifferentialForm(3, 1, {}), fam)
    assert frob.residual == scan.max_residual
    assert frob.verdict == "non-integrable"


def test_weak_frobenius_smooth_example():
    # d(e^x dy) = dx ^ e^x dy
    T = form_current(one_form(["0", "exp(x)", "0"]), Region(CUBE))
    fam = ProbeFamily([(-0.4, 0.4)] * 3, 1, 0.2, 0.4)
    q = QuadratureSpec(cells_per_axis=8, gauss_order=16)
    good = weak_frobenius_check(T, basis((1,), 3), fam, q)
    assert good.verdict == "weak-integrable" and good.beta_closed
    bad = weak_frobenius_check(T, basis((2,), 3), fam, q)
    assert bad.verdict == "non-integrable"
    with pytest.raises(ValueError):
        weak_frobenius_check(T, basis((1, 2), 3), fam)


def test_solve_beta_examples():
    om = one_form(["0", "exp(x)", "0"])
    P = points_in(CUBE, 20)
    sol = solve_beta_pointwise(om, P)
    assert sol.success
    assert np.allclose(sol.beta, [[1.0, 0.0, 0.0]] * 20, atol=1e-12)
    bad = solve_beta_pointwise(one_form(["z", "1", "0"]), P)
    assert not bad.success and len(bad.failures) == 20
    assert np.all(np.isnan(bad.beta))
    with pytest.raises(ValueError):
        solve_beta_pointwise(one_form(["x", "0", "0"]), [(0.0, 0.3, 0.1)])


@settings(max_examples=25)
@given(polynomial_text(3, 3, 2), polynomial_text(3, 3, 2))
def test_integrable_forms_have_beta(F, h):
    # omega = e^h dF is integrable, and beta = dh solves d(omega) = beta ^ omega
    Fe, he = parse(F, 3), parse(h, 3)
    dF = d(scalar_form(Fe, 3))
    om = DifferentialForm(3, 1, {I: c * parse(f"exp({h})", 3) for I, c in dF.coeffs.items()})
    P = points_in(CUBE, 12, seed=3)
    W = om.evaluate_at(P)
    keep = np.linalg.norm(W, axis=1) > 1e-6
    if not keep.any():
        return
    sol = solve_beta_pointwise(om, P[keep])
    assert sol.success
    dh = d(scalar_form(he, 3)).evaluate_at(P[keep])
    # beta is unique modulo omega: remove the omega component of dh
    Wk = W[keep]
    proj = dh - (np.sum(dh * Wk, axis=1) / np.sum(Wk * Wk, axis=1))[:, None] * Wk
    assert np.allclose(sol.beta, proj, atol=1e-7 * (1 + np.abs(proj).max()))


@settings(max_examples=30)
@given(polynomial_text(3), polynomial_text(3))
def test_classify_exact_and_frobenius_forms(f, g):
    exact = d(scalar_form(parse(f, 3), 3))
    if exact.coeffs:
        c = classify_layering(exact, CUBE)
        assert c["closed"] and c["integrable"]
    # omega ^ d(omega) = (g_x - f_y + g f_z - f g_z) dx^dy^dz for omega = f dx + g dy + dz
    om = one_form([f, g, "1"])
    F, G = parse(f, 3), parse(g, 3)
    P = points_in(CUBE, 64, seed=5)
    want = (G.diff(1) - F.diff(2) + G * F.diff(3) - F * G.diff(3)).eval_many(P)
    got = frobenius_residual(om).coefficient((1, 2, 3)).eval_many(P)
    assert np.allclose(got, want, atol=1e-9 * (1 + np.abs(want).max()))
    c = classify_layering(om, CUBE)
    assert c["integrable"] == (c["frobenius_residual"] <= 1e-9)


def test_classify_z_dx_plus_dy():
    c = classify_layering(one_form(["z", "1", "0"]), CUBE)
    assert not c["closed"] and not c["integrable"]


def test_chain_localization_groups_lines():
    a = [(0.0, y, 0.0) for y in np.linspace(-0.5, 0.5, 6)]
    b = [(0.8, 0.8, z) for z in (-0.2, 0.0, 0.2)]
    chains = chain_localization(a + b, max_gap=0.25)
    assert sorted(len(c) for c in chains) == [3, 6]


@settings(max_examples=10)
@given(st.floats(0.1, 0.35), st.floats(-0.3, 0.3))
def test_dislocation_is_linear_in_the_layering(r, y0):
    sc = edge_dislocation()
    psi = TestForm.bump((0.0, y0, 0.0), r, I=(2,))
    q = QuadratureSpec()
    v = evaluate(boundary(sc.current), psi, q)
    assert evaluate(boundary(-2.0 * sc.current), psi, q) == pytest.approx(-2.0 * v, rel=1e-12)
    assert v == pytest.approx(sc.expected_boundary(psi), abs=1e-6)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectcalc.currents import TestForm, boundary, chain_current, evaluate, linear_combine
from defectcalc.exterior import DifferentialForm
from defectcalc.franks import (
    DislocationNetwork,
    Edge,
    NetworkError,
    boundary_eval,
    check_rules,
    constancy_residuals,
)
from defectcalc.geometry import polyline_chain
from defectcalc.scenarios import line_integral
from defectcalc.symexpr import parse

CUBE = [(-1.0, 1.0)] * 3
ENDS = [(0.0, 0.0, 1.0), (0.8, 0.0, -1.0), (-1.0, 0.3, -0.5)]


def y_junction(strengths):
    # every edge starts at the node and runs to the boundary
    edges = [Edge([(0.0, 0.0, 0.0), (p[0] / 2, p[1] / 2, p[2] / 2), p], a) for p, a in zip(ENDS, strengths)]
    return DislocationNetwork(CUBE, [(0.0, 0.0, 0.0)], edges)


def network_current(net):
    return linear_combine([(e.strength, chain_current(polyline_chain(e.polyline), domain=net.domain))
                           for e in net.edges])


def test_branching_rule():
    ok = check_rules(y_junction((1.0, 2.0, -3.0)))
    assert ok.verdict == "consistent" and ok.node_sums == [0.0]
    bad = check_rules(y_junction((1.0, 2.0, -2.0)))
    assert bad.verdict == "violates-branching"
    assert bad.max_node_residual == pytest.approx(1.0, abs=1e-9)


def test_boundary_eval_sign_convention():
    # edges leave the node: dD[f] = -f(node) * sum of strengths
    f = TestForm.bump((0.0, 0.0, 0.0), 0.4)
    assert boundary_eval(y_junction((1.0, 2.0, -3.0)), f) == 0.0
    assert boundary_eval(y_junction((1.0, 2.0, -2.0)), f) == pytest.approx(-1.0, abs=1e-12)


def test_boundary_eval_rejects_bad_probes():
    net = y_junction((1.0, 2.0, -3.0))
    with pytest.raises(ValueError):
        boundary_eval(net, TestForm.bump((0.0, 0.0, 0.0), 0.3, I=(1,)))
    with pytest.raises(ValueError):
        boundary_eval(net, TestForm.bump((0.0, 0.0, 0.8), 0.3))


@settings(max_examples=50)
@given(st.tuples(*[st.floats(-0.5, 0.5)] * 3), st.floats(0.1, 0.45), st.tuples(*[st.floats(-3, 3)] * 3))
def test_boundary_eval_matches_current_route(center, r, strengths):
    net = y_junction(strengths)
    f = TestForm.bump(center, r, poly="1 + x - y*z")
    direct = boundary_eval(net, f)
    via_current = evaluate(boundary(network_current(net)), f)
    assert via_current == pytest.approx(direct, abs=1e-8 * (1 + sum(map(abs, strengths))))


def test_reversing_an_edge_changes_nothing():
    net = y_junction((1.0, 2.0, -3.0))
    flipped = DislocationNetwork(CUBE, net.nodes, [net.edges[0].reversed()] + net.edges[1:])
    f = TestForm.bump((0.1, 0.0, 0.1), 0.4)
    assert boundary_eval(flipped, f) == pytest.approx(boundary_eval(net, f), abs=1e-15)
    assert check_rules(flipped).verdict == "consistent"


def test_single_line_through_the_box_is_consistent():
    net = DislocationNetwork(CUBE, [], [Edge([(0.0, -1.0, 0.0), (0.0, 1.0, 0.0)], 1.0)])
    assert check_rules(net).verdict == "consistent"
    assert boundary_eval(net, TestForm.bump((0.0, 0.1, 0.0), 0.4)) == 0.0


def test_dangling_endpoint_is_rejected():
    with pytest.raises(NetworkError):
        DislocationNetwork(CUBE, [], [Edge([(0.0, -1.0, 0.0), (0.0, 0.2, 0.0)], 1.0)])
    with pytest.raises(NetworkError):
        DislocationNetwork(CUBE, [], [Edge([(0.0, -1.0, 0.0), (0.0, 1.5, 0.0)], 1.0)])
    with pytest.raises(NetworkError):
        Edge([(0.0, 0.0, 0.0)], 1.0)


def test_constancy_rule():
    line = [(0.0, -1.0, 0.0), (0.0, 1.0, 0.0)]
    probes = [TestForm.bump((0.0, y, 0.0), 0.3, poly="1 + y") for y in (-0.4, 0.0, 0.35)]
    const = constancy_residuals(Edge(line, 1.0, parse("1", 3)), probes)
    assert max(map(abs, const)) <= 1e-9
    res = constancy_residuals(Edge(line, 1.0, parse("y", 3)), probes)
    # oracle: dT_{uL}[f] = -int_L f du, here du = dy along L
    for f, v in zip(probes, res):
        g = TestForm(DifferentialForm(3, 1, {(2,): f.form.coefficient(())}), f.support)
        oracle = -line_integral(g, line[0], (0.0, 1.0, 0.0), 2.0)
        assert v == pytest.approx(oracle, abs=1e-6)
        assert abs(v) > 1e-3


def test_check_rules_reports_violated_constancy():
    net = DislocationNetwork(CUBE, [], [Edge([(0.0, -1.0, 0.0), (0.0, 1.0, 0.0)], 1.0, parse("y", 3))])
    rep = check_rules(net)
    assert rep.verdict == "violates-constancy"
    k, res, const = rep.edge_constancy[0]
    assert k == 0 and not const and res > 1e-3
    assert rep.to_dict()["edge_constancy"][0]["constant"] is False


def test_network_round_trip():
    net = y_junction((1.0, 2.0, -3.0))
    back = DislocationNetwork.from_dict(net.to_dict())
    assert back.to_dict() == net.to_dict()
    assert math.isclose(sum(back.node_sums()), 0.0, abs_tol=1e-15)
    assert np.allclose(back.edges[1].polyline, net.edges[1].polyline)

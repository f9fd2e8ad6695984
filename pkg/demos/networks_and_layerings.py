"""Frank's rules for dislocation networks, then three layering checks.

Run:  python demos/networks_and_layerings.py
"""

from defectcalc.currents import TestForm
from defectcalc.defects import ProbeFamily, classify_layering, closedness_scan
from defectcalc.exterior import one_form
from defectcalc.franks import DislocationNetwork, Edge, boundary_eval, check_rules
from defectcalc.scenarios import SCENARIOS, broken_leaves, broken_leaves_sequence, limit_oracle

CUBE = [(-1.0, 1.0)] * 3
ENDS = [(0.0, 0.0, 1.0), (0.8, 0.0, -1.0), (-1.0, 0.3, -0.5)]


def y_junction(strengths):
    # all three edges leave the node at the origin and end on the cube faces
    return DislocationNetwork(CUBE, [(0.0, 0.0, 0.0)], [Edge([(0.0, 0.0, 0.0), p], a) for p, a in zip(ENDS, strengths)])


f = TestForm.bump((0.0, 0.0, 0.0), 0.4)
for s in [(1.0, 2.0, -3.0), (1.0, 2.0, -2.0)]:
    net = y_junction(s)
    rep = check_rules(net)
    print(f"Y-junction {s}: {rep.verdict}, node residual {rep.max_node_residual}, dD[f] = {boundary_eval(net, f):+.3f}")

# Interface between two layerings glued along z = 0.
print()
for layering in ("horizontal", "vertical"):
    sc = SCENARIOS["interface-coherence"](layering=layering)
    rep = closedness_scan(sc.current, ProbeFamily([(-0.3, 0.3), (-0.3, 0.3), (-0.6, 0.6)], 1, 0.15, 0.15))
    zs = sorted({round(c[2], 3) for c in rep.localization})
    print(f"interface, {layering} layers: {rep.verdict}; flagged heights z = {zs}")

# Closed versus integrable layering forms.
print()
for coeffs in (["2*x*y", "x^2", "1"], ["0", "exp(x)", "0"], ["z", "1", "0"], ["0", "x", "1"]):
    c = classify_layering(one_form(coeffs), CUBE)
    print(f"omega = {coeffs}: closed {c['closed']}, integrable {c['integrable']}")

# Broken leaves: a sequence of smooth layerings converging to a defect-free limit.
phi = broken_leaves().extras["sequence_probe"]
seq = broken_leaves_sequence(phi, range(2, 7))
print("\nbroken leaves T_i[phi]:", [round(v, 6) for v in seq["values"]])
print("increment ratios:", [round(r, 2) for r in seq["ratios"]])
print(f"extrapolated limit {seq['limit']:.8f}, oracle {limit_oracle(phi):.8f}")

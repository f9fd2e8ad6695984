"""Edge and screw dislocations as boundaries of layering currents.

Run:  python demos/dislocations.py
"""

from defectcalc.currents import TestForm, evaluate
from defectcalc.defects import ProbeFamily, closedness_scan, line_strength_fit
from defectcalc.scenarios import edge_dislocation, open_book_3d, screw_dislocation

# Edge dislocation: an extra half-plane of layers ending on the y-axis.
edge = edge_dislocation()
print("edge dislocation: dT_h[psi] against the line integral over L")
for psi in edge.probes:
    print(f"  {evaluate(edge.dislocation, psi):+.8f}   {edge.expected_boundary(psi):+.8f}")

# Scan a probe lattice and see where the boundary lives.
rep = closedness_scan(edge.current, ProbeFamily([(-0.5, 0.5), (-0.2, 0.2), (-0.5, 0.5)], 1, 0.15, 0.25))
print(f"\nscan verdict: {rep.verdict}; flagged centres:")
for c in rep.localization:
    print("  ", tuple(round(x, 3) for x in c))

fit = line_strength_fit(edge.current, edge.extras["line"], n_stations=5)
print(f"line strengths along L: {[round(s, 6) for s in fit.strengths]} (constant: {fit.constant})")

# Screw dislocation: helicoidal layers theta + a z = const.  The twist a*dz
# is closed, so the boundary is that of the open book whatever a is.
book = open_book_3d()
psi = TestForm.bump((0.05, -0.05, 0.1), 0.35, components={(3,): "1 + z", (1,): "y"})
ref = evaluate(book.dislocation, psi)
print(f"\nopen book dT[psi] = {ref:+.8f}")
for a in (0.0, 0.5, 2.0):
    v = evaluate(screw_dislocation(a).dislocation, psi)
    print(f"  screw a = {a:<4} dS[psi] = {v:+.8f}   diff {abs(v - ref):.1e}")
print(f"  2*pi * int_axis psi = {book.expected_boundary(psi):+.8f}")

"""Open book: the angle form d(theta) on a punctured domain.

In the plane, d(theta) is closed away from the origin but its current is
not: the boundary is 2*pi times the Dirac mass at 0.  In 3-D the same
form, with the z-axis removed, has the whole axis as its boundary.

Run:  python demos/open_book.py
"""

import math

from defectcalc.currents import TestForm, evaluate
from defectcalc.scenarios import line_integral, open_book_2d, open_book_3d

# --- plane -------------------------------------------------------------------
book = open_book_2d()
ladders = []
value = evaluate(book.dislocation, book.default_probe, ladders=ladders)
lad = ladders[0]
print("2-D open book, probe = unit-peak bump at the origin")
for eps, v in zip(lad.eps, lad.values):
    print(f"  eps = {eps:<6g} raw dT[beta] = {v:.8f}")
print(f"  extrapolated (order p = {lad.order:.2f}): {value:.8f}   2*pi = {2 * math.pi:.8f}")

# a probe away from the origin sees nothing
far = book.probes[2]
print(f"  probe supported away from 0: {evaluate(book.dislocation, far):.2e}")

# --- space -------------------------------------------------------------------
book3 = open_book_3d()
print("\n3-D open book, dT = 2*pi * (current of the z-axis)")
for psi in book3.probes:
    got = evaluate(book3.dislocation, psi)
    oracle = 2 * math.pi * line_integral(psi, (0, 0, -1), (0, 0, 1), 2.0)
    print(f"  dT[psi] = {got:+.6f}   2*pi*int_axis psi = {oracle:+.6f}")

# moving the probe off the axis switches the response off
off = TestForm.bump((0.6, 0.0, 0.0), 0.3, I=(3,))
print(f"  off-axis probe: {evaluate(book3.dislocation, off):.2e}")

"""Acceptance gate: one function per criterion, each reported as a PASS/FAIL line.

Run with pytest (lines appear in the terminal summary) or directly as
``python tests/test_acceptance.py``.
"""

import json
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from defectcalc.currents import TestForm, boundary, chain_current, evaluate
from defectcalc.defects import ProbeFamily, classify_layering, closedness_scan
from defectcalc.exterior import DifferentialForm, d, frobenius_residual, multi_indices, one_form, sample_points
from defectcalc.franks import DislocationNetwork, Edge, check_rules, constancy_residuals
from defectcalc.geometry import Chain, Simplex, boundary_chain
from defectcalc.scenarios import (
    SCENARIOS,
    broken_leaves,
    broken_leaves_sequence,
    edge_dislocation,
    limit_oracle,
    line_integral,
    open_book_2d,
    open_book_3d,
    screw_dislocation,
)
from defectcalc.symexpr import parse

try:
    from .conftest import ACCEPTANCE, acceptance_line
except ImportError:  # run as a script
    from conftest import ACCEPTANCE, acceptance_line

CUBE = [(-1.0, 1.0)] * 3
ENDS = [(0.0, 0.0, 1.0), (0.8, 0.0, -1.0), (-1.0, 0.3, -0.5)]

# raw numbers of each run, compared bytewise by the determinism criterion
PAYLOADS: dict = {}


def _poly(rng, names=("x", "y", "z")) -> str:
    c = rng.uniform(-1, 1, 4)
    a, b = names[0], names[1 % len(names)]
    last = names[-1]
    return f"{c[0]:.6f} + {c[1]:.6f}*{a} + {c[2]:.6f}*{b}*{last} + {c[3]:.6f}*{a}^2"


def _random_bumps(seed, n, degree, center_box, radii=(0.15, 0.4)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c = tuple(float(rng.uniform(a, b)) for a, b in center_box)
        r = float(rng.uniform(*radii))
        comps = {I: _poly(rng) for I in multi_indices(3, degree)}
        out.append(TestForm.bump(c, r, components=comps))
    return out


def _y_junction(strengths):
    edges = [Edge([(0.0, 0.0, 0.0), (p[0] / 2, p[1] / 2, p[2] / 2), p], a) for p, a in zip(ENDS, strengths)]
    return DislocationNetwork(CUBE, [(0.0, 0.0, 0.0)], edges)


def criterion_1():
    sc = open_book_2d()
    t0 = time.perf_counter()
    ladders = []
    v = evaluate(sc.dislocation, sc.default_probe, ladders=ladders)
    dt = time.perf_counter() - t0
    rel = abs(v - 2 * math.pi) / (2 * math.pi)
    mono = all(lad.monotone for lad in ladders)
    ok = rel <= 1e-3 and mono and dt < 30.0
    return ok, f"value {v:.8f} vs 2pi, rel err {rel:.1e}, ladder monotone {mono}, {dt:.2f} s", [v, rel]


def criterion_2():
    sc = open_book_3d()
    probes = [
        sc.default_probe,
        sc.probes[1],
        TestForm.bump((0.05, 0.05, -0.2), 0.35, components={(3,): "1 + x*y + z", (1,): "z"}),
    ]
    rels = []
    for psi in probes:
        got, want = evaluate(sc.dislocation, psi), 2 * math.pi * line_integral(psi, (0, 0, -1), (0, 0, 1), 2.0)
        rels.append(abs(got - want) / abs(want))
    return max(rels) <= 1e-3, f"3 probes, max rel err {max(rels):.1e}", rels


def criterion_3():
    sc = edge_dislocation()
    errs, seen = [], 0
    # centers near the line L (the y-axis) so every support meets it
    for psi in _random_bumps(11, 10, 1, [(-0.1, 0.1), (-0.3, 0.3), (-0.1, 0.1)], radii=(0.2, 0.4)):
        got = evaluate(sc.dislocation, psi)
        want = line_integral(psi, (0.0, -1.0, 0.0), (0.0, 1.0, 0.0), 2.0)
        errs.append(abs(got - want))
        seen += abs(want) > 1e-6
    return max(errs) <= 1e-6, f"10 probes ({seen} with nonzero oracle), max |dT_h - int_L| {max(errs):.1e}", errs


def criterion_4():
    screw, book = screw_dislocation(1.0), open_book_3d()
    errs, seen = [], 0
    for psi in _random_bumps(12, 10, 1, [(-0.15, 0.15), (-0.15, 0.15), (-0.4, 0.4)], radii=(0.2, 0.45)):
        want = evaluate(book.dislocation, psi)
        errs.append(abs(evaluate(screw.dislocation, psi) - want))
        seen += abs(want) > 1e-6
    return max(errs) <= 1e-6, f"10 probes ({seen} nonzero), max |dS - dT_phi| {max(errs):.1e}", errs


def criterion_5():
    rng = np.random.default_rng(2024)
    errs = []
    for k in range(30):
        p = 1 + k % 3
        while True:
            V = rng.uniform(-0.6, 0.6, (p + 1, 3))
            if np.linalg.svd(V[1:] - V[0], compute_uv=False).min() > 0.15:
                break
        c = Chain([(1.0, Simplex([tuple(v) for v in V]))])
        center = tuple(V.mean(axis=0) + rng.uniform(-0.15, 0.15, 3))
        psi = TestForm.bump(center, rng.uniform(0.25, 0.35),
                            components={I: _poly(rng) for I in multi_indices(3, p - 1)})
        lhs = evaluate(boundary(chain_current(c, domain=CUBE)), psi)
        rhs = evaluate(chain_current(boundary_chain(c), domain=CUBE), psi)
        errs.append(abs(lhs - rhs))
    return max(errs) <= 1e-8, f"30 simplices (10 each of dim 1..3), max |dT_c - T_dc| {max(errs):.1e}", errs


def _probe_scale(psi: TestForm) -> float:
    P = sample_points(psi.support, 256)
    return float(np.max(np.abs(d(psi.form).evaluate_at(P))))


def criterion_6():
    worst, parts, skipped = 0.0, [], []
    for name, make in sorted(SCENARIOS.items()):
        T = make().current
        k = T.degree - 2
        if k < 0:
            skipped.append(name)
            continue
        n = T.dim
        for c in [(0.0,) * n, (0.1, -0.1, 0.2)[:n], (0.35, 0.2, -0.3)[:n]]:
            psi = TestForm.bump(c, 0.3, components={I: "1 + x - y*z" for I in multi_indices(n, k)})
            r = abs(evaluate(boundary(boundary(T)), psi)) / _probe_scale(psi)
            worst = max(worst, r)
            parts.append(r)
    detail = f"max scaled residual {worst:.1e} over {len(parts)} probes"
    if skipped:
        detail += f"; ddT undefined for degree-1 currents: {', '.join(skipped)}"
    return worst <= 1e-9, detail, parts


def criterion_7():
    line = [(0.0, -1.0, 0.0), (0.0, 1.0, 0.0)]
    probes = [TestForm.bump((0.0, y, 0.0), 0.3, poly="1 + y") for y in (-0.4, 0.0, 0.35)]
    const = max(map(abs, constancy_residuals(Edge(line, 1.0, parse("1", 3)), probes)))
    res = constancy_residuals(Edge(line, 1.0, parse("y", 3)), probes)
    errs = []
    for f, v in zip(probes, res):
        # oracle -int_L f du with du = dy along L
        g = TestForm(DifferentialForm(3, 1, {(2,): f.form.coefficient(())}), f.support)
        errs.append(abs(v + line_integral(g, line[0], (0.0, 1.0, 0.0), 2.0)))
    fails = min(map(abs, res)) > 1e-3 and check_rules(
        DislocationNetwork(CUBE, [], [Edge(line, 1.0, parse("y", 3))])).verdict == "violates-constancy"
    ok = const <= 1e-9 and fails and max(errs) <= 1e-6
    return ok, f"constant u residual {const:.1e}; u = y flagged {fails}, oracle err {max(errs):.1e}", [const, *res]


def criterion_8():
    good, bad = check_rules(_y_junction((1.0, 2.0, -3.0))), check_rules(_y_junction((1.0, 2.0, -2.0)))
    r = bad.max_node_residual
    ok = good.verdict == "consistent" and bad.verdict == "violates-branching" and abs(r - 1.0) <= 1e-9
    return ok, f"(1,2,-3) {good.verdict}; (1,2,-2) {bad.verdict} with node residual {r!r}", [r]


def criterion_9():
    flat = SCENARIOS["interface-coherence"]()
    closed = closedness_scan(flat.current, ProbeFamily([(-0.3, 0.3)] * 3, 1, 0.15, 0.15))
    vert = SCENARIOS["interface-coherence"](layering="vertical")
    radius = 0.15
    rep = closedness_scan(vert.current, ProbeFamily([(-0.3, 0.3), (-0.3, 0.3), (-0.75, 0.75)], 1, radius, 0.15))
    far = [c for c in rep.localization if abs(c[2]) > 2 * radius]
    ok = closed.verdict == "closed" and rep.verdict == "defective" and not far
    detail = (f"horizontal {closed.verdict}; vertical {rep.verdict}, {len(rep.localization)} flagged centers, "
              f"{len(far)} beyond 2 radii of z = 0")
    return ok, detail, [closed.max_residual, rep.max_residual]


def criterion_10():
    rng = np.random.default_rng(10)
    P = sample_points(CUBE, 256)
    worst_frob, closed_misses, n = 0.0, 0, 20
    for _ in range(n):
        f, g = _poly(rng, ("x", "y")), _poly(rng, ("y", "x"))
        om = one_form([f, g, "1"])
        worst_frob = max(worst_frob, float(np.max(np.abs(frobenius_residual(om).evaluate_at(P)))))
        F, G = parse(f, 3), parse(g, 3)
        curl = float(np.max(np.abs((F.diff(2) - G.diff(1)).eval_many(P))))
        if curl > 1e-6 and classify_layering(om, CUBE)["closed"]:
            closed_misses += 1
    zdx = classify_layering(one_form(["z", "1", "0"]), CUBE)
    ok = worst_frob <= 1e-9 and closed_misses == 0 and not zdx["integrable"]
    detail = (f"max |omega ^ d omega| over {n} random f,g = {worst_frob:.2e} (needs <= 1e-9; equals g_x - f_y); "
              f"non-closed missed {closed_misses}; z dx + dy non-integrable {not zdx['integrable']}")
    return ok, detail, [worst_frob]


def criterion_11():
    probes = [broken_leaves().extras["sequence_probe"],
              TestForm.bump((-0.1, 0.15, -0.05), 0.35, components={(1, 2): "1 + x", (2, 3): "y"})]
    worst_ratio, worst_rel, vals = math.inf, 0.0, []
    for phi in probes:
        seq = broken_leaves_sequence(phi, range(2, 7))
        worst_ratio = min(worst_ratio, *seq["ratios"])
        want = limit_oracle(phi)
        worst_rel = max(worst_rel, abs(seq["limit"] - want) / abs(want))
        vals += seq["values"]
    ok = worst_ratio >= 1.8 and worst_rel <= 1e-3
    return ok, f"min increment ratio {worst_ratio:.2f} (i = 2..5), limit rel err {worst_rel:.1e}", vals


def _cli(args, out: Path) -> bytes:
    subprocess.run([sys.executable, "-m", "defectcalc", *args, "--deterministic", "--output", str(out)],
                   check=False, capture_output=True)
    return out.read_bytes()


def criterion_12():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for name, strengths in (("good", (1.0, 2.0, -3.0)), ("bad", (1.0, 2.0, -2.0))):
            (tmp / f"{name}.json").write_text(json.dumps(_y_junction(strengths).to_dict()))
        (tmp / "vertical.json").write_text(json.dumps({"layering": "vertical"}))
        (tmp / "zdx.json").write_text(json.dumps(one_form(["z", "1", "0"]).to_dict()))
        runs = [["scenario", "run", name] for name in sorted(SCENARIOS)]
        runs += [["scenario", "run", "interface-coherence", "--params", str(tmp / "vertical.json")],
                 ["franks", "--network", str(tmp / "good.json")], ["franks", "--network", str(tmp / "bad.json")],
                 ["frobenius", "--form", str(tmp / "zdx.json")]]
        differ = [" ".join(a[:3]) for k, a in enumerate(runs)
                  if _cli(a, tmp / f"a{k}.json") != _cli(a, tmp / f"b{k}.json")]
    # criteria without a CLI entry point are re-run in process and compared bytewise
    again = []
    for n in (5, 6, 7, 10):
        first = PAYLOADS.get(n)
        if first is None:
            first = json.dumps(CRITERIA[n]()[2])
        if json.dumps(CRITERIA[n]()[2]) != first:
            again.append(n)
    ok = not differ and not again
    return ok, f"{len(runs)} CLI runs byte-identical twice: {not differ}; library re-runs identical: {not again}", []


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 13)}


def run_criterion(n: int) -> bool:
    try:
        ok, detail, payload = CRITERIA[n]()
        PAYLOADS[n] = json.dumps(payload)
    except Exception as exc:  # report, do not hide
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    ACCEPTANCE[n] = (ok, detail)
    print(acceptance_line(n))
    return ok


@pytest.mark.parametrize("n", range(1, 13))
def test_criterion(n):
    assert run_criterion(n), acceptance_line(n)


if __name__ == "__main__":
    results = [run_criterion(n) for n in range(1, 13)]
    sys.exit(0 if all(results) else 1)

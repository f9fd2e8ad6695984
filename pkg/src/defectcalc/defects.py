"""Defect analysis of layering currents.

Two integrability criteria are checked by sweeping families of bump
probes:

* closedness: the dislocation current dT vanishes on every probe;
* weak Frobenius: dT = beta _| T for a supplied 1-form beta.

Smooth layering forms can additionally be classified pointwise
(closed / integrable) and solved for beta in d(omega) = beta ^ omega.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .currents import Current, TestForm, boundary, chain_current, contract, evaluate, linear_combine
from .exterior import DifferentialForm, d, frobenius_residual, max_abs, multi_indices, sample_points
from .geometry import QuadratureSpec, polyline_chain

__all__ = [
    "Probe",
    "ProbeFamily",
    "ProbeValue",
    "DefectReport",
    "LineFit",
    "FrobeniusReport",
    "BetaSamples",
    "bump_mass",
    "closedness_scan",
    "line_strength_fit",
    "weak_frobenius_check",
    "solve_beta_pointwise",
    "classify_layering",
    "chain_localization",
]

THRESHOLD = 1e-6


@lru_cache(maxsize=None)
def bump_mass(radius: float, dim: int) -> float:
    """L1 mass of bump(radius; x) over R^dim."""
    sphere = 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    radial, _ = quad(lambda t: t ** (dim - 1) * math.exp(1.0 - 1.0 / (1.0 - t * t)), 0.0, 1.0, epsabs=1e-14)
    return sphere * radial * radius**dim


@dataclass(frozen=True)
class Probe:
    index: int
    center: tuple
    multi_index: tuple
    test_form: TestForm
    mass: float


class ProbeFamily:
    """Bump probes ``bump(radius; x - c) dx_I`` on a grid of centers.

    Centers sit on the lattice ``pitch * Z^n`` restricted to points whose
    support box lies inside ``region``; every increasing multi-index of
    ``degree`` is used at each center.
    """

    def __init__(self, region, degree: int, radius: float = 0.15, pitch: float = 0.1):
        region = getattr(region, "box", region)
        self.region = tuple((float(a), float(b)) for a, b in region)
        self.dim = len(self.region)
        self.degree = degree
        self.radius = float(radius)
        self.pitch = float(pitch)
        if not 0 <= degree <= self.dim:
            raise ValueError(f"probe degree {degree} outside 0..{self.dim}")
        if self.radius <= 0 or self.pitch <= 0:
            raise ValueError("radius and pitch must be positive")
        axes = []
        for a, b in self.region:
            lo = math.ceil((a + self.radius) / self.pitch - 1e-9)
            hi = math.floor((b - self.radius) / self.pitch + 1e-9)
            axes.append([round(k * self.pitch, 12) for k in range(lo, hi + 1)])
        centers = [tuple(c) for c in np.array(np.meshgrid(*axes, indexing="ij")).reshape(self.dim, -1).T]
        self.centers = [tuple(float(v) for v in c) for c in centers] if all(axes) else []
        self.multi_indices = multi_indices(self.dim, degree)

    @classmethod
    def at(cls, centers: Sequence[Sequence[float]], degree: int, radius: float = 0.15) -> "ProbeFamily":
        """Family over explicitly listed centers."""
        centers = [tuple(float(v) for v in c) for c in centers]
        dim = len(centers[0])
        lo = [min(c[j] for c in centers) - radius for j in range(dim)]
        hi = [max(c[j] for c in centers) + radius for j in range(dim)]
        fam = cls(list(zip(lo, hi)), degree, radius, pitch=1.0)
        fam.centers = centers
        return fam

    def __len__(self):
        return len(self.centers) * len(self.multi_indices)

    def __iter__(self):
        mass = bump_mass(self.radius, self.dim)
        k = 0
        for c in self.centers:
            for I in self.multi_indices:
                yield Probe(k, c, I, TestForm.bump(c, self.radius, I=I), mass)
                k += 1


@dataclass(frozen=True)
class ProbeValue:
    center: tuple
    multi_index: tuple
    value: float
    normalized: float


@dataclass
class LineFit:
    stations: list
    strengths: list
    tolerance: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.strengths))

    @property
    def spread(self) -> float:
        s = np.asarray(self.strengths)
        return float(np.max(np.abs(s - s.mean())) / max(abs(s.mean()), 1e-300))

    @property
    def constant(self) -> bool:
        return self.spread <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "stations": [list(s) for s in self.stations],
            "strengths": list(self.strengths),
            "mean": self.mean,
            "relative_spread": self.spread,
            "constant": self.constant,
        }


@dataclass
class FrobeniusReport:
    verdict: str  # "weak-integrable" | "non-integrable"
    residual: float
    threshold: float
    values: list = field(default_factory=list)
    beta_closed: bool | None = None
    beta_closed_residual: float | None = None

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict, "residual": self.residual, "threshold": self.threshold}
        if self.beta_closed is not None:
            out["beta_closed"] = self.beta_closed
            out["beta_closed_residual"] = self.beta_closed_residual
        return out


@dataclass
class DefectReport:
    verdict: str  # "closed" | "defective"
    max_residual: float
    threshold: float
    probe_radius: float
    values: list = field(default_factory=list)
    line_fit: LineFit | None = None
    frobenius: FrobeniusReport | None = None

    @property
    def localization(self) -> list:
        seen, out = set(), []
        for v in self.values:
            if v.normalized > self.threshold and v.center not in seen:
                seen.add(v.center)
                out.append(v.center)
        return out

    @property
    def support_estimate(self) -> list:
        """Union of probe support balls where the boundary was seen."""
        return [(c, self.probe_radius) for c in self.localization]

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "max_residual": self.max_residual,
            "threshold": self.threshold,
            "probe_radius": self.probe_radius,
            "n_probes": len(self.values),
            "localization": [list(c) for c in self.localization],
        }
        if self.line_fit is not None:
            out["line_fit"] = self.line_fit.to_dict()
        if self.frobenius is not None:
            out["frobenius"] = self.frobenius.to_dict()
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(self.values[0].center) if self.values else 0
        w.writerow([f"probe_center_x{i + 1}" for i in range(dim)] + ["multiindex", "value", "normalized"])
        for v in self.values:
            w.writerow(
                [repr(c) for c in v.center]
                + [",".join(map(str, v.multi_index)), repr(v.value), repr(v.normalized)]
            )
        return buf.getvalue()


def _sweep(D: Current, probes: ProbeFamily, q: QuadratureSpec) -> list[ProbeValue]:
    out = []
    for p in probes:
        v = evaluate(D, p.test_form, q)
        out.append(ProbeValue(p.center, p.multi_index, v, abs(v) / p.mass))
    return out


def closedness_scan(
    T: Current, probes: ProbeFamily, q: QuadratureSpec | None = None, threshold: float = THRESHOLD
) -> DefectReport:
    """Evaluate dT on every probe; closed iff every mass-normalized |dT[probe]| <= threshold."""
    if probes.degree != T.degree - 1:
        raise ValueError(f"probe degree {probes.degree} != current degree - 1 = {T.degree - 1}")
    q = q or QuadratureSpec()
    values = _sweep(boundary(T), probes, q)
    resid = max((v.normalized for v in values), default=0.0)
    verdict = "closed" if resid <= threshold else "defective"
    return DefectReport(verdict, resid, threshold, probes.radius, values)


def _stations_along(polyline, n: int, margin: float):
    P = np.asarray(polyline, dtype=float)
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 2 * margin:
        raise ValueError("polyline too short for the requested probe radius")
    out = []
    for s in np.linspace(margin, total - margin, n):
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        t = (P[k + 1] - P[k]) / seg[k]
        out.append((P[k] + (s - cum[k]) * t, t))
    return out


def line_strength_fit(
    T: Current,
    polyline: Sequence[Sequence[float]],
    q: QuadratureSpec | None = None,
    n_stations: int = 5,
    radius: float = 0.15,
    margin: float | None = None,
    tolerance: float = 1e-4,
) -> LineFit:
    """Station-wise strengths u_j = dT[a_j] / T_L[a_j] along a supplied polyline.

    ``a_j`` is a bump times the unit tangent covector at station j.  The
    line is assumed to be where a prior scan localized dT.
    """
    q = q or QuadratureSpec()
    if T.degree != 2:
        raise ValueError("line fits need a 2-current (its boundary is a 1-current)")
    D = boundary(T)
    TL = chain_current(polyline_chain(polyline))
    margin = 2 * radius if margin is None else margin
    stations, strengths = [], []
    for c, t in _stations_along(polyline, n_stations, margin):
        probe = TestForm.bump(tuple(c), radius, components={(i + 1,): float(t[i]) for i in range(len(t))})
        den = evaluate(TL, probe, q)
        if abs(den) < 1e-12:
            raise ValueError(f"probe at {tuple(c)} misses the line")
        stations.append(tuple(float(v) for v in c))
        strengths.append(evaluate(D, probe, q) / den)
    return LineFit(stations, strengths, tolerance)


def weak_frobenius_check(
    T: Current,
    beta: DifferentialForm,
    probes: ProbeFamily,
    q: QuadratureSpec | None = None,
    threshold: float = THRESHOLD,
    check_beta_closed: bool = True,
) -> FrobeniusReport:
    """Residual of dT = beta _| T over the probes (beta _| T built with the contraction sign).

    Convention: for T = T_omega this is d(omega) = beta ^ omega.  A form
    written as d(omega) = omega ^ beta corresponds to -beta here.
    """
    if beta.degree != 1:
        raise ValueError("beta must be a 1-form")
    if probes.degree != T.degree - 1:
        raise ValueError(f"probe degree {probes.degree} != current degree - 1 = {T.degree - 1}")
    q = q or QuadratureSpec()
    R = linear_combine([(1.0, boundary(T)), (-1.0, contract(beta, T))])
    values = _sweep(R, probes, q)
    resid = max((v.normalized for v in values), default=0.0)
    verdict = "weak-integrable" if resid <= threshold else "non-integrable"
    report = FrobeniusReport(verdict, resid, threshold, values)
    if check_beta_closed and beta.dim >= 2:
        db = max_abs(d(beta), sample_points(probes.region))
        report.beta_closed = db <= 1e-9
        report.beta_closed_residual = db
    return report


@dataclass
class BetaSamples:
    points: np.ndarray
    beta: np.ndarray  # (N, n), minimal-norm representative; NaN where unsolvable
    residual: np.ndarray
    ok: np.ndarray

    @property
    def success(self) -> bool:
        return bool(np.all(self.ok))

    @property
    def failures(self) -> np.ndarray:
        return self.points[~self.ok]


def solve_beta_pointwise(omega: DifferentialForm, points, tol: float = 1e-9) -> BetaSamples:
    """Solve beta ^ omega = d(omega) for beta at each point.

    The solution is unique modulo omega; the least-norm representative
    (orthogonal to omega's coefficient vector) is returned.  Points where
    no solution exists (omega ^ d(omega) != 0) are flagged in ``ok``.
    """
    if omega.degree != 1:
        raise ValueError("solve_beta_pointwise needs a 1-form")
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = omega.dim
    W = omega.evaluate_at(P)
    O = d(omega).evaluate_at(P) if n >= 2 else np.zeros((len(P), 0))
    pairs = multi_indices(n, 2)
    beta = np.full((len(P), n), np.nan)
    res = np.zeros(len(P))
    ok = np.zeros(len(P), dtype=bool)
    for k, (w, rhs) in enumerate(zip(W, O)):
        if not np.any(np.abs(w) > 1e-14):
            raise ValueError(f"omega vanishes at {tuple(P[k])}")
        A = np.zeros((len(pairs), n))
        for row, (i, j) in enumerate(pairs):
            A[row, i - 1] = w[j - 1]
            A[row, j - 1] = -w[i - 1]
        b, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        r = float(np.linalg.norm(A @ b - rhs))
        res[k] = r
        ok[k] = r <= tol * max(1.0, float(np.linalg.norm(rhs)))
        if ok[k]:
            beta[k] = b
    return BetaSamples(P, beta, res, ok)


def classify_layering(omega: DifferentialForm, box, tol: float = 1e-9, n: int = 256) -> dict:
    """Pointwise verdicts for a smooth layering 1-form on a box sample.

    ``closed``: d(omega) = 0 (first criterion); ``integrable``:
    omega ^ d(omega) = 0 (second criterion).
    """
    P = sample_points(box, n)
    closed_res = max_abs(d(omega), P)
    frob_res = max_abs(frobenius_residual(omega), P) if omega.dim >= 3 else 0.0
    return {
        "closed": closed_res <= tol,
        "closed_residual": closed_res,
        "integrable": frob_res <= tol,
        "frobenius_residual": frob_res,
    }


def chain_localization(centers: Sequence[Sequence[float]], max_gap: float) -> list[list[tuple]]:
    """Group localized probe centers into nearest-neighbour chains (polylines)."""
    remaining = [tuple(c) for c in centers]
    chains = []
    while remaining:
        remaining.sort()
        chain = [remaining.pop(0)]
        while True:
            if not remaining:
                break
            tail = np.asarray(chain[-1])
            dist = [float(np.linalg.norm(np.asarray(c) - tail)) for c in remaining]
            k = int(np.argmin(dist))
            if dist[k] > max_gap:
                break
            chain.append(remaining.pop(k))
        chains.append(chain)
    return chains

"""Command-line front end: ``defectcalc <subcommand> ...``.

Every subcommand prints a report envelope (JSON by default) that echoes
the versioned defaults and the quadrature actually used.  Exit codes:
0 on success, 1 on input errors, 2 when ``--expect-closed`` was given
and the verdict says a boundary (or rule violation) was found.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import default_quadrature, defaults
from .currents import Current, SupportError, TestForm, boundary, evaluate
from .defects import (
    ProbeFamily,
    classify_layering,
    closedness_scan,
    line_strength_fit,
    solve_beta_pointwise,
    weak_frobenius_check,
)
from .exterior import DifferentialForm, multi_indices, sample_points
from .franks import DislocationNetwork, NetworkError, check_rules
from .geometry import QuadratureSpec
from .scenarios import SCENARIOS, Scenario, broken_leaves_sequence, helicoid_check, limit_oracle
from .serialize import (
    InputError,
    current_from_dict,
    dumps,
    load_document,
    parse_checked,
    testform_from_dict,
    validate,
)
from .symexpr import DomainError, ExprSyntaxError

CLOSED_VERDICTS = {"closed", "consistent", "weak-integrable", "integrable"}


@dataclass
class RunConfig:
    command: str
    quadrature: QuadratureSpec
    pitch: float
    radius: float
    threshold: float
    fmt: str = "json"
    output: str | None = None
    seed: int | None = None
    deterministic: bool = False
    expect_closed: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        dflt = defaults()
        ladder = None
        if args.eps_ladder:
            try:
                ladder = tuple(float(s) for s in args.eps_ladder.split(","))
            except ValueError as exc:
                raise InputError(f"--eps-ladder: {exc}") from exc
        try:
            q = default_quadrature(cells_per_axis=args.cells, gauss_order=args.order, epsilon_ladder=ladder)
        except ValueError as exc:
            raise InputError(f"quadrature: {exc}") from exc
        cmd = args.command if args.command != "scenario" else f"scenario {args.action}"
        return cls(
            command=cmd,
            quadrature=q,
            pitch=args.pitch if args.pitch is not None else dflt["probes"]["pitch"],
            radius=args.radius if args.radius is not None else dflt["probes"]["radius"],
            threshold=args.threshold if args.threshold is not None else dflt["probes"]["threshold"],
            fmt=args.format,
            output=args.output,
            seed=args.seed,
            deterministic=args.deterministic,
            expect_closed=args.expect_closed,
        )


# -- input helpers


def _load_current(path: str) -> Current:
    return parse_checked(current_from_dict, load_document(path, "current"), path)


def _load_testform(path: str) -> TestForm:
    return parse_checked(testform_from_dict, load_document(path, "testform"), path)


def _load_form(path: str) -> DifferentialForm:
    doc = _read_json(path)
    return parse_checked(DifferentialForm.from_dict, doc, path)


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _parse_points(text: str, what: str) -> list[tuple[float, ...]]:
    """``"x,y,z; x,y,z"`` into a list of points."""
    try:
        pts = [tuple(float(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]
    except ValueError as exc:
        raise InputError(f"{what}: {exc}") from exc
    if not pts or len({len(p) for p in pts}) != 1:
        raise InputError(f"{what}: points must share one dimension")
    return pts


def _parse_box(text: str | None, fallback) -> tuple:
    if text is None:
        if fallback is None:
            raise InputError("--box is required when the current has no domain")
        return fallback
    pts = _parse_points(text, "--box")
    if any(len(p) != 2 or not p[0] < p[1] for p in pts):
        raise InputError("--box: expected 'a,b; a,b; ...' with a < b")
    return tuple(pts)


# -- subcommands (each returns the result dict)


def cmd_eval(cfg: RunConfig, args) -> dict:
    T, phi = _load_current(args.current), _load_testform(args.testform)
    return {"value": evaluate(T, phi, cfg.quadrature)}


def cmd_boundary(cfg: RunConfig, args) -> dict:
    T, phi = _load_current(args.current), _load_testform(args.testform)
    return {"value": evaluate(boundary(T), phi, cfg.quadrature)}


def cmd_scan(cfg: RunConfig, args):
    T = _load_current(args.current)
    box = _parse_box(args.box, T.domain)
    fam = ProbeFamily(box, T.degree - 1, cfg.radius, cfg.pitch)
    if not len(fam):
        raise InputError(f"no probe of radius {cfg.radius} fits in {box}")
    rep = closedness_scan(T, fam, cfg.quadrature, cfg.threshold)
    return rep.to_dict(), rep.to_csv()


def cmd_frobenius(cfg: RunConfig, args) -> dict:
    out = {}
    if args.form:
        omega = _load_form(args.form)
        box = _parse_box(args.box, ((-1.0, 1.0),) * omega.dim)
        out["layering"] = classify_layering(omega, box)
        if omega.degree == 1:
            bs = solve_beta_pointwise(omega, sample_points(box, 16))
            out["beta_samples"] = {
                "success": bs.success,
                "n_failures": int(len(bs.failures)),
                "max_residual": float(np.max(bs.residual)),
            }
    if args.current:
        if not args.beta:
            raise InputError("--current needs --beta")
        T = _load_current(args.current)
        beta = _load_form(args.beta)
        box = _parse_box(args.box, T.domain)
        fam = ProbeFamily(box, T.degree - 1, cfg.radius, cfg.pitch)
        out["weak"] = weak_frobenius_check(T, beta, fam, cfg.quadrature, cfg.threshold).to_dict()
        out["verdict"] = out["weak"]["verdict"]
    elif "layering" in out:
        out["verdict"] = "integrable" if out["layering"]["integrable"] else "non-integrable"
    if not out:
        raise InputError("frobenius needs --form or --current/--beta")
    return out


def cmd_linefit(cfg: RunConfig, args) -> dict:
    T = _load_current(args.current)
    line = _parse_points(args.line, "--line")
    fit = line_strength_fit(
        T, line, cfg.quadrature, n_stations=args.stations, radius=cfg.radius,
        tolerance=defaults()["scenarios"]["line_fit_tolerance"],
    )
    return fit.to_dict()


def cmd_franks(cfg: RunConfig, args) -> dict:
    doc = load_document(args.network, "network")
    net = parse_checked(DislocationNetwork.from_dict, doc, args.network)
    return check_rules(net, q=cfg.quadrature).to_dict()


def _jsonable(v):
    if isinstance(v, (bool, int, float, str)) or v is None:
        return v
    if isinstance(v, (list, tuple)) and all(isinstance(x, (int, float, list, tuple)) for x in v):
        return [_jsonable(x) for x in v]
    return None


def _rel(value: float, expected: float) -> tuple[float, float]:
    err = abs(value - expected)
    return err, err / abs(expected) if abs(expected) > 1e-12 else err


def _random_probes(sc: Scenario, n: int, seed: int | None, radius: float) -> list[TestForm]:
    rng = np.random.default_rng(seed)
    box = sc.current.domain
    deg = sc.current.degree - 1
    out = []
    for _ in range(n):
        c = [rng.uniform(a + radius, b - radius) for a, b in box]
        comps = {I: float(rng.uniform(-1.0, 1.0)) for I in multi_indices(sc.dim, deg)}
        out.append(TestForm.bump(c, radius, components=comps))
    return out


def _scenario_params(args) -> dict:
    if not args.params:
        return {}
    return load_document(args.params, "scenario_params")


def _build_scenario(name: str, params: dict) -> Scenario:
    kw = {k: v for k, v in params.items() if k != "probe"}
    try:
        if name == "screw-dislocation":
            return SCENARIOS[name](**{k: kw[k] for k in ("a",) if k in kw})
        if name == "broken-leaves":
            return SCENARIOS[name](**{k: kw[k] for k in ("i_max", "patches") if k in kw})
        if name == "edge-dislocation":
            return SCENARIOS[name](**{k: kw[k] for k in ("patches",) if k in kw})
        if name == "interface-coherence":
            return SCENARIOS[name](**{k: kw[k] for k in ("A", "B", "layering") if k in kw})
        return SCENARIOS[name]()
    except ValueError as exc:
        raise InputError(f"scenario {name}: {exc}") from exc


def cmd_scenario(cfg: RunConfig, args):
    if args.action == "list":
        return {"scenarios": sorted(SCENARIOS)}, None
    name = args.name
    if name not in SCENARIOS:
        raise InputError(f"unknown scenario {name!r}; try 'scenario list'")
    params = _scenario_params(args)
    sc = _build_scenario(name, params)
    q = cfg.quadrature
    probes = list(sc.probes) or [sc.default_probe]
    if "probe" in params:
        validate(params["probe"], "testform")
        probes[0] = parse_checked(testform_from_dict, params["probe"], args.params)
    probes += _random_probes(sc, args.random_probes, cfg.seed, 0.25)
    D = boundary(sc.current)
    rows = []
    for k, p in enumerate(probes):
        ladders = []
        v = evaluate(D, p, q, ladders)
        e = sc.expected_boundary(p, q)
        abs_err, rel_err = _rel(v, e)
        row = {"probe": k, "center": [(a + b) / 2 for a, b in p.support], "value": v, "expected": e,
               "abs_err": abs_err, "rel_err": rel_err}
        if ladders:
            row["ladder"] = [lad.to_dict() for lad in ladders]
        rows.append(row)
    head = rows[0]
    result = {
        "scenario": name,
        "notes": sc.notes,
        "params": {k: v for k, v in params.items() if k != "probe"},
        "boundary_value": head["value"],
        "expected": head["expected"],
        "abs_err": head["abs_err"],
        "rel_err": head["rel_err"],
        "max_abs_err": max(r["abs_err"] for r in rows),
        "sweep": rows,
        "extras": {k: _jsonable(v) for k, v in sc.extras.items() if _jsonable(v) is not None},
    }
    if head.get("ladder"):
        result["ladder"] = head["ladder"][0]
    if name in ("edge-dislocation", "open-book-3d", "screw-dislocation") and args.line_fit:
        result["line_fit"] = line_strength_fit(sc.current, sc.extras["line"], q, radius=cfg.radius).to_dict()
    if name == "screw-dislocation":
        result["helicoid"] = helicoid_check(sc.extras["a"])
    if name == "interface-coherence":
        column = ((-0.2, 0.2), (-0.2, 0.2), (-0.6, 0.6))
        rep = closedness_scan(sc.current, ProbeFamily(column, 1, cfg.radius, cfg.pitch), q, cfg.threshold)
        result["scan"] = rep.to_dict()
        result["verdict"] = rep.verdict
    if name == "broken-leaves":
        phi = sc.extras["sequence_probe"]
        seq = broken_leaves_sequence(phi, range(1, sc.extras["i_max"] + 1), q)
        oracle = limit_oracle(phi, q=q)
        seq["oracle"] = oracle
        seq["limit_abs_err"], seq["limit_rel_err"] = _rel(seq["limit"], oracle)
        result["sequence"] = seq
    csv_text = _sweep_csv(rows)
    return result, csv_text


def _sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = len(rows[0]["center"]) if rows else 0
    w.writerow(["probe"] + [f"probe_center_x{i + 1}" for i in range(dim)] + ["value", "expected", "abs_err"])
    for r in rows:
        w.writerow([r["probe"]] + [repr(c) for c in r["center"]] + [repr(r["value"]), repr(r["expected"]),
                                                                     repr(r["abs_err"])])
    return buf.getvalue()


COMMANDS = {
    "eval": cmd_eval,
    "boundary": cmd_boundary,
    "scan": cmd_scan,
    "frobenius": cmd_frobenius,
    "linefit": cmd_linefit,
    "franks": cmd_franks,
    "scenario": cmd_scenario,
}


# -- output


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _generic_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in _flatten(result):
        w.writerow([k, json.dumps(v)])
    return buf.getvalue()


def render(cfg: RunConfig, result: dict, csv_text: str | None) -> str:
    report = {
        "command": cfg.command,
        "version": __version__,
        "defaults": defaults(),
        "quadrature": cfg.quadrature.to_dict(),
        "seed": cfg.seed,
        "result": result,
    }
    if not cfg.deterministic:
        report["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    if cfg.fmt == "json":
        return dumps(report)
    if cfg.fmt == "csv":
        return csv_text if csv_text is not None else _generic_csv(result)
    lines = [f"{k}: {v}" for k, v in _flatten(report) if k != "defaults" and not k.startswith("defaults.")]
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("quadrature and probes")
    g.add_argument("--cells", type=int, help="cells per axis (default from defaults.json)")
    g.add_argument("--order", type=int, help="Gauss-Legendre order per axis")
    g.add_argument("--eps-ladder", help="comma-separated decreasing puncture radii")
    g.add_argument("--pitch", type=float, help="probe lattice pitch")
    g.add_argument("--radius", type=float, help="probe bump radius")
    g.add_argument("--threshold", type=float, help="normalized residual threshold")
    o = common.add_argument_group("output")
    o.add_argument("--format", choices=("json", "csv", "text"), default="json")
    o.add_argument("--output", help="write here instead of stdout")
    o.add_argument("--seed", type=int, help="seed for randomized probes")
    o.add_argument("--deterministic", action="store_true", help="omit the timestamp")
    o.add_argument("--expect-closed", action="store_true", help="exit 2 when a defect is found")

    p = argparse.ArgumentParser(prog="defectcalc", description="de Rham currents for material defects")
    p.add_argument("--version", action="version", version=f"defectcalc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("eval", parents=[common], help="evaluate T[phi]")
    s.add_argument("--current", required=True)
    s.add_argument("--testform", required=True)
    s = sub.add_parser("boundary", parents=[common], help="evaluate dT[phi]")
    s.add_argument("--current", required=True)
    s.add_argument("--testform", required=True)
    s = sub.add_parser("scan", parents=[common], help="closedness scan of dT over a probe lattice")
    s.add_argument("--current", required=True)
    s.add_argument("--box", help="probe region 'a,b; a,b; ...' (default: the current's domain)")
    s = sub.add_parser("frobenius", parents=[common], help="strong and weak integrability checks")
    s.add_argument("--form", help="layering form JSON for the pointwise checks")
    s.add_argument("--current")
    s.add_argument("--beta", help="1-form JSON for the weak check dT = beta _| T")
    s.add_argument("--box")
    s = sub.add_parser("linefit", parents=[common], help="station-wise line strengths")
    s.add_argument("--current", required=True)
    s.add_argument("--line", required=True, help="polyline 'x,y,z; x,y,z; ...'")
    s.add_argument("--stations", type=int, default=5)
    s = sub.add_parser("franks", parents=[common], help="Frank's rules on a dislocation network")
    s.add_argument("--network", required=True)
    s = sub.add_parser("scenario", help="worked examples")
    ssub = s.add_subparsers(dest="action", required=True)
    ssub.add_parser("list", parents=[common])
    r = ssub.add_parser("run", parents=[common])
    r.add_argument("name")
    r.add_argument("--params", help="scenario parameters JSON")
    r.add_argument("--random-probes", type=int, default=0, help="extra random probes (uses --seed)")
    r.add_argument("--line-fit", action="store_true", help="also fit line strengths (3-D line scenarios)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        out = COMMANDS[args.command](cfg, args)
        result, csv_text = out if isinstance(out, tuple) else (out, None)
        text = render(cfg, result, csv_text)
    except (InputError, NetworkError, SupportError, ExprSyntaxError, DomainError, ValueError) as exc:
        print(f"defectcalc: error: {exc}", file=sys.stderr)
        return 1
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    verdict = result.get("verdict")
    if cfg.expect_closed and verdict is not None and verdict not in CLOSED_VERDICTS:
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

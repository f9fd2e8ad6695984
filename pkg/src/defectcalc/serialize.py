"""JSON encoding of currents and loading of validated input documents.

A current is ``{"dim", "degree", "domain", "atoms": [...]}`` where each
atom carries a ``kind`` of ``form``, ``chain``, ``boundary``, ``restrict``
or ``vector`` and an optional ``coeff``.  Nested atoms hold a full
current under ``"current"``.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .currents import (
    BoundaryAtom,
    ChainAtom,
    Current,
    FormAtom,
    RestrictAtom,
    TestForm,
    VectorAtom,
)
from .exterior import DifferentialForm, VectorField
from .geometry import Chain, Region
from .symexpr import ExprSyntaxError, parse

__all__ = [
    "InputError",
    "current_to_dict",
    "current_from_dict",
    "schema",
    "validate",
    "load_document",
    "parse_checked",
    "testform_from_dict",
    "dumps",
    "SCHEMA_NAMES",
]

SCHEMA_NAMES = ("current", "testform", "network", "scenario_params", "report")


class InputError(ValueError):
    """Malformed or schema-violating input; the message says where."""


def current_to_dict(T: Current) -> dict:
    atoms = []
    for c, a in T.atoms:
        if isinstance(a, FormAtom):
            item = {"kind": "form", "form": a.form.to_dict(), "region": a.region.to_dict()}
        elif isinstance(a, ChainAtom):
            item = {"kind": "chain", "chain": a.chain.to_dict()}
            if a.weight is not None:
                item["weight"] = str(a.weight)
        elif isinstance(a, BoundaryAtom):
            item = {"kind": "boundary", "current": current_to_dict(a.inner)}
        elif isinstance(a, RestrictAtom):
            item = {"kind": "restrict", "current": current_to_dict(a.inner), "alpha": a.alpha.to_dict()}
        elif isinstance(a, VectorAtom):
            item = {"kind": "vector", "current": current_to_dict(a.inner), "field": a.field.to_list()}
        else:  # pragma: no cover
            raise TypeError(a)
        item["coeff"] = c
        atoms.append(item)
    out = {"dim": T.dim, "degree": T.degree, "atoms": atoms}
    if T.domain is not None:
        out["domain"] = [list(ab) for ab in T.domain]
    return out


def _atom_from_dict(item: Mapping, dim: int):
    kind = item["kind"]
    if kind == "form":
        return FormAtom(DifferentialForm.from_dict(item["form"]), Region.from_dict(item["region"]))
    if kind == "chain":
        w = item.get("weight")
        return ChainAtom(Chain.from_dict(item["chain"]), parse(w, dim) if w is not None else None)
    inner = current_from_dict(item["current"])
    if kind == "boundary":
        return BoundaryAtom(inner)
    if kind == "restrict":
        return RestrictAtom(inner, DifferentialForm.from_dict(item["alpha"]))
    if kind == "vector":
        return VectorAtom(inner, VectorField([parse(str(c), dim) for c in item["field"]]))
    raise ValueError(f"unknown atom kind {kind!r}")


def current_from_dict(data: Mapping) -> Current:
    dim, degree = int(data["dim"]), int(data["degree"])
    atoms = [(float(a.get("coeff", 1.0)), _atom_from_dict(a, dim)) for a in data.get("atoms", [])]
    return Current(dim, degree, atoms, data.get("domain"))


@lru_cache(maxsize=None)
def schema(name: str) -> dict:
    """The published JSON schema ``name`` (one of :data:`SCHEMA_NAMES`)."""
    if name not in SCHEMA_NAMES:
        raise KeyError(name)
    text = resources.files("defectcalc").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate(doc: Any, name: str) -> None:
    """Raise :class:`InputError` naming the JSON path of the first violation."""
    sch = schema(name)
    cls = jsonschema.validators.validator_for(sch)
    err = jsonschema.exceptions.best_match(cls(sch).iter_errors(doc))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InputError(f"{name} schema violation at {where}: {err.message}")


def load_document(path: str | Path, name: str) -> dict:
    """Read a JSON file and validate it against schema ``name``.

    Syntax errors are reported with line and column.
    """
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        validate(doc, name)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return doc


def parse_checked(loader, doc, path="<input>"):
    """Run a ``from_dict`` loader, turning expression and value errors into InputError."""
    try:
        return loader(doc)
    except ExprSyntaxError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def dumps(obj: Any) -> str:
    """Canonical JSON text (sorted keys, fixed float repr) ending in a newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def testform_from_dict(doc: Mapping) -> TestForm:
    """Explicit ``{"form", "support"}`` or the ``{"bump": {...}}`` shorthand."""
    if "bump" in doc:
        b = doc["bump"]
        comps = b.get("components")
        if comps is not None:
            comps = {tuple(int(s) for s in k.split(",") if s.strip()): v for k, v in comps.items()}
        return TestForm.bump(b["center"], b["radius"], components=comps, I=tuple(b.get("I", ())), poly=b.get("poly"))
    return TestForm.from_dict(doc)

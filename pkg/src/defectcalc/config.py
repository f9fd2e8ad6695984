"""Versioned numeric defaults shared by the library and the CLI."""
from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources

from .geometry import QuadratureSpec


@lru_cache(maxsize=1)
def _load() -> dict:
    return json.loads(resources.files("defectcalc").joinpath("defaults.json").read_text("utf-8"))


def defaults() -> dict:
    """A fresh copy of the defaults (safe to mutate)."""
    return copy.deepcopy(_load())


def default_quadrature(**overrides) -> QuadratureSpec:
    q = dict(_load()["quadrature"])
    q.update({k: v for k, v in overrides.items() if v is not None})
    return QuadratureSpec(**q)

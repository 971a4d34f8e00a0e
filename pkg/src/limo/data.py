"""Bundled TSPLIB fixtures and the known-optimum registry.

The data directory can be overridden with the ``LIMO_DATA_DIR`` environment
variable; it must contain ``tsplib/<name>.tsp`` files and may contain an
``optima.json`` registry.
"""
from __future__ import annotations

import json
import os
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .instances import Instance, parse_tour, parse_tsplib

ENV_DATA_DIR = "LIMO_DATA_DIR"


def data_dir() -> Path:
    env = os.environ.get(ENV_DATA_DIR)
    if env:
        return Path(env)
    return Path(str(resources.files("limo") / "data"))


def fixture_path(name: str, suffix: str = ".tsp") -> Path:
    for base in (data_dir(), Path(str(resources.files("limo") / "data"))):
        p = base / "tsplib" / f"{name}{suffix}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no TSPLIB fixture named {name!r} under {data_dir()}")


def load_instance(name_or_path: str | os.PathLike) -> Instance:
    """Load a TSPLIB file by path, or a bundled fixture by bare name."""
    p = Path(name_or_path)
    if not p.exists():
        p = fixture_path(str(name_or_path))
    return parse_tsplib(p.read_text())


def load_opt_tour(name: str) -> list[int]:
    return parse_tour(fixture_path(name, ".opt.tour").read_text())


@lru_cache(maxsize=None)
def _registry(path: str) -> dict[str, float]:
    with open(path) as fh:
        raw = json.load(fh)
    return {k: float(v) for k, v in raw.items()}


def known_optima() -> dict[str, float]:
    for base in (data_dir(), Path(str(resources.files("limo") / "data"))):
        p = base / "optima.json"
        if p.exists():
            return dict(_registry(str(p)))
    return {}

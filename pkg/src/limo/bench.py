"""Experiment orchestration and reporting.

Reports are lists of flat dicts with a fixed column order per report kind,
written as JSON (a list of objects) or CSV. Row order depends only on the
configuration, never on worker scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .baseline_sa import SaParams, sa_solve
from .data import known_optima, load_instance
from .errors import ConfigError
from .hierarchy import SolveOptions, hierarchical_solve
from .instances import Instance, Tour, deviation_ratio, random_instance
from .macro import MacroConfig, macro_solve, quantize_weights
from .oracle import HELD_KARP_LIMIT, brute_force_closed, brute_force_open, held_karp_closed, held_karp_open
from .swai import RANDOM_STUDY_PARAMS, SwaiParams, swai_solve

log = logging.getLogger(__name__)

SOLVE_FIELDS = ("instance", "n", "engine", "seed", "runs", "tour_length", "optimum",
                "deviation_ratio", "wall_time_seconds")
COMPARE_FIELDS = ("n", "count", "oracle", "swai_median", "swai_q1", "swai_q3",
                  "sa_median", "sa_q1", "sa_q3", "length_ratio_median")
ABLATE_FIELDS = ("axis", "value", "instance", "count", "median", "q1", "q3")
AXES = ("bits", "passes", "runs", "no_2opt", "no_segref")


class ReferenceOptima:
    """Known optimal tour lengths keyed by TSPLIB instance name."""

    def __init__(self, table: dict[str, float] | None = None):
        table = known_optima() if table is None else dict(table)
        for name, v in table.items():
            if not v > 0:
                raise ConfigError(f"optimum for {name} must be positive")
        self._table = table

    def get(self, name: str) -> float | None:
        name = name[:-4] if name.endswith(".tsp") else name
        v = self._table.get(name)
        if v is None:
            log.warning("no reference optimum for %r; deviation ratio omitted", name)
        return v

    def __contains__(self, name: str) -> bool:
        return (name[:-4] if name.endswith(".tsp") else name) in self._table


# ------------------------------------------------------------------ sources

def resolve_source(source: str) -> Instance:
    """``random:N`` / ``random:N:SEED``, a registry name, or a TSPLIB file path."""
    if source.startswith("random:"):
        parts = source.split(":")[1:]
        try:
            n = int(parts[0])
            seed = int(parts[1]) if len(parts) > 1 else 0
        except (ValueError, IndexError):
            raise ConfigError(f"bad random source {source!r}; expected random:N[:SEED]") from None
        return random_instance(n, seed)
    return load_instance(source)


def run_seeds(seed: int, runs: int) -> list[int]:
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    return [(seed + r) % 2 ** 64 for r in range(runs)]


def _map(fn: Callable, items: Iterable, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(med), float(q1), float(q3)


# ------------------------------------------------------------------ solve / oracle

@dataclass
class SolveResult:
    tour: Tour
    row: dict
    run_lengths: list[float]


def run_solve(inst: Instance, opts: SolveOptions = SolveOptions(), runs: int = 1,
              optima: ReferenceOptima | None = None) -> SolveResult:
    """Best of ``runs`` hierarchical solves with seeds ``seed, seed+1, ...``."""
    optima = ReferenceOptima() if optima is None else optima
    t0 = time.perf_counter()
    best, lengths = None, []
    for s in run_seeds(opts.seed, runs):
        tour = hierarchical_solve(inst, replace(opts, seed=s))
        tour.validate(inst)
        lengths.append(tour.cost)
        if best is None or tour.cost < best.cost:
            best = tour
    wall = time.perf_counter() - t0
    opt = None if inst.name.startswith("random") else optima.get(inst.name)
    row = {"instance": inst.name, "n": inst.n, "engine": opts.engine, "seed": opts.seed,
           "runs": runs, "tour_length": best.cost, "optimum": opt,
           "deviation_ratio": None if opt is None else deviation_ratio(best.cost, opt),
           "wall_time_seconds": wall}
    return SolveResult(best, row, lengths)


def run_oracle(inst: Instance, open_path: bool = False, start: int | None = None,
               end: int | None = None, method: str = "held_karp"):
    if method not in ("held_karp", "brute_force"):
        raise ConfigError(f"unknown oracle method {method!r}")
    if open_path:
        if start is None or end is None:
            raise ConfigError("open oracle needs --start and --end")
        fn = held_karp_open if method == "held_karp" else brute_force_open
        return fn(inst, None, start, end)
    fn = held_karp_closed if method == "held_karp" else brute_force_closed
    return fn(inst)


# ------------------------------------------------------------------ compare

def _study_seed(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


def study_instances(n: int, count: int, seed: int) -> list[Instance]:
    """``count`` uniform instances of size ``n``; instance ``k`` uses seed ``seed + k``."""
    return [random_instance(n, seed + k) for k in range(count)]


def run_compare(sizes: Sequence[int], count: int = 50, seed: int = 0,
                params: SwaiParams = RANDOM_STUDY_PARAMS, workers: int = 1) -> list[dict]:
    """SWAI vs Metropolis SA on random instances under the same schedule."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    sa = SaParams(params.p0, params.beta, params.p_min)
    rows = []
    for n in sizes:
        if n < 3:
            raise ConfigError("sizes must be >= 3")
        insts = study_instances(n, count, seed)

        def job(k):
            inst = insts[k]
            a = swai_solve(inst, None, params, seed=_study_seed(seed, n, k, 0)).cost
            b = sa_solve(inst, sa, seed=_study_seed(seed, n, k, 1)).cost
            opt = held_karp_closed(inst).optimal_cost if n <= 16 else None
            return a, b, opt
        res = _map(job, range(count), workers)
        row = {"n": n, "count": count, "oracle": "held_karp" if n <= 16 else "none"}
        if n <= 16:
            row["swai_median"], row["swai_q1"], row["swai_q3"] = _quartiles([a / o for a, _, o in res])
            row["sa_median"], row["sa_q1"], row["sa_q3"] = _quartiles([b / o for _, b, o in res])
        else:
            for k in ("swai_median", "swai_q1", "swai_q3", "sa_median", "sa_q1", "sa_q3"):
                row[k] = None
        row["length_ratio_median"] = float(np.median([a / b for a, b, _ in res]))
        rows.append(row)
    return rows


# ------------------------------------------------------------------ ablations

DEFAULT_AXIS_VALUES = {"bits": [2, 3, 4, 6], "passes": [400, 3400], "runs": [1, 2, 3, 5],
                       "no_2opt": None, "no_segref": None}


def _ablate_random(axis: str, values, n: int, count: int, seed: int, engine: str,
                   params: SwaiParams, workers: int) -> list[dict]:
    insts = study_instances(n, count, seed)
    opts = _map(lambda i: held_karp_closed(i).optimal_cost, insts, workers) if n <= HELD_KARP_LIMIT else None
    if opts is None:
        raise ConfigError(f"random ablations need Held-Karp references (n <= {HELD_KARP_LIMIT})")
    rows = []
    for v in values:
        def job(k):
            inst, rng = insts[k], _study_seed(seed, n, k)
            if axis == "bits":
                if engine == "macro":
                    return macro_solve(inst, range(n), MacroConfig(local_bits=int(v)),
                                       seed=np.random.SeedSequence([seed, n, k])).cost
                q = quantize_weights(inst, None, int(v))[0].astype(np.float64)
                return swai_solve(inst, None, params, seed=rng, weights=q).cost
            if axis == "passes":
                if engine == "macro":
                    raise ConfigError("the passes axis runs on the ideal engine")
                return swai_solve(inst, None, params.with_passes(int(v)), seed=rng).cost
            # runs: best of the first v restarts of a fixed seed list
            return min(swai_solve(inst, None, params, seed=_study_seed(seed, n, k, r)).cost
                       for r in range(int(v)))
        devs = [c / o for c, o in zip(_map(job, range(count), workers), opts)]
        med, q1, q3 = _quartiles(devs)
        rows.append({"axis": axis, "value": v, "instance": f"random{n}", "count": count,
                     "median": med, "q1": q1, "q3": q3})
    return rows


def _ablate_pipeline(axis: str, instances: Sequence[str], seeds: int, opts: SolveOptions,
                     optima: ReferenceOptima) -> list[dict]:
    rows = []
    for name in instances:
        inst = resolve_source(name)
        opt = optima.get(inst.name)
        if opt is None:
            raise ConfigError(f"pipeline ablations need a known optimum for {inst.name}")
        variants = [("baseline", opts)]
        if axis == "no_2opt":
            variants.append(("no_2opt", replace(opts, use_two_opt=False)))
        else:
            variants.append(("no_segref", replace(opts, use_refine=False)))
        for label, o in variants:
            devs = [hierarchical_solve(inst, replace(o, seed=s)).cost / opt
                    for s in run_seeds(opts.seed, seeds)]
            med, q1, q3 = _quartiles(devs)
            rows.append({"axis": axis, "value": label, "instance": inst.name, "count": seeds,
                         "median": med, "q1": q1, "q3": q3})
    return rows


def run_ablate(axis: str, values=None, n: int = 16, count: int = 100, seed: int = 0,
               engine: str = "ideal", params: SwaiParams = RANDOM_STUDY_PARAMS,
               instances: Sequence[str] = ("kroE100", "lin318"), seeds: int = 5,
               opts: SolveOptions = SolveOptions(), workers: int = 1,
               optima: ReferenceOptima | None = None) -> list[dict]:
    """Sweep one axis, holding everything else fixed.

    ``bits``/``passes``/``runs`` use ``count`` random ``n``-city instances
    against Held-Karp; ``no_2opt``/``no_segref`` compare the full pipeline
    with the stage disabled on TSPLIB ``instances`` over ``seeds`` seeds.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {', '.join(AXES)}")
    if axis in ("no_2opt", "no_segref"):
        return _ablate_pipeline(axis, instances, seeds, opts,
                                ReferenceOptima() if optima is None else optima)
    values = DEFAULT_AXIS_VALUES[axis] if values is None else list(values)
    return _ablate_random(axis, values, n, count, seed, engine, params, workers)


# ------------------------------------------------------------------ reports

def _clean(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def format_report(rows: Sequence[dict], fmt: str = "json", fields: Sequence[str] | None = None) -> str:
    if fmt not in ("json", "csv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    fields = list(fields or (rows[0].keys() if rows else SOLVE_FIELDS))
    rows = [{k: _clean(r.get(k)) for k in fields} for r in rows]
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def emit_report(rows: Sequence[dict], path: str | Path | None = None, fmt: str = "json",
                fields: Sequence[str] | None = None) -> str:
    """Render ``rows`` and write them to ``path`` (if given); returns the text."""
    text = format_report(rows, fmt, fields)
    if path is not None:
        path = Path(path)
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc
    return text


def read_report(path: str | Path, fmt: str | None = None) -> list[dict]:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "json")
    text = path.read_text()
    if fmt == "json":
        return json.loads(text)
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        out.append({k: _parse_cell(v) for k, v in r.items()})
    return out


def _parse_cell(v: str):
    if v == "":
        return None
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v

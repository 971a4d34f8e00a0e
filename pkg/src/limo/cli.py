"""``limo`` command-line interface."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .clustering import dendrogram
from .errors import ConfigError, LimoError
from .hierarchy import SolveOptions
from .instances import format_tour
from .macro import MacroConfig, MacroProblem, ScheduleTable, jsonl_writer, macro_anneal
from .swai import SwaiParams, TSPLIB_PARAMS, RANDOM_STUDY_PARAMS


def _sizes(text: str) -> list[int]:
    """``9..24`` (inclusive range) or ``9,12,16``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None


def _add_schedule_args(p, defaults: SwaiParams):
    p.add_argument("--p0", type=float, default=defaults.p0)
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--pmin", type=float, default=defaults.p_min)


def _add_output_args(p):
    p.add_argument("--out", help="write the report here (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _macro_config(args) -> MacroConfig:
    return MacroConfig(local_bits=args.bits, schedule=ScheduleTable.resolve(args.schedule))


def _solve_options(args) -> SolveOptions:
    params = SwaiParams(p0=args.p0, beta=args.beta, p_min=args.pmin)
    return SolveOptions(engine=args.engine, params=params, macro=_macro_config(args),
                        n_refine=args.nrefine, k_neighbors=args.k, seed=args.seed,
                        workers=args.workers, use_two_opt=not args.no_2opt,
                        use_refine=not args.no_segref)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="limo", description="Annealed-insertion TSP solvers and benchmarks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="hierarchical solve of one instance")
    p.add_argument("source", help="TSPLIB file, bundled instance name, or random:N[:SEED]")
    p.add_argument("--engine", choices=("ideal", "macro"), default="ideal")
    _add_schedule_args(p, TSPLIB_PARAMS)
    p.add_argument("--nrefine", type=int, default=10)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--schedule", default="decay_0.9995",
                   help="macro schedule: built-in name or a 'slope, pass_end' file")
    p.add_argument("--bits", type=int, default=4, help="macro coupling bit width")
    p.add_argument("--no-2opt", action="store_true")
    p.add_argument("--no-segref", action="store_true")
    p.add_argument("--tour", help="write the best tour in TSPLIB .tour format")
    _add_output_args(p)

    p = sub.add_parser("compare", help="SWAI vs Metropolis SA on random instances")
    p.add_argument("--sizes", type=_sizes, default=_sizes("9..16"))
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_schedule_args(p, RANDOM_STUDY_PARAMS)
    _add_output_args(p)

    p = sub.add_parser("ablate", help="sweep one ablation axis")
    p.add_argument("--axis", required=True, help="|".join(bench.AXES))
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--engine", choices=("ideal", "macro"), default="ideal")
    p.add_argument("--instances", default="kroE100,lin318")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    _add_schedule_args(p, RANDOM_STUDY_PARAMS)
    _add_output_args(p)

    p = sub.add_parser("oracle", help="exact solution of a small instance")
    p.add_argument("source")
    p.add_argument("--open", action="store_true", help="Hamiltonian path between --start and --end")
    p.add_argument("--start", type=int, help="0-based start city")
    p.add_argument("--end", type=int, help="0-based end city")
    p.add_argument("--method", choices=("held_karp", "brute_force"), default="held_karp")
    p.add_argument("--tour", help="write the optimal tour in TSPLIB .tour format")

    p = sub.add_parser("cluster-dump", help="PCA-bisection dendrogram as JSON")
    p.add_argument("source")
    p.add_argument("--max", type=int, default=16, dest="max_size")
    p.add_argument("--out")

    p = sub.add_parser("trace", help="macro datapath trace as line-delimited JSON")
    p.add_argument("source", help="instance with at most 16 cities, or random:N[:SEED]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", default="decay_0.9995")
    p.add_argument("--bits", type=int, default=4)
    p.add_argument("--word", type=int, help="hold r_ref fixed at this value instead of the schedule")
    p.add_argument("--passes", type=int, default=1, help="passes to run with --word")
    p.add_argument("--literal-polarity", action="store_true")
    p.add_argument("--out")
    return ap


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_solve(args) -> None:
    inst = bench.resolve_source(args.source)
    res = bench.run_solve(inst, _solve_options(args), args.runs)
    if args.tour:
        Path(args.tour).write_text(format_tour(res.tour, inst.name, f"length {res.tour.cost:g}"))
    text = bench.emit_report([res.row], args.out, args.format, bench.SOLVE_FIELDS)
    if not args.out:
        sys.stdout.write(text)


def _cmd_compare(args) -> None:
    params = SwaiParams(p0=args.p0, beta=args.beta, p_min=args.pmin)
    rows = bench.run_compare(args.sizes, args.count, args.seed, params, args.workers)
    _write_or_print(bench.format_report(rows, args.format, bench.COMPARE_FIELDS), args.out)


def _cmd_ablate(args) -> None:
    values = None
    if args.values:
        values = [int(v) for v in args.values.split(",") if v]
    params = SwaiParams(p0=args.p0, beta=args.beta, p_min=args.pmin)
    rows = bench.run_ablate(args.axis, values, n=args.n, count=args.count, seed=args.seed,
                            engine=args.engine, params=params,
                            instances=[s for s in args.instances.split(",") if s],
                            seeds=args.seeds, opts=SolveOptions(seed=args.seed), workers=args.workers)
    _write_or_print(bench.format_report(rows, args.format, bench.ABLATE_FIELDS), args.out)


def _cmd_oracle(args) -> None:
    inst = bench.resolve_source(args.source)
    res = bench.run_oracle(inst, args.open, args.start, args.end, args.method)
    if args.tour:
        Path(args.tour).write_text(format_tour(res.tour, inst.name, "optimal"))
    print(json.dumps({"instance": inst.name, "n": inst.n, "closed": res.tour.closed,
                      "optimal_cost": res.optimal_cost, "tour": list(res.tour.order)}))


def _cmd_cluster_dump(args) -> None:
    inst = bench.resolve_source(args.source)
    if inst.coords is None:
        raise ConfigError(f"{inst.name} has no coordinates to cluster")
    nodes = dendrogram(inst.coords, args.max_size)
    _write_or_print(json.dumps({"instance": inst.name, "max_size": args.max_size, "nodes": nodes}) + "\n",
                    args.out)


def _cmd_trace(args) -> None:
    inst = bench.resolve_source(args.source)
    if inst.n > 16:
        raise ConfigError(f"trace runs one macro problem of at most 16 cities, got {inst.n}")
    cfg = MacroConfig(local_bits=args.bits, schedule=ScheduleTable.resolve(args.schedule),
                      literal_polarity=args.literal_polarity, fixed_word=args.word,
                      fixed_passes=args.passes)
    prob = MacroProblem.from_instance(inst, range(inst.n), cfg.local_bits)
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        macro_anneal([prob], cfg, args.seed, trace=jsonl_writer(fh))
    finally:
        if args.out:
            fh.close()
    print(json.dumps({"best_cost": prob.best_cost, "best_tour": [int(prob.labels[i]) for i in prob.best_order]}),
          file=sys.stderr)


COMMANDS = {"solve": _cmd_solve, "compare": _cmd_compare, "ablate": _cmd_ablate,
            "oracle": _cmd_oracle, "cluster-dump": _cmd_cluster_dump, "trace": _cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (LimoError, ValueError, OSError) as exc:
        print(f"limo: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

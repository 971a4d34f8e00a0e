"""Acceptance suite: twelve end-to-end criteria, one PASS/FAIL line each.

Run with ``pytest -v -s tests/test_acceptance.py`` (lines are printed even
without ``-s``).
"""
from __future__ import annotations

import itertools
import json
import time

import numpy as np
import pytest

from limo import bench
from limo.clustering import between_variance, build_clusters, dominant_eigenvector, otsu_cut
from limo.data import load_instance
from limo.hierarchy import SolveOptions, count_improving_moves, hierarchical_solve, two_opt_knn
from limo.instances import format_tour, random_instance, tour_length
from limo.macro import (
    BUILTIN_SCHEDULES, BitStream, MacroConfig, MacroProblem, ScheduleTable, macro_anneal,
    quantize_weights, threshold_bit, vmm_sign,
)
from limo.oracle import brute_force_closed, held_karp_closed, held_karp_open
from limo.swai import TSPLIB_PARAMS, nearest_neighbor


@pytest.fixture
def report(capsys):
    def emit(num: int, title: str, ok: bool, detail: str, started: float):
        with capsys.disabled():
            print(f"\n[acceptance {num:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail} "
                  f"({time.perf_counter() - started:.1f}s)")
        assert ok, f"criterion {num} failed: {detail}"
    return emit


def test_01_oracle_equivalence(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for k in range(200):
        n = int(rng.integers(4, 10))
        inst = random_instance(n, 10_000 + k)
        if held_karp_closed(inst).optimal_cost != brute_force_closed(inst).optimal_cost:
            mismatches += 1
        if n <= 8:
            s, e = (int(x) for x in rng.choice(n, 2, replace=False))
            best = min(tour_length(inst, (s,) + p + (e,), closed=False)
                       for p in itertools.permutations([c for c in range(n) if c not in (s, e)]))
            if held_karp_open(inst, None, s, e).optimal_cost != pytest.approx(best, rel=1e-12, abs=0):
                mismatches += 1
    elapsed = time.perf_counter() - t0
    report(1, "Held-Karp equals exhaustive search", mismatches == 0 and elapsed < 60,
           f"{mismatches} mismatches over 200 instances", t0)


def test_02_threshold_sampler(report):
    t0 = time.perf_counter()
    s = BitStream(7)
    rate3 = np.mean([threshold_bit(s.take(3), 3) for _ in range(100_000)])
    worst = 0.0
    for d in range(1, 16):
        rate = np.mean([threshold_bit(s.take(4), d) for _ in range(100_000)])
        worst = max(worst, abs(rate - d / 16))
    ok = abs(rate3 - 0.375) <= 0.01 and worst <= 0.012
    report(2, "threshold sampler rates", ok, f"N=3,d=3 rate {rate3:.4f}; N=4 worst |err| {worst:.4f}", t0)


def test_03_swai_vs_metropolis(report):
    t0 = time.perf_counter()
    rows = {r["n"]: r for r in bench.run_compare([9, 12, 16], count=50, seed=0)}
    r16 = rows[16]
    ok = r16["swai_median"] <= r16["sa_median"] and r16["swai_median"] <= 1.05
    detail = "; ".join(f"n={n}: SWAI {r['swai_median']:.4f} vs SA {r['sa_median']:.4f}" for n, r in rows.items())
    report(3, "SWAI median <= Metropolis median at n=16 and <= 1.05",
           ok and time.perf_counter() - t0 < 600, detail, t0)


def test_04_bit_width_direction(report):
    t0 = time.perf_counter()
    rows = bench.run_ablate("bits", [3, 4], n=16, count=100, seed=0)
    m3, m4 = rows[0]["median"], rows[1]["median"]
    report(4, "3-bit median deviation > 4-bit", m3 > m4 and time.perf_counter() - t0 < 600,
           f"3-bit {m3:.4f}, 4-bit {m4:.4f}", t0)


def test_05_passes_direction(report):
    t0 = time.perf_counter()
    rows = bench.run_ablate("passes", [400, 3400], n=16, count=100, seed=0)
    m400, m3400 = rows[0]["median"], rows[1]["median"]
    report(5, "3400-pass median <= 400-pass median", m3400 <= m400 and time.perf_counter() - t0 < 600,
           f"400 passes {m400:.4f}, 3400 passes {m3400:.4f}", t0)


def _median_deviation(name: str, opts: SolveOptions, seeds=range(5)) -> float:
    inst = load_instance(name)
    opt = bench.ReferenceOptima().get(name)
    return float(np.median([hierarchical_solve(inst, SolveOptions(**{**opts.__dict__, "seed": s})).cost / opt
                            for s in seeds]))


def test_06_tsplib_end_to_end(report):
    t0 = time.perf_counter()
    opts = SolveOptions(params=TSPLIB_PARAMS, n_refine=10)
    kro = _median_deviation("kroE100", opts)
    lin = _median_deviation("lin318", opts)
    ok = kro <= 1.08 and lin <= 1.12 and time.perf_counter() - t0 < 1800
    report(6, "TSPLIB medians within widened bounds", ok, f"kroE100 {kro:.4f} (<=1.08), lin318 {lin:.4f} (<=1.12)", t0)


def test_07_pipeline_ablation_direction(report):
    t0 = time.perf_counter()
    base = bench.run_ablate("no_2opt", instances=["kroE100"], seeds=5)
    seg = bench.run_ablate("no_segref", instances=["kroE100"], seeds=5)
    b, n2 = base[0]["median"], base[1]["median"]
    ns = seg[1]["median"]
    ok = n2 >= b and ns >= b
    report(7, "disabling 2-opt / segment refinement does not help", ok,
           f"baseline {b:.4f}, no 2-opt {n2:.4f}, no segment refinement {ns:.4f}", t0)


def test_08_clustering_properties(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    pts = rng.random((10_000, 2))
    leaves = build_clusters(pts, 16)
    members = np.sort(np.concatenate([c.members for c in leaves]))
    partition_ok = all(len(c) <= 16 for c in leaves) and np.array_equal(members, np.arange(10_000))
    otsu_bad = 0
    for _ in range(1000):
        s = np.sort(rng.normal(size=int(rng.integers(2, 60))) * rng.uniform(0.1, 100))
        k = otsu_cut(s)
        best = max(between_variance(s, j) for j in range(1, len(s)))
        otsu_bad += between_variance(s, k) < best - 1e-9 * max(best, 1.0)
    worst = 0.0
    for _ in range(1000):
        A = rng.normal(size=(2, 2))
        S = A @ A.T
        v = dominant_eigenvector(S)
        worst = max(worst, float(np.linalg.norm(S @ v - (v @ S @ v) * v)))
    ok = partition_ok and otsu_bad == 0 and worst <= 1e-10
    report(8, "clustering partition / Otsu optimality / eigen residual", ok,
           f"{len(leaves)} leaves, partition {partition_ok}, Otsu misses {otsu_bad}, max residual {worst:.1e}", t0)


def test_09_two_opt_postcondition(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    leftover, increases = 0, 0
    for k in range(100):
        inst = random_instance(50, 20_000 + k)
        start = rng.permutation(50).tolist()
        out = two_opt_knn(inst, start, K=20)
        leftover += count_improving_moves(inst, out, 20)
        increases += tour_length(inst, out) > tour_length(inst, start)
    ok = leftover == 0 and increases == 0 and time.perf_counter() - t0 < 60
    report(9, "2-opt leaves no improving K-neighbour move", ok,
           f"{leftover} improving moves left, {increases} cost increases", t0)


def test_10_macro_twin_fidelity(report):
    t0 = time.perf_counter()
    nn_ok = True
    for seed in range(20):
        inst = random_instance(16, 30_000 + seed)
        q = quantize_weights(inst)[0].astype(float)
        p = MacroProblem.from_instance(inst, range(16))
        macro_anneal([p], MacroConfig(fixed_word=0, fixed_passes=3), seed)
        nn_ok &= p.best_order == list(nearest_neighbor(inst, weights=q).order)
    inst = random_instance(16, 1)
    probs = [MacroProblem.from_instance(inst, range(16)) for _ in range(5)]
    records = []
    cfg = MacroConfig(schedule=ScheduleTable(((200, 40),), initial_word=30000))
    macro_anneal(probs, cfg, 3, trace=records.append)
    per_step = {}
    for r in records:
        per_step.setdefault((r["pass"], r["position"]), set()).add((r["global_bit"], r["survivor_mask"], r["selection"]))
    shared_ok = all(len(v) == 1 for v in per_step.values()) and len({tuple(p.best_order) for p in probs}) == 1
    table = ScheduleTable.builtin("decay_0.9995")
    verbatim = ((10, 267), (8, 575), (7, 940), (5, 1386), (4, 1961), (3, 2772), (2, 4158), (1, 5990))
    table_ok = table.total() == 19256 and table.segments == verbatim == BUILTIN_SCHEDULES["decay_0.9995"]
    ok = nn_ok and shared_ok and table_ok
    report(10, "macro twin: zero word = quantized NN, shared traces, schedule table", ok,
           f"NN reproduction {nn_ok}, identical traces {shared_ok}, table total {table.total()}", t0)


def test_11_parallel_determinism(report):
    t0 = time.perf_counter()
    inst = load_instance("pcb442")
    outs = []
    for workers in (1, 8):
        res = bench.run_solve(inst, SolveOptions(params=TSPLIB_PARAMS, seed=11, workers=workers))
        row = {k: v for k, v in res.row.items() if k != "wall_time_seconds"}
        outs.append((format_tour(res.tour, inst.name).encode(), json.dumps(row, sort_keys=True).encode()))
    ok = outs[0] == outs[1] and time.perf_counter() - t0 < 600
    report(11, "1 vs 8 workers give byte-identical tour and report", ok,
           f"tour bytes equal {outs[0][0] == outs[1][0]}, report bytes equal {outs[0][1] == outs[1][1]}", t0)


def test_12_vmm_sign(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    bad = 0
    for _ in range(1000):
        rows, cols = int(rng.integers(1, 80)), int(rng.integers(1, 20))
        w = rng.integers(-1, 2, (rows, cols))
        x = rng.integers(0, 2, rows)
        acc = [sum(int(x[i]) * int(w[i, j]) for i in range(rows)) for j in range(cols)]
        bad += list(vmm_sign(x, w)) != [-1 if a < 0 else 1 for a in acc]
    report(12, "sign-only VMM matches integer dot products", bad == 0, f"{bad} mismatches in 1000 cases", t0)

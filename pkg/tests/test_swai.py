from __future__ import annotations

import math

import numpy as np
import pytest

from limo.errors import EmptyCandidateError
from limo.instances import Instance, random_instance
from limo.macro import quantize_weights
from limo.oracle import held_karp_closed
from limo.swai import (
    RANDOM_STUDY_PARAMS, SwaiParams, construct_pass, linear_gate, nearest_neighbor,
    proportional_select, stochasticity_schedule, swai_solve,
)


def test_linear_gate():
    assert linear_gate(0, 5) == 1.0
    assert linear_gate(5, 5) == 0.0
    assert linear_gate(3, 12) == 0.75
    with pytest.raises(ValueError):
        linear_gate(6, 5)
    with pytest.raises(ValueError):
        linear_gate(1, 0)


def test_proportional_select_frequencies():
    rng = np.random.default_rng(0)
    assert proportional_select([1.0], rng) == 0
    draws = np.array([proportional_select([1, 1, 2], rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 2) - 0.5) < 0.01
    draws = np.array([proportional_select([0, 0], rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.5) < 0.01
    with pytest.raises(EmptyCandidateError):
        proportional_select([], rng)


def test_schedule_pass_count():
    ps = stochasticity_schedule(0.2, 0.9995, 0.01)
    closed_form = math.ceil(math.log(0.05) / math.log(0.9995))
    assert abs(len(ps) - closed_form) <= 1
    assert len(ps) == 5990
    assert ps[-1] >= 0.01 > ps[-1] * 0.9995
    assert len(stochasticity_schedule(0.0, 0.9, 0.01)) == 1


def test_with_passes_hits_target():
    for passes in (1, 400, 3400, 5990):
        assert RANDOM_STUDY_PARAMS.with_passes(passes).passes == passes


def _line():
    return Instance("line", 4, "REAL_EUC", coords=np.array([[0, 0], [1, 0], [2, 0], [3, 0]], float))


def test_greedy_pass_on_a_line():
    inst = _line()
    params = SwaiParams().pinned(0, 3)
    t = construct_pass(inst, None, params, 0.0, np.random.default_rng(0))
    assert t.order == (0, 1, 2, 3) and not t.closed and t.cost == pytest.approx(3.0)


def test_two_city_closed():
    inst = random_instance(2, 0)
    t = construct_pass(inst, None, SwaiParams(), 0.7, np.random.default_rng(0))
    assert t.order == (0, 1)
    assert t.cost == pytest.approx(2 * inst.matrix()[0, 1])


def test_p0_zero_equals_nearest_neighbor():
    inst = random_instance(20, 2)
    params = SwaiParams(p0=0.0, beta=0.9, p_min=0.01)
    assert swai_solve(inst, None, params, seed=5).order == nearest_neighbor(inst).order


def test_kernel_matches_reference_passes():
    inst = random_instance(14, 9)
    for params in (SwaiParams(0.4, 0.9, 0.05), SwaiParams(0.4, 0.9, 0.05).pinned(3, 8)):
        ps = stochasticity_schedule(params.p0, params.beta, params.p_min)
        rng = np.random.default_rng(11)
        best = None
        for p in ps:
            t = construct_pass(inst, None, params, p, rng)
            if best is None or t.cost < best.cost:
                best = t
        fast = swai_solve(inst, None, params, seed=11)
        assert fast.order == best.order and fast.cost == pytest.approx(best.cost)


def test_open_mode_pins_and_subset():
    inst = random_instance(30, 1)
    cities = [2, 5, 7, 11, 13, 17, 19, 23]
    t = swai_solve(inst, cities, SwaiParams(0.3, 0.99, 0.05).pinned(7, 19), seed=3)
    assert t.order[0] == 7 and t.order[-1] == 19 and sorted(t.order) == cities
    with pytest.raises(ValueError):
        swai_solve(inst, cities, SwaiParams().pinned(7, 7))


def test_seed_determinism():
    inst = random_instance(25, 0)
    p = SwaiParams(0.3, 0.99, 0.05)
    assert swai_solve(inst, None, p, seed=42).order == swai_solve(inst, None, p, seed=42).order


def test_n16_median_deviation_close_to_optimal():
    devs = []
    for seed in range(5):
        inst = random_instance(16, 100 + seed)
        devs.append(swai_solve(inst, None, RANDOM_STUDY_PARAMS, seed=seed).cost
                    / held_karp_closed(inst).optimal_cost)
    assert np.median(devs) <= 1.05


def test_quantization_degrades_gracefully():
    dev = {b: [] for b in (3, 4, 8)}
    for seed in range(30):
        inst = random_instance(16, seed)
        opt = held_karp_closed(inst).optimal_cost
        for b in dev:
            q = quantize_weights(inst, None, b)[0].astype(float)
            dev[b].append(swai_solve(inst, None, RANDOM_STUDY_PARAMS, seed=seed, weights=q).cost / opt)
    assert np.median(dev[3]) > np.median(dev[4])
    assert np.median(dev[4]) - np.median(dev[8]) < 0.03

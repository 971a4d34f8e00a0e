from __future__ import annotations

import math

import numpy as np
import pytest

from limo.baseline_sa import SaParams, draw_swaps, metropolis_accept, sa_solve
from limo.instances import random_instance, tour_length
from limo.swai import RANDOM_STUDY_PARAMS, stochasticity_schedule, swai_solve
from limo import _kernels


def test_metropolis_accept_rules():
    rng = np.random.default_rng(0)
    assert all(metropolis_accept(-1.0, 0.1, rng) for _ in range(100))
    assert not metropolis_accept(701.0, 1.0, rng)
    rate = np.mean([metropolis_accept(2.0, 2.0, rng) for _ in range(100_000)])
    assert abs(rate - math.exp(-1)) < 0.01
    with pytest.raises(ValueError):
        metropolis_accept(1.0, 0.0, rng)


def test_params_validation():
    with pytest.raises(ValueError):
        SaParams(p0=0.1, p_min=0.2)
    with pytest.raises(ValueError):
        SaParams(beta=1.0)


def test_swap_delta_matches_recomputation():
    rng = np.random.default_rng(1)
    inst = random_instance(9, 2)
    D = inst.matrix()
    for _ in range(200):
        tour = rng.permutation(9)
        i, j = rng.choice(9, 2, replace=False)
        delta = _kernels.swap_delta(tour, D, i, j)
        swapped = tour.copy()
        swapped[i], swapped[j] = swapped[j], swapped[i]
        assert delta == pytest.approx(tour_length(inst, swapped) - tour_length(inst, tour), abs=1e-12)


def test_swaps_are_distinct_positions():
    i, j, u = draw_swaps(np.random.default_rng(0), 50, 40, 7)
    assert np.all(i != j) and i.max() < 7 and j.max() < 7 and j.min() >= 0
    assert u.shape == (50, 40)


def test_three_cities_and_determinism():
    inst = random_instance(3, 0)
    t = sa_solve(inst, SaParams(0.3, 0.9, 0.05), seed=1)
    assert t.cost == pytest.approx(tour_length(inst, [0, 1, 2]))
    inst = random_instance(20, 1)
    p = SaParams(0.3, 0.99, 0.05)
    a, b = sa_solve(inst, p, seed=7), sa_solve(inst, p, seed=7)
    assert a.order == b.order and sorted(a.order) == list(range(20))


def test_pass_count_matches_swai():
    assert len(stochasticity_schedule(0.2, 0.9995, 0.01)) == RANDOM_STUDY_PARAMS.passes


@pytest.mark.xfail(strict=True, reason="measured: the swap baseline under T = p*d_max reaches a "
                   "lower median length than SWAI at n=20 (about 3.5% shorter); see decisions ledger")
def test_swai_beats_sa_at_n20():
    sa, sw = [], []
    p = SaParams(0.2, 0.9995, 0.01)
    for seed in range(40):
        inst = random_instance(20, seed)
        sa.append(sa_solve(inst, p, seed=seed).cost)
        sw.append(swai_solve(inst, None, RANDOM_STUDY_PARAMS, seed=seed).cost)
    assert np.median(sa) >= np.median(sw)

"""Swap-move Metropolis simulated annealing, the baseline for SWAI.

The temperature for a pass is ``T = p * d_max * scale`` with ``p`` following
the same geometric schedule as SWAI, so both algorithms run the same number
of passes. Each pass proposes ``swaps_per_pass`` swaps of two tour positions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .instances import Instance, Tour, tour_length
from .swai import stochasticity_schedule


@dataclass(frozen=True)
class SaParams:
    p0: float = 0.2
    beta: float = 0.9995
    p_min: float = 0.01
    swaps_per_pass: int | None = None  # None -> n
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in (0, 1], got {self.p0}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 < self.p_min < self.p0:
            raise ValueError(f"p_min must lie in (0, p0), got {self.p_min}")
        if self.swaps_per_pass is not None and self.swaps_per_pass < 1:
            raise ValueError("swaps_per_pass must be positive")


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if delta < 0:
        return True
    x = delta / temperature
    if x > 700.0:
        return False
    return bool(rng.random() < math.exp(-x))


def draw_swaps(rng: np.random.Generator, passes: int, per_pass: int, n: int):
    """Uniform unordered position pairs ``i != j`` plus acceptance uniforms."""
    i = rng.integers(0, n, size=(passes, per_pass))
    j = rng.integers(0, n - 1, size=(passes, per_pass))
    j = j + (j >= i)
    u = rng.random((passes, per_pass))
    return i, j, u


def sa_solve(inst: Instance, params: SaParams = SaParams(), seed=0) -> Tour:
    n = inst.n
    if n < 3:
        raise ValueError("Metropolis baseline needs n >= 3")
    rng = np.random.default_rng(seed)
    D = inst.matrix()
    start = rng.permutation(n)
    ps = stochasticity_schedule(params.p0, params.beta, params.p_min)
    temps = ps * float(D.max()) * params.scale
    per_pass = params.swaps_per_pass or n
    I, J, U = draw_swaps(rng, len(ps), per_pass, n)
    best = _kernels.sa_run(D, start.astype(np.int64), temps, I, J, U)
    return Tour(tuple(int(c) for c in best), True, tour_length(inst, best, True))

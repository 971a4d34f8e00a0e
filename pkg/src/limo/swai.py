"""Significance-weighted annealed insertion (SWAI) in real arithmetic.

A pass builds a tour left to right. At every position a global Bernoulli(p)
bit chooses between greedy insertion (nearest unused city to the previous
one) and stochastic insertion, where each unused city ``j`` is drawn with
weight ``1 - d(prev, j) / d_max``. ``p`` decays geometrically per pass and the
best tour seen is returned.

Randomness protocol: every constructed position consumes exactly two
uniforms ``(u_bit, u_select)`` from the generator, in order, whether or not
the stochastic branch fires. The compiled solver and the step-by-step
:func:`construct_pass` therefore agree bit for bit for equal generators.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import EmptyCandidateError
from .instances import Instance, Tour, tour_length


@dataclass(frozen=True)
class SwaiParams:
    p0: float = 0.2
    beta: float = 0.9995
    p_min: float = 0.01
    mode: str = "closed"
    start: int | None = None
    end: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.p_min > 0.0:
            raise ValueError(f"p_min must be positive, got {self.p_min}")
        if self.mode not in ("closed", "open"):
            raise ValueError(f"mode must be 'closed' or 'open', got {self.mode!r}")

    def pinned(self, start: int, end: int | None = None) -> "SwaiParams":
        mode = "closed" if end is None else "open"
        return replace(self, mode=mode, start=start, end=end)

    def with_passes(self, passes: int) -> "SwaiParams":
        """Same (p0, p_min) but with ``beta`` chosen to give ``passes`` passes."""
        if passes < 1:
            raise ValueError("passes must be >= 1")
        # aim halfway between the last kept and the first dropped power
        beta = (self.p_min / self.p0) ** (1.0 / (passes - 0.5))
        return replace(self, beta=beta)

    @property
    def passes(self) -> int:
        return len(stochasticity_schedule(self.p0, self.beta, self.p_min))


# Methods hyperparameters for TSPLIB instances up to ~1000 cities.
TSPLIB_PARAMS = SwaiParams(p0=0.3, beta=0.995, p_min=0.05)
RANDOM_STUDY_PARAMS = SwaiParams(p0=0.2, beta=0.9995, p_min=0.01)


def stochasticity_schedule(p0: float, beta: float, p_min: float) -> np.ndarray:
    """Values of ``p`` for each pass: ``p0, p0*beta, ...`` while ``p >= p_min``.

    The first pass always runs, so a degenerate ``p0 < p_min`` still yields
    one (greedy) construction.
    """
    ps = [p0]
    p = p0 * beta
    while p >= p_min:
        ps.append(p)
        p *= beta
    return np.array(ps)


def linear_gate(d: float, d_max: float) -> float:
    if not d_max > 0:
        raise ValueError(f"d_max must be positive, got {d_max}")
    if d < 0 or d > d_max:
        raise ValueError(f"distance {d} outside [0, {d_max}]")
    return 1.0 - d / d_max


def _select(weights: np.ndarray, u: float) -> int:
    total = float(np.sum(weights)) if weights.size else 0.0
    if weights.size == 0:
        raise EmptyCandidateError("no candidates to select from")
    if total > 0.0:
        cum = np.cumsum(weights)
        i = int(np.searchsorted(cum, u * total, side="right"))
        if i >= weights.size:
            i = int(np.nonzero(weights > 0)[0][-1])
        return i
    return min(int(u * weights.size), weights.size - 1)


def proportional_select(weights: Sequence[float], rng: np.random.Generator) -> int:
    """Index ``i`` with probability ``weights[i] / sum``; uniform if all zero."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise EmptyCandidateError("no candidates to select from")
    return _select(w, rng.random())


def _resolve(inst: Instance, cities, params: SwaiParams):
    idx = np.arange(inst.n) if cities is None else np.unique(np.asarray(cities, dtype=np.int64))
    start = int(idx[0]) if params.start is None else int(params.start)
    pos = {c: k for k, c in enumerate(idx.tolist())}
    if start not in pos:
        raise ValueError(f"start city {start} not in subset")
    open_mode = params.mode == "open"
    if open_mode:
        if params.end is None or params.end not in pos:
            raise ValueError("open mode needs an end city inside the subset")
        if params.end == start and len(idx) > 1:
            raise ValueError("open mode needs start != end")
        end = pos[params.end]
    else:
        end = -1
    return idx, pos[start], end, open_mode


def construct_pass(inst: Instance, cities: Sequence[int] | None, params: SwaiParams,
                   p: float, rng: np.random.Generator, weights: np.ndarray | None = None) -> Tour:
    """Build one tour left to right at stochasticity ``p``."""
    idx, s, e, open_mode = _resolve(inst, cities, params)
    W = inst.matrix(idx) if weights is None else np.asarray(weights, dtype=np.float64)
    m = len(idx)
    d_max = float(W.max())
    unused = [k for k in range(m) if k != s and not (open_mode and k == e)]
    tour = [s]
    while unused:
        prev = tour[-1]
        u_bit, u_sel = rng.random(2)
        cand = np.array(unused)
        if u_bit < p:
            gates = 1.0 - W[prev, cand] / d_max if d_max > 0 else np.ones(len(cand))
            j = int(cand[_select(gates, u_sel)])
        else:
            j = int(cand[np.argmin(W[prev, cand])])
        tour.append(j)
        unused.remove(j)
    if open_mode and m > 1:
        tour.append(e)
    order = idx[tour]
    return Tour(tuple(int(c) for c in order), not open_mode, tour_length(inst, order, not open_mode))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def swai_solve(inst: Instance, cities: Sequence[int] | None = None,
               params: SwaiParams = RANDOM_STUDY_PARAMS, seed=0,
               weights: np.ndarray | None = None, ps: np.ndarray | None = None) -> Tour:
    """Anneal over the schedule and return the best tour.

    ``weights`` optionally replaces the distances that drive construction
    (e.g. a quantized matrix); tour costs always use the true metric.
    ``ps`` overrides the per-pass stochasticity values.
    """
    idx, s, e, open_mode = _resolve(inst, cities, params)
    m = len(idx)
    if m < 2:
        return Tour((int(idx[0]),), False, 0.0)
    C = inst.matrix(idx)
    W = C if weights is None else np.asarray(weights, dtype=np.float64)
    if W.shape != (m, m):
        raise ValueError(f"weights must be {m}x{m}")
    if ps is None:
        ps = stochasticity_schedule(params.p0, params.beta, params.p_min)
    npicks = m - 2 if open_mode else m - 1
    U = _rng(seed).random((len(ps), max(npicks, 1), 2))
    best, _ = _kernels.swai_run(W, C, s, max(e, 0), open_mode, np.asarray(ps, np.float64), U)
    order = idx[best]
    return Tour(tuple(int(c) for c in order), not open_mode, tour_length(inst, order, not open_mode))


def nearest_neighbor(inst: Instance, cities: Sequence[int] | None = None,
                     start: int | None = None, end: int | None = None,
                     weights: np.ndarray | None = None) -> Tour:
    """Deterministic greedy construction; ties go to the lowest city id."""
    params = SwaiParams(p0=0.0, p_min=1.0).pinned(start, end) if start is not None \
        else SwaiParams(p0=0.0, p_min=1.0)
    return construct_pass(inst, cities, params, 0.0, np.random.default_rng(0), weights)

"""Exact solvers for small instances: brute force and Held-Karp.

All solvers return the lexicographically smallest optimal order after
canonicalization (first city = smallest id; closed tours additionally have
second city < last city), so outputs are stable enough for golden files.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import InvalidTourError, SizeLimitError
from .instances import Instance, Tour

BRUTE_FORCE_LIMIT = 10
HELD_KARP_LIMIT = 18


@dataclass(frozen=True)
class OracleResult:
    tour: Tour
    optimal_cost: float


def _cities(inst: Instance, cities: Sequence[int] | None) -> np.ndarray:
    idx = np.arange(inst.n) if cities is None else np.unique(np.asarray(cities, dtype=np.int64))
    if cities is not None and len(idx) != len(cities):
        raise InvalidTourError("city subset contains duplicates")
    inst._check_indices(idx)
    return idx


def _tol(opt: float) -> float:
    return 1e-9 * max(1.0, abs(opt))


def _result(inst: Instance, order, closed: bool) -> OracleResult:
    tour = Tour.build(inst, order, closed)
    return OracleResult(tour, tour.cost)


def canonical_cycle(order: Sequence[int]) -> list[int]:
    """Rotate to start at the smallest id and orient so second < last."""
    order = list(order)
    k = order.index(min(order))
    order = order[k:] + order[:k]
    if len(order) > 2 and order[1] > order[-1]:
        order = [order[0]] + order[:0:-1]
    return order


def _lexmin(rows: np.ndarray, costs: np.ndarray) -> np.ndarray:
    opt = costs.min()
    cand = rows[costs <= opt + _tol(opt)]
    keys = [cand[:, c] for c in range(cand.shape[1] - 1, -1, -1)]
    return cand[np.lexsort(keys)[0]]


def brute_force_closed(inst: Instance, cities: Sequence[int] | None = None) -> OracleResult:
    idx = _cities(inst, cities)
    m = len(idx)
    if m < 2:
        raise SizeLimitError("need at least 2 cities")
    if m > BRUTE_FORCE_LIMIT:
        raise SizeLimitError(f"brute force limited to {BRUTE_FORCE_LIMIT} cities, got {m}; use held_karp_closed")
    if m <= 3:
        return _result(inst, idx, True)
    D = inst.matrix(idx)
    perms = np.array(list(itertools.permutations(range(1, m))), dtype=np.int64)
    perms = perms[perms[:, 0] < perms[:, -1]]
    rows = np.hstack([np.zeros((len(perms), 1), np.int64), perms])
    costs = D[rows, np.roll(rows, -1, axis=1)].sum(axis=1)
    best = _lexmin(rows, costs)
    return _result(inst, idx[best], True)


def brute_force_open(inst: Instance, cities: Sequence[int] | None, start: int, end: int) -> OracleResult:
    """Exhaustive enumeration of the (m-2)! interior orders of a pinned path."""
    idx = _cities(inst, cities)
    _check_pins(idx, start, end)
    if len(idx) > BRUTE_FORCE_LIMIT:
        raise SizeLimitError(f"brute force limited to {BRUTE_FORCE_LIMIT} cities")
    if len(idx) == 1:
        return _result(inst, [start], False)
    interior = [c for c in idx.tolist() if c not in (start, end)]
    if not interior:
        return _result(inst, [start, end], False)
    perms = np.array(list(itertools.permutations(interior)), dtype=np.int64)
    rows = np.hstack([np.full((len(perms), 1), start), perms, np.full((len(perms), 1), end)])
    costs = inst.pair_distances(rows[:, :-1], rows[:, 1:]).sum(axis=1)
    return _result(inst, _lexmin(rows, costs), False)


def _check_pins(idx: np.ndarray, start: int, end: int) -> None:
    members = set(idx.tolist())
    if start not in members or end not in members:
        raise InvalidTourError(f"pins ({start}, {end}) must belong to the city subset")
    if start == end and len(idx) != 1:
        raise InvalidTourError("start and end must differ unless the subset has one city")


def _check_hk_size(m: int) -> None:
    if m > HELD_KARP_LIMIT:
        raise SizeLimitError(f"Held-Karp limited to {HELD_KARP_LIMIT} cities, got {m}")


def _reconstruct(D, g, others, cur, remaining, opt):
    """Walk forward choosing the smallest feasible next local index each step."""
    order = []
    prefix = 0.0
    tol = _tol(opt)
    while remaining:
        for k in range(len(others)):
            if (remaining >> k) & 1 and prefix + D[cur, others[k]] + g[remaining, k] <= opt + tol:
                prefix += D[cur, others[k]]
                cur = others[k]
                remaining &= ~(1 << k)
                order.append(cur)
                break
        else:  # pragma: no cover - guarded by the DP invariant
            raise RuntimeError("Held-Karp reconstruction failed")
    return order


def held_karp_closed(inst: Instance, cities: Sequence[int] | None = None) -> OracleResult:
    idx = _cities(inst, cities)
    m = len(idx)
    if m < 2:
        raise SizeLimitError("need at least 2 cities")
    _check_hk_size(m)
    if m <= 3:
        return _result(inst, idx, True)
    D = inst.matrix(idx)
    others = np.arange(1, m)
    g = _kernels.held_karp_table(D, 0, others)
    full = (1 << (m - 1)) - 1
    opt = float(np.min(g[full] + D[others, 0]))
    local = [0] + _reconstruct(D, g, others, 0, full, opt)
    return _result(inst, idx[local], True)


def held_karp_open(inst: Instance, cities: Sequence[int] | None, start: int, end: int) -> OracleResult:
    """Optimal Hamiltonian path from ``start`` to ``end`` over ``cities``."""
    idx = _cities(inst, cities)
    _check_pins(idx, start, end)
    m = len(idx)
    _check_hk_size(m)
    if m == 1:
        return _result(inst, [start], False)
    if m == 2:
        return _result(inst, [start, end], False)
    pos = {c: k for k, c in enumerate(idx.tolist())}
    D = inst.matrix(idx)
    s, e = pos[start], pos[end]
    others = np.array([k for k in range(m) if k != e], dtype=np.int64)
    g = _kernels.held_karp_table(D, e, others)
    full = (1 << len(others)) - 1
    ks = int(np.nonzero(others == s)[0][0])
    opt = float(g[full, ks])
    local = [s] + _reconstruct(D, g, others, s, full & ~(1 << ks), opt) + [e]
    return _result(inst, idx[local], False)

"""Compiled inner loops.

Every kernel consumes pre-drawn randomness (uniform arrays or a raw 64-bit
word buffer) so results depend only on the caller's seed, never on numba's
internal RNG state or on which thread runs the kernel.
"""
from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf


# ------------------------------------------------------------------ Held-Karp

@njit(cache=True, nogil=True)
def held_karp_table(D, root, others):
    """g[mask, k]: cheapest path from ``root`` covering ``mask`` and ending at others[k]."""
    m = others.shape[0]
    size = 1 << m
    g = np.full((size, m), INF)
    for k in range(m):
        g[1 << k, k] = D[root, others[k]]
    for mask in range(1, size):
        for k in range(m):
            if not (mask >> k) & 1:
                continue
            base = g[mask, k]
            if base == INF:
                continue
            ok = others[k]
            for l in range(m):
                if (mask >> l) & 1:
                    continue
                nm = mask | (1 << l)
                v = base + D[ok, others[l]]
                if v < g[nm, l]:
                    g[nm, l] = v
    return g


# ----------------------------------------------------------------------- SWAI

@njit(cache=True, nogil=True)
def _proportional_pick(W, prev, used, dmax, u):
    m = W.shape[0]
    total = 0.0
    count = 0
    for j in range(m):
        if not used[j]:
            count += 1
            total += 1.0 - W[prev, j] / dmax if dmax > 0 else 1.0
    if total > 0.0:
        target = u * total
        acc = 0.0
        last = -1
        for j in range(m):
            if used[j]:
                continue
            w = 1.0 - W[prev, j] / dmax if dmax > 0 else 1.0
            acc += w
            if w > 0.0:
                last = j
            if acc > target:
                return j
        return last
    r = int(u * count)
    if r >= count:
        r = count - 1
    for j in range(m):
        if not used[j]:
            if r == 0:
                return j
            r -= 1
    return -1


@njit(cache=True, nogil=True)
def _greedy_pick(W, prev, used):
    best = -1
    bd = INF
    for j in range(W.shape[0]):
        if not used[j] and W[prev, j] < bd:
            bd = W[prev, j]
            best = j
    return best


@njit(cache=True, nogil=True)
def swai_run(W, C, start, end, open_mode, ps, U):
    """Run the annealed-insertion loop over the probabilities ``ps``.

    ``W`` drives construction (possibly quantized), ``C`` is the true cost
    matrix. ``U[t, k]`` holds the (Bernoulli, selection) uniforms for pass
    ``t`` and position ``k + 1``.
    """
    m = W.shape[0]
    dmax = 0.0
    for i in range(m):
        for j in range(m):
            if W[i, j] > dmax:
                dmax = W[i, j]
    npicks = m - 2 if open_mode else m - 1
    tour = np.empty(m, np.int64)
    best = np.empty(m, np.int64)
    best_cost = INF
    used = np.zeros(m, np.bool_)
    for t in range(ps.shape[0]):
        p = ps[t]
        used[:] = False
        used[start] = True
        if open_mode:
            used[end] = True
        tour[0] = start
        prev = start
        for k in range(1, npicks + 1):
            if U[t, k - 1, 0] < p:
                j = _proportional_pick(W, prev, used, dmax, U[t, k - 1, 1])
            else:
                j = _greedy_pick(W, prev, used)
            tour[k] = j
            used[j] = True
            prev = j
        if open_mode:
            tour[m - 1] = end
        cost = 0.0
        for k in range(m - 1):
            cost += C[tour[k], tour[k + 1]]
        if not open_mode:
            cost += C[tour[m - 1], tour[0]]
        if cost < best_cost:
            best_cost = cost
            best[:] = tour
    return best, best_cost


# ------------------------------------------------------------- Metropolis SA

@njit(cache=True, nogil=True)
def _swap_edges(tour, D, i, j):
    n = tour.shape[0]
    es = np.empty(4, np.int64)
    es[0] = (i - 1) % n
    es[1] = i
    es[2] = (j - 1) % n
    es[3] = j
    total = 0.0
    for a in range(4):
        dup = False
        for b in range(a):
            if es[b] == es[a]:
                dup = True
        if not dup:
            e = es[a]
            total += D[tour[e], tour[(e + 1) % n]]
    return total


@njit(cache=True, nogil=True)
def swap_delta(tour, D, i, j):
    before = _swap_edges(tour, D, i, j)
    tour[i], tour[j] = tour[j], tour[i]
    after = _swap_edges(tour, D, i, j)
    tour[i], tour[j] = tour[j], tour[i]
    return after - before


@njit(cache=True, nogil=True)
def sa_run(D, tour, temps, I, J, U):
    n = tour.shape[0]
    cost = 0.0
    for k in range(n):
        cost += D[tour[k], tour[(k + 1) % n]]
    best = tour.copy()
    best_cost = cost
    for t in range(temps.shape[0]):
        T = temps[t]
        for s in range(I.shape[1]):
            i = I[t, s]
            j = J[t, s]
            delta = swap_delta(tour, D, i, j)
            if delta < 0.0:
                accept = True
            else:
                x = delta / T
                accept = x <= 700.0 and U[t, s] < np.exp(-x)
            if accept:
                tour[i], tour[j] = tour[j], tour[i]
                cost += delta
                if cost < best_cost - 1e-12 * abs(best_cost):
                    best_cost = cost
                    best[:] = tour
    return best


# ----------------------------------------------------------------- 2-opt KNN

@njit(cache=True, nogil=True)
def _reverse(tour, pos, l, r, length):
    n = tour.shape[0]
    for _ in range(length // 2):
        a = tour[l]
        b = tour[r]
        tour[l] = b
        pos[b] = l
        tour[r] = a
        pos[a] = r
        l = (l + 1) % n
        r = (r - 1) % n


@njit(cache=True, nogil=True)
def two_opt_gain(D, a, b, c, d):
    return D[a, b] + D[c, d] - D[a, c] - D[b, d]


@njit(cache=True, nogil=True)
def improving(gain, D, a, b, c, d):
    return gain > 1e-12 * (D[a, b] + D[c, d])


@njit(cache=True, nogil=True)
def two_opt_knn(tour, D, nbrs):
    """First-improvement 2-opt over K-nearest candidate lists; returns move count."""
    n = tour.shape[0]
    pos = np.empty(n, np.int64)
    for i in range(n):
        pos[tour[i]] = i
    moves = 0
    improved = True
    while improved:
        improved = False
        for i in range(n):
            a = tour[i]
            b = tour[(i + 1) % n]
            for q in range(nbrs.shape[1]):
                c = nbrs[a, q]
                ic = pos[c]
                d = tour[(ic + 1) % n]
                if c == b or d == a or c == a:
                    continue
                g = two_opt_gain(D, a, b, c, d)
                if improving(g, D, a, b, c, d):
                    ia = pos[a]
                    inner = (ic - ia) % n
                    if inner <= n - inner:
                        _reverse(tour, pos, (ia + 1) % n, ic, inner)
                    else:
                        _reverse(tour, pos, (ic + 1) % n, ia, n - inner)
                    moves += 1
                    improved = True
                    break
    return moves


@njit(cache=True, nogil=True)
def count_improving_moves(tour, D, nbrs):
    n = tour.shape[0]
    pos = np.empty(n, np.int64)
    for i in range(n):
        pos[tour[i]] = i
    found = 0
    for i in range(n):
        a = tour[i]
        b = tour[(i + 1) % n]
        for q in range(nbrs.shape[1]):
            c = nbrs[a, q]
            d = tour[(pos[c] + 1) % n]
            if c == b or d == a or c == a:
                continue
            if improving(two_opt_gain(D, a, b, c, d), D, a, b, c, d):
                found += 1
    return found


# ---------------------------------------------------------------- macro twin

@njit(cache=True, nogil=True)
def take_bits(raw, pos, w):
    """Read ``w`` (<= 32) bits LSB-first starting at bit offset ``pos``."""
    word = pos >> 6
    off = pos & 63
    v = raw[word] >> np.uint64(off)
    if off + w > 64:
        v |= raw[word + 1] << np.uint64(64 - off)
    v &= (np.uint64(1) << np.uint64(w)) - np.uint64(1)
    return np.int64(v)


@njit(cache=True, nogil=True)
def slope_at(slopes, ends, pass_idx):
    for s in range(slopes.shape[0]):
        if pass_idx < ends[s]:
            return slopes[s]
    return slopes[slopes.shape[0] - 1]


@njit(cache=True, nogil=True)
def macro_run(Q, C, sizes, open_mode, starts, ends, slopes, seg_ends, r_ref0,
              fixed_word, fixed_passes, raw, bitpos, max_cities, global_bits,
              local_bits, literal_polarity):
    """Batched annealing over up to ``Q.shape[0]`` problems with shared randomness.

    Returns (best tours, best costs, passes run, final bit position).
    """
    P = Q.shape[0]
    full = 1 << local_bits
    spin = np.zeros((P, max_cities), np.int64)
    best = np.zeros((P, max_cities), np.int64)
    best_cost = np.full(P, INF)
    cand = np.zeros(P, np.int64)
    index_max = np.empty(P, np.int64)
    top = 1
    for p in range(P):
        index_max[p] = sizes[p] - 1 if open_mode[p] else sizes[p]
        if index_max[p] > top:
            top = index_max[p]
    locals_ = np.zeros(max_cities, np.int64)
    r_ref = r_ref0
    pass_idx = 0
    while True:
        if fixed_word >= 0:
            if pass_idx >= fixed_passes:
                break
            r_ref = fixed_word
        else:
            slope = slope_at(slopes, seg_ends, pass_idx)
            if r_ref < slope:
                break
            r_ref -= slope
        for p in range(P):
            n = sizes[p]
            cand[p] = ((1 << n) - 1) & ~(1 << starts[p])
            if open_mode[p]:
                cand[p] &= ~(1 << ends[p])
            spin[p, 0] = starts[p]
        for index in range(2, top + 1):
            g = take_bits(raw, bitpos, global_bits) < r_ref
            bitpos += global_bits
            if g:
                for i in range(max_cities):
                    locals_[i] = take_bits(raw, bitpos, local_bits)
                    bitpos += local_bits
            for p in range(P):
                if index > index_max[p]:
                    continue
                n = sizes[p]
                prev = spin[p, index - 2]
                pick = -1
                if g:
                    bq = 1 << 30
                    for i in range(n):
                        if not (cand[p] >> i) & 1:
                            continue
                        q = Q[p, prev, i]
                        thr = q if literal_polarity else full - q
                        if locals_[i] < thr and q < bq:
                            bq = q
                            pick = i
                if pick < 0:
                    bq = 1 << 30
                    for i in range(n):
                        if (cand[p] >> i) & 1 and Q[p, prev, i] < bq:
                            bq = Q[p, prev, i]
                            pick = i
                spin[p, index - 1] = pick
                cand[p] &= ~(1 << pick)
        for p in range(P):
            n = sizes[p]
            if open_mode[p]:
                spin[p, n - 1] = ends[p]
            cost = 0.0
            for k in range(n - 1):
                cost += C[p, spin[p, k], spin[p, k + 1]]
            if not open_mode[p]:
                cost += C[p, spin[p, n - 1], spin[p, 0]]
            if cost < best_cost[p]:
                best_cost[p] = cost
                best[p, :] = spin[p, :]
        pass_idx += 1
    return best, best_cost, pass_idx, bitpos

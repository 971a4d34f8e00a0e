"""Hierarchical divide-and-conquer solver.

Pipeline:

1. Repeatedly cluster the current level's entities (cities, then cluster
   centroids) into groups of at most ``M`` until at most 16 groups remain.
2. Solve a closed tour over the top-level centroids and refine it.
3. Walk down the levels: pick entry/exit members for every cluster from the
   closest pair across each tour link, order each cluster's members as an
   open path between its pins, concatenate the paths into a tour over the
   level below, then improve it with segment refinement and K-nearest 2-opt.

Every independent unit of work (cluster solve, refinement chunk) gets its own
seed derived from the master seed and the unit's position in the pipeline,
so results do not depend on how many worker threads execute the units.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .clustering import Cluster, build_clusters
from .errors import ConfigError, InvalidTourError, StitchError
from .instances import Instance, Tour
from .macro import MacroConfig, MacroProblem, macro_anneal, pack_distinct
from .swai import TSPLIB_PARAMS, SwaiParams, swai_solve

TOP_LIMIT = 16
DENSE_LIMIT = 20000

# seed-path tags for the pipeline stages
_TOP, _LEVEL, _REFINE = 0, 1, 2

ENGINES = {"ideal": "ideal", "ideal_swai": "ideal", "swai": "ideal",
           "macro": "macro", "macro_twin": "macro"}


@dataclass(frozen=True)
class SolveOptions:
    engine: str = "ideal"
    params: SwaiParams = TSPLIB_PARAMS
    macro: MacroConfig = field(default_factory=MacroConfig)
    n_refine: int = 10
    k_neighbors: int = 20
    seed: int = 0
    workers: int = 1
    use_two_opt: bool = True
    use_refine: bool = True
    segment_len: int = 16
    max_cluster: int = 16

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}; choose from {sorted(ENGINES)}")
        object.__setattr__(self, "engine", ENGINES[self.engine])
        if not 1 <= self.k_neighbors <= 20:
            raise ConfigError("k_neighbors must lie in [1, 20]")
        if self.n_refine < 0:
            raise ConfigError("n_refine must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 4 <= self.segment_len <= 16 or not 1 <= self.max_cluster <= 16:
            raise ConfigError("segment_len must lie in [4, 16] and max_cluster in [1, 16]")
        if self.engine == "macro" and max(self.segment_len, self.max_cluster) > self.macro.max_cities:
            raise ConfigError("segments and clusters must fit the macro")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass
class Level:
    """Entities of one hierarchy level.

    ``inst`` measures distances between the entities (the input instance at
    level 0, unrounded Euclidean distances between centroids above).
    ``clusters[k].members`` are entity ids of the level below (empty at 0).
    """

    inst: Instance
    coords: np.ndarray
    clusters: list[Cluster]


@dataclass
class Hierarchy:
    levels: list[Level]

    @property
    def top(self) -> int:
        return len(self.levels) - 1


@dataclass(frozen=True)
class LinkAssignment:
    entry: tuple[int, ...]
    exit: tuple[int, ...]


def unit_seed(master: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), *[int(p) for p in path]])


def _coords_of(inst: Instance) -> np.ndarray:
    if inst.coords is None:
        raise ConfigError(f"{inst.name}: hierarchical decomposition needs city coordinates")
    return np.asarray(inst.coords, dtype=np.float64)


def build_hierarchy(inst: Instance, M: int = 16) -> Hierarchy:
    coords = _coords_of(inst)
    levels = [Level(inst, coords, [Cluster((i,), (float(x), float(y))) for i, (x, y) in enumerate(coords)])]
    while True:
        clusters = build_clusters(coords, M)
        centroids = np.array([c.centroid for c in clusters], dtype=np.float64)
        if len(clusters) >= 2:
            level_inst = Instance(f"{inst.name}/L{len(levels)}", len(clusters), "REAL_EUC", coords=centroids)
        else:  # a single cluster has no distances
            level_inst = None
        levels.append(Level(level_inst, centroids, clusters))
        if len(clusters) <= TOP_LIMIT:
            return Hierarchy(levels)
        coords = centroids


# ------------------------------------------------------------------ links

def _closest_pair(inst: Instance, A: np.ndarray, B: np.ndarray) -> tuple[int, int]:
    d = inst.pair_distances(A[:, None], B[None, :])
    k = int(np.argmin(d))
    return int(A[k // len(B)]), int(B[k % len(B)])


def fix_links(order: Sequence[int], members: Sequence[Sequence[int]], inst: Instance) -> LinkAssignment:
    """Entry/exit pins along the cyclic cluster ``order``.

    ``members[c]`` are the ids (in ``inst``) of cluster ``c``. Each link
    (A, B) pins exit(A), entry(B) at the closest member pair. A cluster with
    two or more members whose entry equals its exit is repaired by choosing
    the next best pair for its outgoing link with the exit restricted to the
    other members and the successor's entry kept distinct from its exit.
    """
    k = len(order)
    if k < 2:
        raise ValueError("fix_links needs a tour over at least 2 clusters")
    mem = [np.array(sorted(members[c]), dtype=np.int64) for c in range(len(members))]
    entry = [-1] * len(members)
    exit_ = [-1] * len(members)
    for i in range(k):
        A, B = order[i], order[(i + 1) % k]
        exit_[A], entry[B] = _closest_pair(inst, mem[A], mem[B])
    for i in range(k):
        A, B = order[i], order[(i + 1) % k]
        if len(mem[A]) >= 2 and entry[A] == exit_[A]:
            cand_a = mem[A][mem[A] != entry[A]]
            cand_b = mem[B][mem[B] != exit_[B]] if len(mem[B]) >= 2 else mem[B]
            exit_[A], entry[B] = _closest_pair(inst, cand_a, cand_b)
    return LinkAssignment(tuple(entry), tuple(exit_))


# ------------------------------------------------------------------ engines

def _swai_open(inst, cities, start, end, params, seed) -> list[int]:
    t = swai_solve(inst, cities, params.pinned(start, end), seed=np.random.default_rng(seed))
    return list(t.order)


def _solve_open_paths(inst: Instance, jobs: list[tuple], opts: SolveOptions, path: tuple) -> list[list[int]]:
    """Open paths for ``jobs`` = [(cities, start, end)], each from start to end.

    Jobs with at most two cities are forced. The ideal engine gives every job
    its own seed; the macro engine packs jobs five to a batch, one seed per
    batch.
    """
    out: list[list[int] | None] = [None] * len(jobs)
    hard = []
    for j, (cities, s, e) in enumerate(jobs):
        if len(cities) == 1:
            out[j] = [s]
        elif len(cities) == 2:
            out[j] = [s, e]
        else:
            hard.append(j)
    if opts.engine == "ideal":
        def run(j):
            cities, s, e = jobs[j]
            return _swai_open(inst, cities, s, e, opts.params, unit_seed(opts.seed, *path, j))
        results = _map(run, hard, opts.workers)
        for j, r in zip(hard, results):
            out[j] = r
    else:
        cfg = opts.macro
        batches = pack_distinct(hard, cfg.problems_per_macro)

        def run_batch(b):
            probs = [MacroProblem.from_instance(inst, jobs[j][0], cfg.local_bits, jobs[j][1], jobs[j][2],
                                                cfg.max_cities) for j in batches[b]]
            macro_anneal(probs, cfg, unit_seed(opts.seed, *path, b))
            return [[int(p.labels[i]) for i in p.best_order] for p in probs]
        for b, res in enumerate(_map(run_batch, range(len(batches)), opts.workers)):
            for j, r in zip(batches[b], res):
                out[j] = r
    return out


def _map(fn, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _solve_closed(inst: Instance, opts: SolveOptions, path: tuple) -> list[int]:
    n = inst.n
    if n <= 3:
        return list(range(n))
    if opts.engine == "ideal":
        t = swai_solve(inst, None, opts.params, seed=np.random.default_rng(unit_seed(opts.seed, *path)))
        return list(t.order)
    cfg = opts.macro
    if n > cfg.max_cities:
        raise ConfigError(f"closed macro solve limited to {cfg.max_cities} cities")
    prob = MacroProblem.from_instance(inst, range(n), cfg.local_bits, max_cities=cfg.max_cities)
    macro_anneal([prob], cfg, unit_seed(opts.seed, *path))
    return [int(prob.labels[i]) for i in prob.best_order]


# ------------------------------------------------------------------ level ops

def solve_level(inst: Instance, clusters: Sequence[Cluster], links: LinkAssignment,
                opts: SolveOptions, level: int = 1) -> list[list[int]]:
    """Order each cluster's members (ids in ``inst``) as an open entry->exit path."""
    limit = opts.macro.max_cities if opts.engine == "macro" else TOP_LIMIT
    jobs = []
    for c, cl in enumerate(clusters):
        if len(cl) > limit:
            raise StitchError(c, f"cluster has {len(cl)} members, above the solver limit")
        s, e = links.entry[c], links.exit[c]
        if s not in cl.members or e not in cl.members:
            raise StitchError(c, "pins are not members of the cluster")
        if len(cl) >= 2 and s == e:
            raise StitchError(c, "entry equals exit")
        jobs.append((list(cl.members), s, e))
    return _solve_open_paths(inst, jobs, opts, (_LEVEL, level))


def stitch(order: Sequence[int], paths: Sequence[Sequence[int]], links: LinkAssignment | None = None,
           n: int | None = None) -> list[int]:
    """Concatenate per-cluster paths in cluster-tour order into one closed tour."""
    tour: list[int] = []
    for c in order:
        p = list(paths[c])
        if not p:
            raise StitchError(c, "empty path")
        if links is not None and (p[0] != links.entry[c] or p[-1] != links.exit[c]):
            raise StitchError(c, f"path runs {p[0]}->{p[-1]}, pins are {links.entry[c]}->{links.exit[c]}")
        tour.extend(p)
    n = len(tour) if n is None else n
    if len(tour) != n or sorted(tour) != list(range(n)):
        raise InvalidTourError("stitched sequence is not a permutation of the level's entities")
    return tour


def _path_cost(inst: Instance, p: Sequence[int]) -> float:
    p = np.asarray(p, dtype=np.int64)
    return float(inst.pair_distances(p[:-1], p[1:]).sum())


def refine_segments(inst: Instance, tour: Sequence[int], opts: SolveOptions,
                    passes: int | None = None, level: int = 0) -> list[int]:
    """Re-solve fixed-length chunks of the tour as pinned open paths.

    Each pass cuts the cycle into consecutive chunks of ``segment_len`` from a
    random offset; chunks of four or more cities are re-solved between their
    end cities and replaced only when strictly shorter.
    """
    passes = opts.n_refine if passes is None else passes
    tour = np.asarray(tour, dtype=np.int64)
    n, L = len(tour), opts.segment_len
    if passes <= 0 or n < 4:
        return tour.tolist()
    offsets = np.random.default_rng(unit_seed(opts.seed, _REFINE, level)).integers(0, L, size=passes)
    for t in range(passes):
        rolled = np.roll(tour, -int(offsets[t]))
        chunks = [rolled[i:i + L] for i in range(0, n, L)]
        idx = [k for k, ch in enumerate(chunks) if len(ch) >= 4]
        jobs = [(ch.tolist(), int(ch[0]), int(ch[-1])) for ch in (chunks[k] for k in idx)]
        paths = _solve_open_paths(inst, jobs, opts, (_REFINE, level, t))
        for k, p in zip(idx, paths):
            if _path_cost(inst, p) < _path_cost(inst, chunks[k]):
                chunks[k] = np.asarray(p, dtype=np.int64)
        tour = np.concatenate(chunks)
    return tour.tolist()


def neighbor_lists(inst: Instance, K: int, block: int = 512) -> np.ndarray:
    """``K`` nearest other cities per city, ties broken by id."""
    n = inst.n
    K = min(K, n - 1)
    out = np.empty((n, K), np.int64)
    ids = np.arange(n)
    for lo in range(0, n, block):
        rows = ids[lo:lo + block]
        d = inst.pair_distances(rows[:, None], ids[None, :])
        d[np.arange(len(rows)), rows] = np.inf
        out[lo:lo + block] = np.argsort(d, axis=1, kind="stable")[:, :K]
    return out


def _dense(inst: Instance) -> np.ndarray:
    if inst.n > DENSE_LIMIT:
        raise ConfigError(f"2-opt uses a dense matrix; n={inst.n} exceeds {DENSE_LIMIT}")
    return np.ascontiguousarray(inst.matrix())


def two_opt_knn(inst: Instance, tour: Sequence[int], K: int = 20, D: np.ndarray | None = None,
                nbrs: np.ndarray | None = None) -> list[int]:
    """First-improvement 2-opt restricted to each city's ``K`` nearest neighbours."""
    t = np.array(tour, dtype=np.int64)
    if len(t) < 4:
        return t.tolist()
    D = _dense(inst) if D is None else D
    nbrs = neighbor_lists(inst, K) if nbrs is None else nbrs
    _kernels.two_opt_knn(t, D, nbrs)
    return t.tolist()


def count_improving_moves(inst: Instance, tour: Sequence[int], K: int = 20) -> int:
    t = np.array(tour, dtype=np.int64)
    return int(_kernels.count_improving_moves(t, _dense(inst), neighbor_lists(inst, K)))


def _improve(inst: Instance, tour: list[int], opts: SolveOptions, level: int) -> list[int]:
    if opts.use_refine:
        tour = refine_segments(inst, tour, opts, level=level)
    if opts.use_two_opt:
        tour = two_opt_knn(inst, tour, opts.k_neighbors)
    return tour


def hierarchical_solve(inst: Instance, opts: SolveOptions = SolveOptions()) -> Tour:
    n = inst.n
    if n <= TOP_LIMIT:
        order = _solve_closed(inst, opts, (_TOP,))
        if opts.use_two_opt:
            order = two_opt_knn(inst, order, opts.k_neighbors)
        return Tour.build(inst, order, True)
    hier = build_hierarchy(inst, opts.max_cluster)
    top = hier.levels[hier.top]
    tour = _solve_closed(top.inst, opts, (_TOP,))
    if opts.use_refine:
        tour = refine_segments(top.inst, tour, opts, level=hier.top)
    for lv in range(hier.top, 0, -1):
        upper, lower = hier.levels[lv], hier.levels[lv - 1]
        members = [c.members for c in upper.clusters]
        links = fix_links(tour, members, lower.inst)
        paths = solve_level(lower.inst, upper.clusters, links, opts, lv)
        tour = stitch(tour, paths, links, lower.inst.n)
        tour = _improve(lower.inst, tour, opts, lv - 1)
    result = Tour.build(inst, tour, True)
    if len(result.order) != n:
        raise InvalidTourError("final tour does not cover every city")
    return result

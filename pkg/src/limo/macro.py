"""Functional digital twin of the annealing macro's datapath.

Model summary
-------------
* Couplings are quantized to ``local_bits`` (default 4) unsigned codes.
* Every tour position draws one ``global_bits``-wide random word ``r_g``;
  the stochastic branch fires iff ``r_g < r_ref``.
* When it fires, one bank of ``max_cities`` local words ``r_i`` is drawn and
  city ``i`` survives iff ``r_i < 2**b - q_i`` (closeness threshold). The
  comparator tree then picks the surviving candidate with the smallest code;
  with no survivors it falls back to the greedy choice.
* Up to ``problems_per_macro`` problems share all random words.
* ``r_ref`` starts at the schedule's initial word and is decremented by the
  current slope at the start of each pass; annealing stops when the word is
  smaller than the slope.

All randomness is a single bit stream cut LSB-first from PCG64 64-bit
outputs, so bit consumption is exact and auditable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, EmptyCandidateError, InvalidTourError
from .instances import Instance, Tour, tour_length

# Piecewise-constant decrement tables: (slope, pass_interval_end).
BUILTIN_SCHEDULES: dict[str, tuple[tuple[int, int], ...]] = {
    "decay_0.9995": ((10, 267), (8, 575), (7, 940), (5, 1386), (4, 1961),
                     (3, 2772), (2, 4158), (1, 5990)),
    "decay_0.995": ((10, 27), (8, 57), (7, 94), (5, 138), (4, 196),
                    (3, 277), (2, 358)),
}


@dataclass(frozen=True)
class ScheduleTable:
    segments: tuple[tuple[int, int], ...]
    initial_word: int | None = None  # None -> cumulative decrement of the table
    name: str = "custom"

    def __post_init__(self):
        segs = tuple((int(s), int(e)) for s, e in self.segments)
        if not segs:
            raise ConfigError("schedule table is empty")
        prev = 0
        for slope, end in segs:
            if slope <= 0:
                raise ConfigError(f"slopes must be positive, got {slope}")
            if end <= prev:
                raise ConfigError("pass_interval_end must be strictly increasing")
            prev = end
        object.__setattr__(self, "segments", segs)
        if self.initial_word is None:
            object.__setattr__(self, "initial_word", self.total())
        if not 0 <= self.initial_word:
            raise ConfigError("initial_word must be non-negative")

    @classmethod
    def builtin(cls, name: str) -> "ScheduleTable":
        try:
            return cls(BUILTIN_SCHEDULES[name], name=name)
        except KeyError:
            raise ConfigError(f"unknown schedule {name!r}; built-ins: {sorted(BUILTIN_SCHEDULES)}") from None

    @classmethod
    def from_file(cls, path, initial_word: int | None = None) -> "ScheduleTable":
        """Read lines of ``slope, pass_end``; blank lines and ``#`` comments are skipped."""
        segs = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'slope, pass_end'")
            try:
                segs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer entry") from None
        return cls(tuple(segs), initial_word, name=Path(path).stem)

    @classmethod
    def resolve(cls, source: "str | ScheduleTable") -> "ScheduleTable":
        if isinstance(source, ScheduleTable):
            return source
        if source in BUILTIN_SCHEDULES:
            return cls.builtin(source)
        return cls.from_file(spec)

    def total(self) -> int:
        """Cumulative decrement over all table rows."""
        total, start = 0, 0
        for slope, end in self.segments:
            total += slope * (end - start)
            start = end
        return total

    def slope_at(self, pass_idx: int) -> int:
        for slope, end in self.segments:
            if pass_idx < end:
                return slope
        return self.segments[-1][0]

    def words(self) -> np.ndarray:
        """The ``r_ref`` value in force during each pass that actually runs."""
        out = []
        r, t = self.initial_word, 0
        while True:
            r, done = schedule_step(self, t, r)
            if done:
                return np.array(out, dtype=np.int64)
            out.append(r)
            t += 1

    def arrays(self):
        return (np.array([s for s, _ in self.segments], np.int64),
                np.array([e for _, e in self.segments], np.int64))


def schedule_step(table: ScheduleTable, pass_idx: int, r_ref: int) -> tuple[int, bool]:
    if pass_idx < 0:
        raise ValueError("pass index must be >= 0")
    if not table.segments:
        raise ConfigError("schedule table is empty")
    slope = table.slope_at(pass_idx)
    if r_ref < slope:
        return r_ref, True
    return r_ref - slope, False


@dataclass(frozen=True)
class MacroConfig:
    global_bits: int = 16
    local_bits: int = 4
    max_cities: int = 16
    problems_per_macro: int = 5
    schedule: ScheduleTable = field(default_factory=lambda: ScheduleTable.builtin("decay_0.9995"))
    literal_polarity: bool = False
    fixed_word: int | None = None  # constant r_ref instead of the schedule
    fixed_passes: int = 1

    def __post_init__(self):
        if not 1 <= self.global_bits <= 32:
            raise ConfigError("global_bits must lie in [1, 32]")
        if not 1 <= self.local_bits <= 8:
            raise ConfigError("local_bits must lie in [1, 8]")
        if not 2 <= self.max_cities <= 62:
            raise ConfigError("max_cities must lie in [2, 62]")
        if self.problems_per_macro < 1:
            raise ConfigError("problems_per_macro must be >= 1")
        if isinstance(self.schedule, str):
            object.__setattr__(self, "schedule", ScheduleTable.resolve(self.schedule))
        if self.schedule.initial_word > (1 << self.global_bits) - 1:
            raise ConfigError("schedule initial word does not fit the global word width")
        if self.fixed_word is not None and not 0 <= self.fixed_word < (1 << self.global_bits):
            raise ConfigError("fixed_word out of range")
        if self.fixed_passes < 1:
            raise ConfigError("fixed_passes must be >= 1")

    def stochasticity(self) -> np.ndarray:
        """Per-pass probability of the stochastic branch, ``r_ref / 2**global_bits``."""
        if self.fixed_word is not None:
            return np.full(self.fixed_passes, self.fixed_word / 2.0 ** self.global_bits)
        return self.schedule.words() / 2.0 ** self.global_bits


# ------------------------------------------------------------- primitives

def quantize_weights(inst: Instance, cities: Sequence[int] | None = None, bits: int = 4,
                     matrix: np.ndarray | None = None):
    """Return ``(codes, d_max, degenerate)`` for the subset's distance matrix."""
    if not 1 <= bits <= 8:
        raise ValueError(f"bits must lie in [1, 8], got {bits}")
    D = inst.matrix(cities) if matrix is None else np.asarray(matrix, dtype=np.float64)
    if D.shape[0] < 2:
        raise ValueError("need at least 2 cities to quantize")
    return quantize_matrix(D, bits)


def quantize_matrix(D: np.ndarray, bits: int = 4):
    top = (1 << bits) - 1
    d_max = float(D.max())
    if d_max <= 0.0:
        return np.zeros(D.shape, np.int64), 0.0, True
    q = np.minimum(top, np.floor(D / d_max * top + 0.5)).astype(np.int64)
    np.fill_diagonal(q, 0)
    return q, d_max, False


def threshold_bit(r: int, d: int) -> bool:
    return r < d


class BitStream:
    """LSB-first bit reader over PCG64 64-bit outputs."""

    def __init__(self, seed=0):
        self._bg = np.random.PCG64(seed)
        self._buf = np.zeros(0, np.uint64)
        self.pos = 0

    @property
    def bits_used(self) -> int:
        return self.pos

    def ensure(self, nbits: int) -> np.ndarray:
        """Make at least ``nbits`` unread bits available; return the buffer."""
        need_words = (self.pos + nbits + 63) // 64 + 1
        if need_words > len(self._buf):
            extra = self._bg.random_raw(need_words - len(self._buf)).astype(np.uint64)
            self._buf = np.concatenate([self._buf, extra])
        return self._buf

    def take(self, w: int) -> int:
        if not 1 <= w <= 32:
            raise ValueError("can take 1..32 bits at a time")
        buf = self.ensure(w)
        v = int(_kernels.take_bits(buf, self.pos, w))
        self.pos += w
        return v


def global_bit(stream: BitStream, r_ref: int, bits: int = 16) -> bool:
    r_ref = min(int(r_ref), (1 << bits) - 1)
    return threshold_bit(stream.take(bits), r_ref)


def gate_from_words(qrow: Sequence[int], words: Sequence[int], bits: int = 4,
                    literal_polarity: bool = False) -> int:
    mask = 0
    full = 1 << bits
    for i, (q, r) in enumerate(zip(qrow, words)):
        t = int(q) if literal_polarity else full - int(q)
        if r < t:
            mask |= 1 << i
    return mask


def local_gate_mask(qrow: Sequence[int], stream: BitStream, bits: int = 4,
                    literal_polarity: bool = False) -> int:
    """Draw one ``bits``-wide word per city; bit ``i`` set iff city ``i`` survives."""
    words = [stream.take(bits) for _ in range(len(qrow))]
    return gate_from_words(qrow, words, bits, literal_polarity)


def comparator_select(survivors: int, candidates: int, qrow: Sequence[int]) -> int:
    if candidates == 0:
        raise EmptyCandidateError("candidate mask is empty")
    active = survivors & candidates
    pool = active if active else candidates
    best, bq = -1, None
    for i in range(len(qrow)):
        if (pool >> i) & 1 and (bq is None or qrow[i] < bq):
            best, bq = i, qrow[i]
    if best < 0:
        raise EmptyCandidateError("candidate mask has no bits inside the row")
    return best


def vmm_sign(inputs: Sequence[int], weights) -> np.ndarray:
    """Column-wise sign of ``inputs @ weights``; a zero accumulation maps to +1."""
    x = np.asarray(inputs, dtype=np.int64)
    w = np.asarray(weights, dtype=np.int64)
    if w.ndim != 2 or x.ndim != 1 or x.shape[0] != w.shape[0]:
        raise ValueError(f"shape mismatch: inputs {x.shape} vs weights {w.shape}")
    if np.any((x != 0) & (x != 1)):
        raise ValueError("inputs must be bits")
    if np.any(np.abs(w) > 1):
        raise ValueError("weights must be ternary")
    return np.where(x @ w < 0, -1, 1)


# ------------------------------------------------------------- problems

@dataclass
class MacroProblem:
    """One sub-problem resident in the macro.

    Local indices ``0..n-1`` address the coupling rows; ``labels`` maps them
    back to instance city ids.
    """

    qweights: np.ndarray
    costs: np.ndarray
    labels: np.ndarray
    mode: str = "closed"
    start: int = 0
    end: int = 0
    candidate_mask: int = 0
    spin_storage: list = field(default_factory=list)
    best_order: list | None = None
    best_cost: float = np.inf
    degenerate: bool = False

    @property
    def n(self) -> int:
        return self.qweights.shape[0]

    @property
    def index_max(self) -> int:
        return self.n - 1 if self.mode == "open" else self.n

    @classmethod
    def from_instance(cls, inst: Instance, cities: Sequence[int], bits: int = 4,
                      start: int | None = None, end: int | None = None,
                      max_cities: int = 16) -> "MacroProblem":
        """Load ``cities`` (closed, or open when ``end`` is given) with global-id pins."""
        labels = np.asarray(cities, dtype=np.int64)
        if len(labels) < 1 or len(labels) > max_cities:
            raise ValueError(f"macro problems hold 1..{max_cities} cities, got {len(labels)}")
        if len(set(labels.tolist())) != len(labels):
            raise InvalidTourError("duplicate cities in macro problem")
        pos = {c: k for k, c in enumerate(labels.tolist())}
        s_city = int(labels[0]) if start is None else int(start)
        if s_city not in pos:
            raise InvalidTourError(f"start city {start} not in problem")
        s = pos[s_city]
        mode = "closed"
        e = 0
        if end is not None:
            if end not in pos:
                raise InvalidTourError(f"end city {end} not in problem")
            e = pos[end]
            mode = "open"
            if e == s and len(labels) > 1:
                raise InvalidTourError("open problem needs start != end")
        C = inst.matrix(labels)
        if len(labels) >= 2:
            q, _, deg = quantize_matrix(C, bits)
        else:
            q, deg = np.zeros((1, 1), np.int64), True
        return cls(q, C, labels, mode, s, e, degenerate=deg)

    def reset(self) -> None:
        mask = (1 << self.n) - 1
        mask &= ~(1 << self.start)
        if self.mode == "open":
            mask &= ~(1 << self.end)
        self.candidate_mask = mask
        self.spin_storage = [self.start]

    def finish_pass(self) -> None:
        if self.mode == "open" and self.n > 1:
            self.spin_storage.append(self.end)
        order = self.spin_storage
        cost = float(sum(self.costs[order[k], order[k + 1]] for k in range(len(order) - 1)))
        if self.mode == "closed" and len(order) > 1:
            cost += float(self.costs[order[-1], order[0]])
        if cost < self.best_cost:
            self.best_cost = cost
            self.best_order = list(order)

    def best_tour(self, inst: Instance) -> Tour:
        if self.best_order is None:
            raise RuntimeError("problem has not been annealed")
        order = self.labels[self.best_order]
        closed = self.mode == "closed"
        return Tour(tuple(int(c) for c in order), closed, tour_length(inst, order, closed))

    def relabeled(self, perm: np.ndarray) -> "MacroProblem":
        """Copy with local index ``k`` moved to ``perm[k]`` (same problem, new wiring)."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.argsort(perm)
        return MacroProblem(self.qweights[np.ix_(inv, inv)].copy(), self.costs[np.ix_(inv, inv)].copy(),
                            self.labels[inv].copy(), self.mode, int(perm[self.start]),
                            int(perm[self.end]), degenerate=self.degenerate)


@dataclass
class StepRecord:
    position: int
    global_bit: bool
    survivor_masks: list
    selections: list


def macro_insertion_step(problems: Sequence[MacroProblem], position: int, r_ref: int,
                         stream: BitStream, config: MacroConfig = MacroConfig()) -> StepRecord:
    """Fill tour index ``position`` (1-based, >= 2) of every active problem."""
    if position < 2:
        raise ValueError("position must be >= 2 (index 1 holds the start city)")
    g = global_bit(stream, r_ref, config.global_bits)
    words = [stream.take(config.local_bits) for _ in range(config.max_cities)] if g else None
    masks, picks = [], []
    for prob in problems:
        if position > prob.index_max:
            masks.append(None)
            picks.append(None)
            continue
        if prob.candidate_mask == 0:
            raise EmptyCandidateError("problem ran out of candidates mid-pass")
        qrow = prob.qweights[prob.spin_storage[position - 2]]
        surv = gate_from_words(qrow, words[:prob.n], config.local_bits, config.literal_polarity) if g else 0
        pick = comparator_select(surv, prob.candidate_mask, qrow)
        prob.spin_storage.append(pick)
        prob.candidate_mask &= ~(1 << pick)
        masks.append(surv if g else None)
        picks.append(pick)
    return StepRecord(position, g, masks, picks)


def _check_batch(problems: Sequence[MacroProblem], config: MacroConfig) -> None:
    if not problems:
        raise ValueError("empty batch")
    if len(problems) > config.problems_per_macro:
        raise ValueError(f"at most {config.problems_per_macro} problems per macro")
    for p in problems:
        if p.n > config.max_cities:
            raise ValueError(f"problem with {p.n} cities exceeds macro capacity {config.max_cities}")
        if p.qweights.max(initial=0) >= 1 << config.local_bits:
            raise ValueError("coupling codes exceed local word width")


def _anneal_reference(problems, config: MacroConfig, stream: BitStream, trace: Callable) -> int:
    table = config.schedule
    r_ref = table.initial_word
    t = 0
    while True:
        if config.fixed_word is not None:
            if t >= config.fixed_passes:
                break
            r_ref = config.fixed_word
        else:
            r_ref, done = schedule_step(table, t, r_ref)
            if done:
                break
        for p in problems:
            p.reset()
        top = max(p.index_max for p in problems)
        for position in range(2, top + 1):
            rec = macro_insertion_step(problems, position, r_ref, stream, config)
            for k, sel in enumerate(rec.selections):
                if sel is None:
                    continue
                trace({"pass": t, "position": position, "problem": k,
                       "global_bit": bool(rec.global_bit), "survivor_mask": rec.survivor_masks[k],
                       "selection": int(sel)})
        for p in problems:
            p.finish_pass()
        t += 1
    return t


def _anneal_kernel(problems, config: MacroConfig, stream: BitStream) -> int:
    P, mc = len(problems), config.max_cities
    Q = np.zeros((P, mc, mc), np.int64)
    C = np.zeros((P, mc, mc))
    sizes = np.zeros(P, np.int64)
    open_mode = np.zeros(P, np.bool_)
    starts = np.zeros(P, np.int64)
    ends = np.zeros(P, np.int64)
    for k, p in enumerate(problems):
        n = p.n
        Q[k, :n, :n] = p.qweights
        C[k, :n, :n] = p.costs
        sizes[k], open_mode[k], starts[k], ends[k] = n, p.mode == "open", p.start, p.end
    slopes, seg_ends = config.schedule.arrays()
    if config.fixed_word is not None:
        passes = config.fixed_passes
    else:
        passes = len(config.schedule.words())
    top = max(p.index_max for p in problems)
    per_pass = max(top - 1, 0) * (config.global_bits + mc * config.local_bits)
    raw = stream.ensure(passes * per_pass + 64)
    fixed = -1 if config.fixed_word is None else config.fixed_word
    best, best_cost, ran, bitpos = _kernels.macro_run(
        Q, C, sizes, open_mode, starts, ends, slopes, seg_ends, config.schedule.initial_word,
        fixed, config.fixed_passes, raw, stream.pos, mc, config.global_bits,
        config.local_bits, config.literal_polarity)
    stream.pos = int(bitpos)
    for k, p in enumerate(problems):
        if best_cost[k] < p.best_cost:
            p.best_cost = float(best_cost[k])
            p.best_order = [int(c) for c in best[k, :p.n]]
    return int(ran)


def macro_anneal(problems: Sequence[MacroProblem], config: MacroConfig = MacroConfig(),
                 seed=0, trace: Callable | None = None) -> list[list[int]]:
    """Anneal a batch with shared randomness; returns best local orders.

    ``seed`` may be an existing :class:`BitStream` to continue a stream.
    With ``trace`` set the step-by-step reference datapath runs and emits one
    record per (pass, position, problem); otherwise the compiled loop runs.
    Both consume the stream identically and give identical results.
    """
    _check_batch(problems, config)
    stream = seed if isinstance(seed, BitStream) else BitStream(seed)
    for p in problems:
        if p.n == 1:
            p.best_order, p.best_cost = [0], 0.0
    active = [p for p in problems if p.n > 1]
    if active:
        if trace is None:
            _anneal_kernel(active, config, stream)
        else:
            _anneal_reference(active, config, stream, trace)
    return [list(p.best_order) for p in problems]


def jsonl_writer(fh) -> Callable:
    def write(rec):
        fh.write(json.dumps(rec) + "\n")
    return write


# ------------------------------------------------------------- packing

def pack_distinct(jobs: Sequence, per_macro: int = 5) -> list[list]:
    """Group consecutive jobs into batches of at most ``per_macro``."""
    return [list(jobs[i:i + per_macro]) for i in range(0, len(jobs), per_macro)]


def pack_restarts(problem: MacroProblem, copies: int, rng: np.random.Generator) -> list[MacroProblem]:
    """``copies`` versions of one problem; copy 0 as-is, others randomly relabeled.

    Identical copies would receive identical random words and produce identical
    tours, so restarts inside one batch only diversify through relabeling.
    """
    out = [problem]
    for _ in range(copies - 1):
        out.append(problem.relabeled(rng.permutation(problem.n)))
    return out


def macro_solve(inst: Instance, cities: Sequence[int], config: MacroConfig = MacroConfig(),
                seed=0, start: int | None = None, end: int | None = None,
                restarts: int = 1) -> Tour:
    """Solve one sub-problem on the twin; ``restarts`` > 1 fills the batch with relabeled copies."""
    base = MacroProblem.from_instance(inst, cities, config.local_bits, start, end, config.max_cities)
    if restarts < 1 or restarts > config.problems_per_macro:
        raise ValueError(f"restarts must lie in [1, {config.problems_per_macro}]")
    probs = pack_restarts(base, restarts, np.random.default_rng(seed)) if restarts > 1 else [base]
    macro_anneal(probs, config, seed)
    return min((p.best_tour(inst) for p in probs), key=lambda t: t.cost)

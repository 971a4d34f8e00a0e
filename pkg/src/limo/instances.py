"""TSP instances: TSPLIB ingestion, distance conventions and tour costs.

Distances follow the TSPLIB95 reference formulas exactly for the integer
metrics (``EUC_2D``, ``CEIL_2D``, ``GEO``, ``ATT``) and explicit matrices.
``REAL_EUC`` is the unrounded Euclidean norm used for random unit-square
studies. All costs are carried as ``float64``; integer metrics simply yield
integral values.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidTourError, MalformedFileError, UnsupportedMetricError

METRICS = ("EUC_2D", "CEIL_2D", "GEO", "ATT", "EXPLICIT", "REAL_EUC")
EXPLICIT_FORMATS = ("FULL_MATRIX", "UPPER_ROW", "LOWER_DIAG_ROW")

# TSPLIB95 reference constants for GEO
GEO_PI = 3.141592
GEO_RRR = 6378.388


def _nint(x):
    return np.floor(x + 0.5)


def geo_radians(coords: np.ndarray) -> np.ndarray:
    """Convert TSPLIB ``DDD.MM`` coordinates to (latitude, longitude) radians."""
    deg = np.trunc(coords)
    minutes = coords - deg
    return GEO_PI * (deg + 5.0 * minutes / 3.0) / 180.0


@dataclass(frozen=True, eq=False)
class Instance:
    """An immutable symmetric TSP instance.

    ``coords`` is an ``(n, 2)`` array for coordinate metrics and ``None`` for
    ``EXPLICIT``; ``explicit_weights`` is the full symmetric ``(n, n)`` matrix
    for ``EXPLICIT`` only.
    """

    name: str
    n: int
    metric: str
    coords: np.ndarray | None = None
    explicit_weights: np.ndarray | None = None
    _geo: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise UnsupportedMetricError(self.metric)
        if self.n < 2:
            raise ValueError(f"instance needs at least 2 cities, got n={self.n}")
        if self.metric == "EXPLICIT":
            if self.explicit_weights is None:
                raise ValueError("EXPLICIT instance requires explicit_weights")
            w = np.array(self.explicit_weights, dtype=np.float64)
            if w.shape != (self.n, self.n):
                raise ValueError(f"explicit matrix must be {self.n}x{self.n}, got {w.shape}")
            if not np.array_equal(w, w.T):
                raise ValueError("explicit matrix is not symmetric")
            if np.any(np.diag(w) != 0):
                raise ValueError("explicit matrix must have a zero diagonal")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("explicit weights must be finite and non-negative")
            w.flags.writeable = False
            object.__setattr__(self, "explicit_weights", w)
            object.__setattr__(self, "coords", None if self.coords is None else _frozen(self.coords))
        else:
            if self.coords is None:
                raise ValueError(f"{self.metric} instance requires coordinates")
            c = _frozen(self.coords)
            if c.shape != (self.n, 2):
                raise ValueError(f"coords must have shape ({self.n}, 2), got {c.shape}")
            if not np.all(np.isfinite(c)):
                raise ValueError("coordinates must be finite")
            object.__setattr__(self, "coords", c)
            if self.metric == "GEO":
                object.__setattr__(self, "_geo", _frozen(geo_radians(c)))

    def __len__(self) -> int:
        return self.n

    @property
    def has_coords(self) -> bool:
        return self.coords is not None

    def pair_distances(self, a, b) -> np.ndarray:
        """Element-wise distances between index arrays ``a`` and ``b`` (broadcast)."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if self.metric == "EXPLICIT":
            out = self.explicit_weights[a, b]
        elif self.metric == "GEO":
            g = self._geo
            q1 = np.cos(g[a, 1] - g[b, 1])
            q2 = np.cos(g[a, 0] - g[b, 0])
            q3 = np.cos(g[a, 0] + g[b, 0])
            arg = np.clip(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3), -1.0, 1.0)
            out = np.floor(GEO_RRR * np.arccos(arg) + 1.0)
            out = np.where(a == b, 0.0, out)
        else:
            c = self.coords
            dx = c[a, 0] - c[b, 0]
            dy = c[a, 1] - c[b, 1]
            if self.metric == "ATT":
                r = np.sqrt((dx * dx + dy * dy) / 10.0)
                t = _nint(r)
                out = np.where(t < r, t + 1.0, t)
            else:
                r = np.sqrt(dx * dx + dy * dy)
                if self.metric == "EUC_2D":
                    out = _nint(r)
                elif self.metric == "CEIL_2D":
                    out = np.ceil(r)
                else:
                    out = r
        return np.asarray(out, dtype=np.float64)

    def matrix(self, cities: Sequence[int] | None = None) -> np.ndarray:
        """Dense distance matrix over ``cities`` (all cities by default)."""
        idx = np.arange(self.n) if cities is None else np.asarray(cities, dtype=np.int64)
        self._check_indices(idx)
        return self.pair_distances(idx[:, None], idx[None, :])

    def _check_indices(self, idx: np.ndarray) -> None:
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"city index out of range for n={self.n}")

    def subset(self, cities: Sequence[int], name: str | None = None) -> "Instance":
        idx = np.asarray(cities, dtype=np.int64)
        self._check_indices(idx)
        if self.metric == "EXPLICIT":
            return Instance(name or self.name, len(idx), "EXPLICIT",
                            explicit_weights=self.explicit_weights[np.ix_(idx, idx)])
        return Instance(name or self.name, len(idx), self.metric, coords=self.coords[idx])


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Tour:
    """An ordering of city ids with its cost under the instance metric."""

    order: tuple[int, ...]
    closed: bool
    cost: float

    def __len__(self) -> int:
        return len(self.order)

    @classmethod
    def build(cls, inst: Instance, order: Iterable[int], closed: bool = True) -> "Tour":
        order = tuple(int(c) for c in order)
        return cls(order, closed, tour_length(inst, order, closed))

    def validate(self, inst: Instance, cities: Iterable[int] | None = None) -> None:
        expected = set(range(inst.n)) if cities is None else {int(c) for c in cities}
        if len(set(self.order)) != len(self.order):
            raise InvalidTourError("tour repeats a city")
        if set(self.order) != expected:
            raise InvalidTourError("tour is not a permutation of the expected city set")
        recomputed = tour_length(inst, self.order, self.closed)
        if recomputed != self.cost:
            raise InvalidTourError(f"stored cost {self.cost} != recomputed {recomputed}")


def distance(inst: Instance, i: int, j: int) -> float:
    if not (0 <= i < inst.n and 0 <= j < inst.n):
        raise IndexError(f"city index out of range: ({i}, {j}) for n={inst.n}")
    return float(inst.pair_distances(i, j))


def tour_length(inst: Instance, order: Sequence[int], closed: bool = True) -> float:
    """Sum of consecutive edge weights; adds the return edge when ``closed``."""
    idx = np.asarray(order, dtype=np.int64)
    if idx.ndim != 1 or idx.size < 1:
        raise InvalidTourError("tour must be a non-empty 1-D sequence")
    if np.unique(idx).size != idx.size:
        raise InvalidTourError("tour repeats a city")
    inst._check_indices(idx)
    if idx.size == 1:
        return 0.0
    if closed:
        nxt = np.roll(idx, -1)
    else:
        nxt = idx[1:]
        idx = idx[:-1]
    return float(np.sum(inst.pair_distances(idx, nxt)))


def random_instance(n: int, seed: int) -> Instance:
    """``n`` cities drawn i.i.d. uniform on the unit square (``REAL_EUC``)."""
    if n < 2:
        raise ValueError(f"random instance needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    return Instance(f"random{n}_s{seed}", n, "REAL_EUC", coords=rng.random((n, 2)))


def deviation_ratio(found_length: float, optimal_length: float) -> float:
    if not optimal_length > 0:
        raise ValueError(f"optimal length must be positive, got {optimal_length}")
    return found_length / optimal_length


# ---------------------------------------------------------------- TSPLIB I/O

_KEYWORDS = {
    "NAME", "TYPE", "COMMENT", "DIMENSION", "CAPACITY", "EDGE_WEIGHT_TYPE",
    "EDGE_WEIGHT_FORMAT", "EDGE_DATA_FORMAT", "NODE_COORD_TYPE", "DISPLAY_DATA_TYPE",
}
_SECTIONS = {
    "NODE_COORD_SECTION", "EDGE_WEIGHT_SECTION", "DISPLAY_DATA_SECTION", "DEPOT_SECTION",
    "DEMAND_SECTION", "EDGE_DATA_SECTION", "FIXED_EDGES_SECTION", "TOUR_SECTION",
}
_KEY_RE = re.compile(r"^\s*([A-Z_]+)\s*(?::\s*(.*))?$")


def _scan(text: str) -> tuple[dict[str, str], dict[str, list[str]]]:
    header: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        m = _KEY_RE.match(line)
        if m:
            key = m.group(1)
            if key == "EOF":
                break
            if key in _SECTIONS:
                current = sections.setdefault(key, [])
                continue
            if key in _KEYWORDS:
                header[key] = (m.group(2) or "").strip()
                current = None
                continue
        if current is None:
            raise MalformedFileError(f"unexpected line outside any section: {line!r}")
        current.extend(line.split())
    return header, sections


def parse_tsplib(text: str) -> Instance:
    """Parse a symmetric TSPLIB95 ``.tsp`` file."""
    header, sections = _scan(text)
    kind = header.get("TYPE", "TSP").split()[0] if header.get("TYPE") else "TSP"
    if kind != "TSP":
        raise MalformedFileError(f"only symmetric TSP files are supported, got TYPE {kind!r}")
    if "DIMENSION" not in header:
        raise MalformedFileError("missing DIMENSION")
    try:
        n = int(header["DIMENSION"])
    except ValueError:
        raise MalformedFileError(f"bad DIMENSION {header['DIMENSION']!r}") from None
    metric = header.get("EDGE_WEIGHT_TYPE", "").strip()
    if metric not in METRICS:
        raise UnsupportedMetricError(metric)
    name = header.get("NAME", "unnamed")

    if metric == "EXPLICIT":
        fmt = header.get("EDGE_WEIGHT_FORMAT", "").strip()
        if fmt not in EXPLICIT_FORMATS:
            raise UnsupportedMetricError(f"EXPLICIT/{fmt}")
        tokens = sections.get("EDGE_WEIGHT_SECTION")
        if tokens is None:
            raise MalformedFileError("EXPLICIT file without EDGE_WEIGHT_SECTION")
        weights = _explicit_matrix(np.array(tokens, dtype=np.float64), n, fmt)
        if not np.array_equal(weights, weights.T):
            raise MalformedFileError("explicit matrix is not symmetric")
        return Instance(name, n, metric, explicit_weights=weights)

    tokens = sections.get("NODE_COORD_SECTION")
    if tokens is None:
        raise MalformedFileError("missing NODE_COORD_SECTION")
    if len(tokens) % 3:
        raise MalformedFileError("NODE_COORD_SECTION lines must hold 'id x y'")
    rows = np.array(tokens, dtype=np.float64).reshape(-1, 3)
    if rows.shape[0] != n:
        raise MalformedFileError(f"DIMENSION {n} but {rows.shape[0]} coordinates")
    ids = rows[:, 0].astype(np.int64)
    if not np.array_equal(np.sort(ids), np.arange(1, n + 1)):
        raise MalformedFileError("node ids must be 1..DIMENSION")
    coords = np.empty((n, 2))
    coords[ids - 1] = rows[:, 1:]
    return Instance(name, n, metric, coords=coords)


def _explicit_matrix(vals: np.ndarray, n: int, fmt: str) -> np.ndarray:
    w = np.zeros((n, n))
    if fmt == "FULL_MATRIX":
        if vals.size != n * n:
            raise MalformedFileError(f"FULL_MATRIX needs {n * n} values, got {vals.size}")
        return vals.reshape(n, n).copy()
    if fmt == "UPPER_ROW":
        iu = np.triu_indices(n, k=1)
        if vals.size != iu[0].size:
            raise MalformedFileError(f"UPPER_ROW needs {iu[0].size} values, got {vals.size}")
        w[iu] = vals
    else:  # LOWER_DIAG_ROW
        il = np.tril_indices(n)
        if vals.size != il[0].size:
            raise MalformedFileError(f"LOWER_DIAG_ROW needs {il[0].size} values, got {vals.size}")
        w[il] = vals
        np.fill_diagonal(w, 0.0)
    return w + w.T


def format_tsplib(inst: Instance) -> str:
    """Serialize an instance; ``parse_tsplib`` reads it back to equal fields."""
    lines = [f"NAME: {inst.name}", "TYPE: TSP", f"DIMENSION: {inst.n}",
             f"EDGE_WEIGHT_TYPE: {inst.metric}"]
    if inst.metric == "EXPLICIT":
        lines += ["EDGE_WEIGHT_FORMAT: FULL_MATRIX", "EDGE_WEIGHT_SECTION"]
        lines += [" ".join(_num(v) for v in row) for row in inst.explicit_weights]
    else:
        lines.append("NODE_COORD_SECTION")
        lines += [f"{i + 1} {_num(x)} {_num(y)}" for i, (x, y) in enumerate(inst.coords)]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def format_tour(tour: Tour, name: str, comment: str | None = None) -> str:
    """TSPLIB ``.tour`` text: 1-based ids in TOUR_SECTION terminated by -1."""
    lines = [f"NAME: {name}"]
    if comment:
        lines.append(f"COMMENT: {comment}")
    lines += ["TYPE: TOUR", f"DIMENSION: {len(tour.order)}", "TOUR_SECTION"]
    lines += [str(c + 1) for c in tour.order]
    lines += ["-1", "EOF"]
    return "\n".join(lines) + "\n"


def parse_tour(text: str) -> list[int]:
    """Read a TSPLIB ``.tour`` file into 0-based city ids."""
    _, sections = _scan(text)
    tokens = sections.get("TOUR_SECTION")
    if tokens is None:
        raise MalformedFileError("missing TOUR_SECTION")
    order = []
    for tok in tokens:
        v = int(tok)
        if v == -1:
            break
        order.append(v - 1)
    return order


def mean_edge(inst: Instance) -> float:
    """Mean pairwise distance over distinct city pairs."""
    iu = np.triu_indices(inst.n, k=1)
    return float(inst.pair_distances(iu[0], iu[1]).mean())


def max_edge(inst: Instance, cities: Sequence[int] | None = None) -> float:
    m = inst.matrix(cities)
    return float(m.max()) if m.size else 0.0


__all__ = [
    "Instance", "Tour", "METRICS", "distance", "tour_length", "random_instance",
    "deviation_ratio", "parse_tsplib", "format_tsplib", "format_tour", "parse_tour",
    "geo_radians", "mean_edge", "max_edge",
]

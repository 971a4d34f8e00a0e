"""Annealed-insertion TSP solvers, a functional twin of an in-memory
annealing macro, and a hierarchical divide-and-conquer pipeline."""
from __future__ import annotations

from .baseline_sa import SaParams, sa_solve
from .hierarchy import SolveOptions, hierarchical_solve
from .instances import Instance, Tour, deviation_ratio, parse_tsplib, random_instance, tour_length
from .macro import MacroConfig, ScheduleTable, macro_anneal, macro_solve
from .oracle import held_karp_closed, held_karp_open
from .swai import SwaiParams, swai_solve

__version__ = "0.1.0"

__all__ = [
    "Instance", "Tour", "tour_length", "random_instance", "deviation_ratio", "parse_tsplib",
    "held_karp_closed", "held_karp_open", "SwaiParams", "swai_solve", "SaParams", "sa_solve",
    "MacroConfig", "ScheduleTable", "macro_anneal", "macro_solve", "SolveOptions",
    "hierarchical_solve",
]

"""Brute-force mapper for small instances: the ground truth the heuristic is checked against."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .graph import ModelGraph
from .mapper import activation_transfer_opt, weight_locality_opt
from .scheduler import MappingError, MappingState, Schedule, cost_table, full_schedule
from .system import SystemSpec, UnsupportedLayer

DEFAULT_BUDGET = 10**6


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        shown = str(count) if count < 10**12 else f"{float(count):.3g}"
        super().__init__(f"exhaustive search needs {shown} candidates, budget is {budget}")


@dataclass
class OracleResult:
    assignment: dict[str, str]
    state: MappingState
    schedule: Schedule
    latency: float
    evaluated: int

    @property
    def acc_order(self) -> dict[str, list[str]]:
        return self.state.acc_order


def candidate_count(g: ModelGraph, sys: SystemSpec) -> int:
    table = cost_table(g, sys)
    return math.prod(len(table.eligible[lid]) for lid in g.commit_order)


def evaluate_assignment(g: ModelGraph, sys: SystemSpec, assignment, with_locality: bool = True) -> tuple[MappingState, Schedule]:
    """Schedule one placement, committed in the graph's commit order."""
    m = MappingState.from_assignment(g, sys, assignment)
    if with_locality:
        m = activation_transfer_opt(g, sys, weight_locality_opt(g, sys, m))
    return m, full_schedule(g, sys, m)


def exhaustive_map(
    g: ModelGraph,
    sys: SystemSpec,
    with_locality: bool = True,
    max_candidates: int = DEFAULT_BUDGET,
    enumerate_orderings: bool = False,
) -> OracleResult:
    """Best latency over every placement of every layer on every eligible accelerator.

    Per-accelerator execution order is the commit order, as in the mapper.
    With ``enumerate_orderings`` every permutation of each accelerator's
    layers is tried as well (deadlocking orders are counted but skipped).
    Ties go to the lexicographically smallest placement vector.
    """
    table = cost_table(g, sys)
    layers = list(g.commit_order)
    options = []
    for lid in layers:
        if not table.eligible[lid]:
            raise UnsupportedLayer("*", lid, g.nodes[lid].kind)
        options.append(table.eligible[lid])
    count = math.prod(len(o) for o in options)
    if count > max_candidates:
        raise BudgetExceeded(count, max_candidates)

    best = None
    evaluated = 0
    for combo in itertools.product(*options):
        assignment = dict(zip(layers, combo))
        if not enumerate_orderings:
            evaluated += 1
            m, s = evaluate_assignment(g, sys, assignment, with_locality)
            if best is None or s.sys_latency < best[2].sys_latency:
                best = (assignment, m, s)
            continue
        base = MappingState.from_assignment(g, sys, assignment)
        accs = [a for a in sys.ids if base.acc_order[a]]
        for perms in itertools.product(*(itertools.permutations(base.acc_order[a]) for a in accs)):
            evaluated += 1
            if evaluated > max_candidates:
                raise BudgetExceeded(evaluated, max_candidates)
            m = base.copy()
            for a, p in zip(accs, perms):
                m.acc_order[a] = list(p)
            try:
                if with_locality:
                    m = activation_transfer_opt(g, sys, weight_locality_opt(g, sys, m))
                s = full_schedule(g, sys, m)
            except MappingError:
                continue
            if best is None or s.sys_latency < best[2].sys_latency:
                best = (assignment, m, s)
    assignment, m, s = best
    return OracleResult(assignment, m, s, s.sys_latency, evaluated)

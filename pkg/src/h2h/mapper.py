"""Computation- and communication-aware layer mapping.

The flow has four steps, each refining the previous mapping:

1. computation-prioritized mapping with zero data locality,
2. weight pinning in local DRAM (knapsack per accelerator),
3. activation fusion between adjacent layers sharing an accelerator,
4. greedy remapping of layers onto their neighbours' accelerators, accepted
   only when the system latency strictly drops.

Steps 2 and 3 are pure functions of the placement: the knapsack prefers
layers earlier in their accelerator's execution order (which on a single
accelerator is the same as earlier start time) and fusion walks edges in
topological order.  That keeps step 4's per-candidate re-optimisation of only
the two touched accelerators equivalent to redoing steps 2 and 3 globally.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import ModelGraph, topo_order
from .knapsack import KnapsackItem, knapsack_solver
from .scheduler import (
    TIE_TOL,
    MappingState,
    Schedule,
    cost_table,
    full_schedule,
    incremental_reschedule,
)
from .system import SystemSpec, UnsupportedLayer, transfer_time

log = logging.getLogger(__name__)

# candidate assignments enumerated at once in step 1
ENUM_CAP = 4096


class ModalityChangeError(ValueError):
    pass


@dataclass
class StepResult:
    state: MappingState
    schedule: Schedule

    @property
    def sys_latency(self) -> float:
        return self.schedule.sys_latency

    @property
    def sys_energy(self) -> float:
        return self.schedule.sys_energy


@dataclass
class H2HResult:
    graph: ModelGraph
    steps: dict[int, StepResult]
    remap_log: list[dict] = field(default_factory=list)
    search_time: float = 0.0
    passes: int = 0

    @property
    def final(self) -> MappingState:
        return self.steps[max(self.steps)].state

    @property
    def schedule(self) -> Schedule:
        return self.steps[max(self.steps)].schedule

    @property
    def sys_latency(self) -> float:
        return self.schedule.sys_latency


# ---------------------------------------------------------------- step 1


def _chunks(group: list[str], n_options: Mapping[str, int]) -> list[list[str]]:
    """Split a frontier group (id order) so each chunk has <= ENUM_CAP candidate assignments."""
    chunks, cur, size = [], [], 1
    for lid in group:
        k = n_options[lid]
        if cur and size * k > ENUM_CAP:
            chunks.append(cur)
            cur, size = [], 1
        cur.append(lid)
        size *= k
    if cur:
        chunks.append(cur)
    return chunks


def computation_prioritized_mapping(
    g: ModelGraph, sys: SystemSpec, fixed: Mapping[str, str] | None = None
) -> MappingState:
    """Map frontier group by frontier group, minimising the makespan increment.

    Layer costs assume zero locality: weights, IFM and OFM all cross the host
    link.  Each group's members are appended to their accelerators in id
    order.  ``fixed`` pins some layers to a given accelerator.
    """
    fixed = dict(fixed or {})
    table = cost_table(g, sys)
    for lid in g.commit_order:
        if not table.eligible[lid]:
            raise UnsupportedLayer("*", lid, g.nodes[lid].kind)
    ids = sys.ids
    cost = {}
    options = {}
    for lid in g.nodes:
        row = np.full(len(ids), np.inf)
        for a in table.eligible[lid]:
            row[sys.index[a]] = table.zero_locality_total(g, sys, lid, a)
        cost[lid] = row
        if lid in fixed:
            a = fixed[lid]
            if a not in table.eligible[lid]:
                raise UnsupportedLayer(a, lid, g.nodes[lid].kind)
            options[lid] = [sys.index[a]]
        else:
            options[lid] = [sys.index[a] for a in table.eligible[lid]]

    m = MappingState.empty(sys)
    free = np.zeros(len(ids))
    finish: dict[str, float] = {}
    makespan = 0.0
    for group in g.levels:
        for chunk in _chunks(list(group), {lid: len(options[lid]) for lid in group}):
            choice = _best_chunk(g, chunk, options, cost, free, finish, makespan)
            for lid, ai in zip(chunk, choice):
                s = free[ai]
                for p in g.preds[lid]:
                    if finish[p] > s:
                        s = finish[p]
                f = s + cost[lid][ai]
                free[ai] = f
                finish[lid] = float(f)
                makespan = max(makespan, float(f))
                m.commit(lid, ids[ai])
    return m


def _best_chunk(g, chunk, options, cost, free, finish, makespan) -> tuple[int, ...]:
    cands = np.array(list(itertools.product(*(options[lid] for lid in chunk))), dtype=np.intp)
    k = len(cands)
    rows = np.arange(k)
    fr = np.tile(free, (k, 1))
    span = np.full(k, makespan)
    total = np.zeros(k)
    for j, lid in enumerate(chunk):
        ready = max((finish[p] for p in g.preds[lid]), default=0.0)
        a = cands[:, j]
        f = np.maximum(fr[rows, a], ready) + cost[lid][a]
        fr[rows, a] = f
        span = np.maximum(span, f)
        total += f
    # minimum makespan; near-ties go to the smaller summed finish time, then enumeration order
    near = span <= span.min() + TIE_TOL
    total = np.where(near, total, np.inf)
    idx = int(np.flatnonzero(total <= total.min() + TIE_TOL)[0])
    return tuple(int(x) for x in cands[idx])


# ---------------------------------------------------------------- step 2


def _reserved(g: ModelGraph, m: MappingState, acc: str) -> int:
    return sum(g.nodes[u].ofm_bytes for u, _ in m.fused_edges if m.assignment[u] == acc)


def weight_locality_opt(
    g: ModelGraph,
    sys: SystemSpec,
    m: MappingState,
    accs: Iterable[str] | None = None,
    mandatory: Iterable[str] = (),
) -> MappingState:
    """Re-choose pinned weights on each accelerator with an exact knapsack.

    Capacity is the local DRAM left after fusion buffers.  Layers earlier in
    the accelerator's order win value ties.  ``mandatory`` layers are forced in.
    """
    m = m.copy()
    mandatory = set(mandatory)
    for a in sys.ids if accs is None else accs:
        layers = m.acc_order[a]
        m.pinned.difference_update(layers)
        reserved = _reserved(g, m, a)
        bw = sys[a].bw_acc
        items = [KnapsackItem(lid, g.nodes[lid].weight_bytes, transfer_time(g.nodes[lid].weight_bytes, bw)) for lid in layers]
        chosen = knapsack_solver(items, max(sys[a].m_acc - reserved, 0), mandatory.intersection(layers))
        m.pinned |= chosen
        m.dram_used[a] = reserved + sum(g.nodes[lid].weight_bytes for lid in chosen)
    return m


# ---------------------------------------------------------------- step 3


def activation_transfer_opt(
    g: ModelGraph, sys: SystemSpec, m: MappingState, accs: Iterable[str] | None = None
) -> MappingState:
    """Fuse same-accelerator edges whose producer OFM fits in the remaining DRAM.

    Edges are tried in topological order; each fused edge reserves the
    producer's OFM bytes on that accelerator.
    """
    m = m.copy()
    topo = g.topo_index
    if accs is None:
        edges = g.edges
    else:
        edges = [(u, v) for a in accs for u in m.acc_order[a] for v in g.succs[u]]
    edges = sorted(
        ((u, v) for u, v in edges if m.assignment[u] == m.assignment[v] and (u, v) not in m.fused_edges),
        key=lambda e: (topo[e[0]], topo[e[1]]),
    )
    for u, v in edges:
        a = m.assignment[u]
        need = g.nodes[u].ofm_bytes
        if m.dram_used[a] + need <= sys[a].m_acc:
            m.fused_edges.add((u, v))
            m.dram_used[a] += need
    return m


def relocalize(g: ModelGraph, sys: SystemSpec, m: MappingState, accs: Iterable[str], mandatory: Iterable[str] = ()) -> MappingState:
    """Drop and redo pinning and fusion on ``accs`` (steps 2 and 3 for those accelerators)."""
    accs = list(accs)
    on = set()
    for a in accs:
        on.update(m.acc_order[a])
    m = m.copy()
    m.fused_edges = {(u, v) for u, v in m.fused_edges if u not in on and v not in on}
    for a in accs:
        m.dram_used[a] = 0
    m = weight_locality_opt(g, sys, m, accs, mandatory)
    return activation_transfer_opt(g, sys, m, accs)


# ---------------------------------------------------------------- step 4


def _remap(
    g: ModelGraph,
    sys: SystemSpec,
    m: MappingState,
    sched: Schedule,
    frozen: frozenset[str] = frozenset(),
    mandatory: frozenset[str] = frozenset(),
) -> tuple[MappingState, Schedule, list[dict], int]:
    table = cost_table(g, sys)
    order = topo_order(g)
    remaps: list[dict] = []
    max_passes = len(g) * len(sys) + 1
    passes = 0
    while True:
        passes += 1
        accepted = 0
        for lid in order:
            if lid in frozen:
                continue
            src = m.assignment[lid]
            hosts = {m.assignment[x] for x in g.preds[lid] + g.succs[lid]}
            dests = sorted((a for a in hosts if a != src and a in table.compute[lid]), key=sys.index.get)
            best = None
            for d in dests:
                cand = m.copy()
                cand.move(lid, d)
                cand = relocalize(g, sys, cand, (src, d), mandatory)
                cs = incremental_reschedule(sched, g, sys, cand, set(cand.acc_order[src]) | set(cand.acc_order[d]))
                bound = sched.sys_latency if best is None else best[1].sys_latency
                if cs.sys_latency < bound - TIE_TOL:
                    best = (cand, cs, d)
            if best is not None:
                cand, cs, d = best
                remaps.append({
                    "pass": passes,
                    "layer": lid,
                    "src": src,
                    "dst": d,
                    "latency_before": sched.sys_latency,
                    "latency_after": cs.sys_latency,
                })
                m, sched = cand, cs
                accepted += 1
        if not accepted:
            break
        if passes >= max_passes:
            log.warning("remapping stopped after %d passes without converging", passes)
            break
    return m, sched, remaps, passes


def data_locality_remapping(
    g: ModelGraph, sys: SystemSpec, m: MappingState, frozen: Iterable[str] = (), mandatory: Iterable[str] = ()
) -> MappingState:
    """Greedy neighbour remapping until a full pass finds no latency improvement."""
    m, _, _, _ = _remap(g, sys, m, full_schedule(g, sys, m), frozenset(frozen), frozenset(mandatory))
    return m


# ---------------------------------------------------------------- drivers


def run_h2h(
    g: ModelGraph,
    sys: SystemSpec,
    last_step: int = 4,
    fixed: Mapping[str, str] | None = None,
    frozen: Iterable[str] = (),
    mandatory: Iterable[str] = (),
) -> H2HResult:
    """Run steps 1..``last_step`` and snapshot the mapping and schedule after each."""
    if last_step not in (1, 2, 3, 4):
        raise ValueError("last_step must be 1, 2, 3 or 4")
    t0 = time.perf_counter()
    mandatory = frozenset(mandatory)
    m = computation_prioritized_mapping(g, sys, fixed)
    sched = full_schedule(g, sys, m)
    steps = {1: StepResult(m, sched)}
    remaps: list[dict] = []
    passes = 0
    if last_step >= 2:
        m = weight_locality_opt(g, sys, m, mandatory=mandatory)
        sched = incremental_reschedule(sched, g, sys, m, m.pinned)
        steps[2] = StepResult(m, sched)
    if last_step >= 3:
        m = activation_transfer_opt(g, sys, m)
        sched = incremental_reschedule(sched, g, sys, m, {x for e in m.fused_edges for x in e})
        steps[3] = StepResult(m, sched)
    if last_step >= 4:
        m, sched, remaps, passes = _remap(g, sys, m, sched, frozenset(frozen), mandatory)
        steps[4] = StepResult(m, sched)
    lat = [steps[k].sys_latency for k in sorted(steps)]
    assert all(a >= b for a, b in zip(lat, lat[1:])), f"step latencies not monotone: {lat}"
    return H2HResult(g, steps, remaps, time.perf_counter() - t0, passes)


def run_baseline(g: ModelGraph, sys: SystemSpec) -> tuple[MappingState, Schedule]:
    """Computation-prioritized mapping plus weight locality (steps 1-2)."""
    res = run_h2h(g, sys, last_step=2)
    return res.steps[2].state, res.steps[2].schedule


def remap_incremental(prev: H2HResult, g_new: ModelGraph, sys: SystemSpec) -> H2HResult:
    """Remap after modalities were added or removed, reusing buffered weights.

    Persisting layers whose weights were pinned stay on their accelerator with
    their weights forced into the knapsack.  Other persisting layers start from
    their previous accelerator but may be remapped.  New layers go through
    steps 1-4 as usual.

    A second candidate seeds the new layers from a cold run on ``g_new``
    instead of step 1 (same constraints); the faster of the two is returned,
    the plain warm run on ties.
    """
    g_old = prev.graph
    for lid in g_new.nodes.keys() & g_old.nodes.keys():
        a, b = g_old.nodes[lid], g_new.nodes[lid]
        if (a.kind, dict(a.params), a.dtype_bytes) != (b.kind, dict(b.params), b.dtype_bytes):
            raise ModalityChangeError(f"persisting layer {lid!r} changed kind or shape")
    old = prev.final
    seeded, buffered = {}, set()
    for lid in g_new.nodes.keys() & old.assignment.keys():
        acc = old.assignment[lid]
        if acc in sys.by_id and sys[acc].supports(g_new.nodes[lid].kind):
            seeded[lid] = acc
            if lid in old.pinned:
                buffered.add(lid)
    t0 = time.perf_counter()
    warm = run_h2h(g_new, sys, fixed=seeded, frozen=buffered, mandatory=buffered)
    cold = run_h2h(g_new, sys)
    hint = {**cold.final.assignment, **seeded}
    alt = run_h2h(g_new, sys, fixed=hint, frozen=buffered, mandatory=buffered)
    best = alt if alt.sys_latency < warm.sys_latency else warm
    best.search_time = time.perf_counter() - t0
    return best

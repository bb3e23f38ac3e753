"""List scheduling of a (partial) layer mapping.

Each accelerator runs its layers strictly in ``acc_order``.  A layer starts
once its accelerator is free and every producer has finished; its own
transfers (weights in, IFM in, OFM out) are charged inside its busy interval.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping

from .graph import ModelGraph
from .system import CostBreakdown, SystemSpec, UnsupportedLayer, compute_energy, compute_latency

TIE_TOL = 1e-12


class ScheduleError(ValueError):
    pass


class MappingError(ValueError):
    """A MappingState is incomplete or violates its invariants."""


@dataclass
class MappingState:
    """Layer placement plus the locality decisions made on top of it.

    ``commit_index`` records the global order layers were committed in; the
    per-accelerator ``acc_order`` lists are kept sorted by it.
    """

    assignment: dict[str, str] = field(default_factory=dict)
    acc_order: dict[str, list[str]] = field(default_factory=dict)
    pinned: set[str] = field(default_factory=set)
    fused_edges: set[tuple[str, str]] = field(default_factory=set)
    dram_used: dict[str, int] = field(default_factory=dict)
    commit_index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, sys: SystemSpec) -> "MappingState":
        return cls(acc_order={a: [] for a in sys.ids}, dram_used={a: 0 for a in sys.ids})

    @classmethod
    def from_assignment(cls, g: ModelGraph, sys: SystemSpec, assignment: Mapping[str, str]) -> "MappingState":
        """Commit layers in the graph's commit order with the given placement."""
        m = cls.empty(sys)
        for lid in g.commit_order:
            m.commit(lid, assignment[lid])
        return m

    def copy(self) -> "MappingState":
        return MappingState(
            dict(self.assignment),
            {a: list(o) for a, o in self.acc_order.items()},
            set(self.pinned),
            set(self.fused_edges),
            dict(self.dram_used),
            dict(self.commit_index),
        )

    def commit(self, layer: str, acc: str) -> None:
        if layer in self.assignment:
            raise MappingError(f"layer {layer!r} already assigned")
        self.assignment[layer] = acc
        self.acc_order[acc].append(layer)
        self.commit_index[layer] = len(self.commit_index)

    def move(self, layer: str, acc: str) -> None:
        """Reassign ``layer``, inserting it where its commit index says.

        Pinning and fusion decisions involving the layer must be redone by the caller.
        """
        src = self.assignment[layer]
        if src == acc:
            return
        self.acc_order[src].remove(layer)
        order = self.acc_order[acc]
        ci = self.commit_index[layer]
        idx = 0
        while idx < len(order) and self.commit_index[order[idx]] < ci:
            idx += 1
        order.insert(idx, layer)
        self.assignment[layer] = acc

    def layers_on(self, acc: str) -> list[str]:
        return self.acc_order[acc]

    def to_dict(self) -> dict[str, Any]:
        return {
            "assignment": dict(sorted(self.assignment.items())),
            "acc_order": {a: list(o) for a, o in self.acc_order.items()},
            "pinned": sorted(self.pinned),
            "fused_edges": sorted([u, v] for u, v in self.fused_edges),
            "dram_used": dict(self.dram_used),
            "commit_order": sorted(self.commit_index, key=self.commit_index.get),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MappingState":
        m = cls(
            assignment=dict(d["assignment"]),
            acc_order={a: list(o) for a, o in d["acc_order"].items()},
            pinned=set(d.get("pinned", ())),
            fused_edges={(u, v) for u, v in d.get("fused_edges", ())},
            dram_used={a: int(b) for a, b in d.get("dram_used", {}).items()},
        )
        commit = d.get("commit_order") or [lid for o in m.acc_order.values() for lid in o]
        m.commit_index = {lid: i for i, lid in enumerate(commit)}
        return m


def check_state(g: ModelGraph, sys: SystemSpec, m: MappingState, complete: bool = True) -> None:
    """Raise MappingError if ``m`` breaks any MappingState invariant."""
    for lid, a in m.assignment.items():
        if lid not in g.nodes:
            raise MappingError(f"assigned layer {lid!r} not in model")
        if a not in sys.by_id:
            raise MappingError(f"layer {lid!r} assigned to unknown accelerator {a!r}")
        if not sys[a].supports(g.nodes[lid].kind):
            raise UnsupportedLayer(a, lid, g.nodes[lid].kind)
    if complete and len(m.assignment) != len(g.nodes):
        missing = sorted(set(g.nodes) - set(m.assignment))
        raise MappingError(f"assignment incomplete, missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
    seen: dict[str, str] = {}
    for a, order in m.acc_order.items():
        for lid in order:
            if lid in seen:
                raise MappingError(f"layer {lid!r} appears more than once in acc_order")
            seen[lid] = a
            if m.assignment.get(lid) != a:
                raise MappingError(f"layer {lid!r} listed on {a!r} but assigned to {m.assignment.get(lid)!r}")
    if len(seen) != len(m.assignment):
        raise MappingError("some assigned layers are missing from acc_order")
    if not m.pinned <= m.assignment.keys():
        raise MappingError("pinned contains unassigned layers")
    for u, v in m.fused_edges:
        if v not in g.succs.get(u, ()):
            raise MappingError(f"fused edge ({u!r}, {v!r}) is not a model edge")
        if m.assignment.get(u) is None or m.assignment.get(u) != m.assignment.get(v):
            raise MappingError(f"fused edge ({u!r}, {v!r}) spans accelerators")
    for a in sys.ids:
        used = sum(g.nodes[lid].weight_bytes for lid in m.acc_order.get(a, ()) if lid in m.pinned)
        used += sum(g.nodes[u].ofm_bytes for u, v in m.fused_edges if m.assignment[u] == a)
        if m.dram_used.get(a, 0) != used:
            raise MappingError(f"dram_used[{a!r}] = {m.dram_used.get(a, 0)} but commitments total {used}")
        if used > sys[a].m_acc:
            raise MappingError(f"accelerator {a!r} DRAM over capacity: {used} > {sys[a].m_acc}")


class CostTable:
    """Per (layer, accelerator) compute latency/energy, computed once per model/system pair."""

    def __init__(self, g: ModelGraph, sys: SystemSpec):
        self.compute: dict[str, dict[str, float]] = {}
        self.compute_energy: dict[str, dict[str, float]] = {}
        self.eligible: dict[str, list[str]] = {}
        for lid, layer in g.nodes.items():
            lat, en, elig = {}, {}, []
            for acc in sys.accelerators:
                if not acc.supports(layer.kind):
                    continue
                lat[acc.id] = compute_latency(acc, layer)
                en[acc.id] = compute_energy(acc, layer)
                elig.append(acc.id)
            self.compute[lid] = lat
            self.compute_energy[lid] = en
            self.eligible[lid] = elig
        self.in_total = {v: sum(g.nodes[u].ofm_bytes for u in g.preds[v]) for v in g.nodes}

    def zero_locality_total(self, g: ModelGraph, sys: SystemSpec, lid: str, acc: str) -> float:
        layer = g.nodes[lid]
        bw = sys[acc].bw_acc
        return CostBreakdown(layer.weight_bytes / bw, layer.ifm_bytes / bw, self.compute[lid][acc], layer.ofm_bytes / bw).total


@lru_cache(maxsize=64)
def cost_table(g: ModelGraph, sys: SystemSpec) -> CostTable:
    return CostTable(g, sys)


def fused_bytes(g: ModelGraph, m: MappingState, lid: str, table: CostTable | None = None) -> tuple[float, float]:
    """(input_fused_bytes, output_fused_bytes) of a layer under ``m``.

    Input: the IFM shrinks by the share of producer bytes arriving over fused edges.
    Output: the OFM stays local only when every consumer edge is fused.
    """
    layer = g.nodes[lid]
    fused = m.fused_edges
    preds = g.preds[lid]
    in_fused: float = 0
    if preds and fused:
        got = sum(g.nodes[u].ofm_bytes for u in preds if (u, lid) in fused)
        if got:
            total = table.in_total[lid] if table else sum(g.nodes[u].ofm_bytes for u in preds)
            in_fused = layer.ifm_bytes if got == total else layer.ifm_bytes * got / total
    succs = g.succs[lid]
    out_fused = layer.ofm_bytes if succs and fused and all((lid, w) in fused for w in succs) else 0
    return in_fused, out_fused


def state_layer_cost(g: ModelGraph, sys: SystemSpec, m: MappingState, lid: str, table: CostTable | None = None) -> tuple[CostBreakdown, float]:
    """Cost breakdown and energy of one layer under mapping ``m``."""
    table = table or cost_table(g, sys)
    layer = g.nodes[lid]
    a = m.assignment[lid]
    acc = sys[a]
    bw = acc.bw_acc
    in_f, out_f = fused_bytes(g, m, lid, table)
    pinned = lid in m.pinned
    w = 0 if pinned else layer.weight_bytes
    ifm = layer.ifm_bytes - in_f
    ofm = layer.ofm_bytes - out_f
    try:
        comp = table.compute[lid][a]
    except KeyError:
        raise UnsupportedLayer(a, lid, layer.kind) from None
    bd = CostBreakdown(0.0 if pinned else w / bw, ifm / bw, comp, ofm / bw)
    energy = table.compute_energy[lid][a] + (w + ifm + ofm) * acc.energy_per_byte
    return bd, energy


@dataclass
class Schedule:
    start: dict[str, float]
    finish: dict[str, float]
    placement: dict[str, str]
    acc_order: dict[str, list[str]]
    breakdown: dict[str, CostBreakdown]
    energy: dict[str, float]
    sys_latency: float
    sys_energy: float

    @property
    def comm_seconds(self) -> float:
        return math.fsum(b.transfer for b in self.breakdown.values())

    @property
    def compute_seconds(self) -> float:
        return math.fsum(b.compute for b in self.breakdown.values())

    @property
    def compute_share(self) -> float:
        c, t = self.compute_seconds, self.comm_seconds
        return c / (c + t) if c + t > 0 else 1.0

    def busy(self, acc: str) -> list[tuple[str, float, float]]:
        return [(lid, self.start[lid], self.finish[lid]) for lid in self.acc_order.get(acc, ())]

    def timings(self) -> dict[str, tuple[float, float]]:
        return {lid: (self.start[lid], self.finish[lid]) for lid in self.start}


def _commit_consistent(g: ModelGraph, m: MappingState) -> bool:
    """True when commit order is itself topological for graph and accelerator-order edges."""
    ci = m.commit_index
    if len(ci) < len(m.assignment):
        return False
    try:
        for order in m.acc_order.values():
            for a, b in zip(order, order[1:]):
                if ci[a] >= ci[b]:
                    return False
        return all(ci[u] < ci[v] for u, v in g.edges if v in m.assignment)
    except KeyError:
        return False


def _processing_order(g: ModelGraph, m: MappingState, layers: Iterable[str]) -> list[str]:
    """Topological order of graph edges plus accelerator-order edges."""
    if _commit_consistent(g, m):
        layers = list(layers)
        for v in layers:
            for u in g.preds[v]:
                if u not in m.assignment:
                    raise MappingError(f"layer {v!r} scheduled before its producer {u!r} is assigned")
        return sorted(layers, key=m.commit_index.__getitem__)
    layers = set(layers)
    acc_next: dict[str, str] = {}
    indeg: dict[str, int] = {}
    for order in m.acc_order.values():
        prev = None
        for lid in order:
            if lid not in layers:
                continue
            indeg[lid] = 0 if prev is None else 1
            if prev is not None:
                acc_next[prev] = lid
            prev = lid
    for v in layers:
        for u in g.preds[v]:
            if u not in layers:
                raise MappingError(f"layer {v!r} scheduled before its producer {u!r} is assigned")
            indeg[v] += 1
    ready = [v for v in layers if indeg[v] == 0]
    ready.sort(key=lambda v: m.commit_index.get(v, 0))
    out = []
    while ready:
        u = ready.pop()
        out.append(u)
        nxt = [w for w in g.succs[u] if w in layers]
        if u in acc_next:
            nxt.append(acc_next[u])
        for w in nxt:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    if len(out) != len(layers):
        raise MappingError("accelerator execution orders deadlock against layer dependencies")
    return out


def full_schedule(g: ModelGraph, sys: SystemSpec, m: MappingState, allow_partial: bool = False) -> Schedule:
    """Schedule every assigned layer from scratch."""
    if not allow_partial and len(m.assignment) != len(g.nodes):
        missing = sorted(set(g.nodes) - set(m.assignment))
        raise MappingError(f"assignment incomplete, missing {missing[:5]}")
    table = cost_table(g, sys)
    order = _processing_order(g, m, m.assignment)
    acc_prev: dict[str, str] = {}
    for o in m.acc_order.values():
        for a, b in zip(o, o[1:]):
            acc_prev[b] = a
    start: dict[str, float] = {}
    finish: dict[str, float] = {}
    breakdown: dict[str, CostBreakdown] = {}
    energy: dict[str, float] = {}
    for v in order:
        bd, en = state_layer_cost(g, sys, m, v, table)
        breakdown[v] = bd
        energy[v] = en
        s = _ready_time(g, v, acc_prev.get(v), finish)
        start[v] = s
        finish[v] = s + bd.total
    return Schedule(
        start,
        finish,
        dict(m.assignment),
        {a: list(o) for a, o in m.acc_order.items()},
        breakdown,
        energy,
        max(finish.values(), default=0.0),
        math.fsum(energy.values()),
    )


def _ready_time(g: ModelGraph, v: str, acc_pred: str | None, finish: Mapping[str, float]) -> float:
    s = 0.0
    if acc_pred is not None:
        s = finish[acc_pred]
    for u in g.preds[v]:
        f = finish[u]
        if f > s:
            s = f
    return s


def incremental_reschedule(
    prev: Schedule,
    g: ModelGraph,
    sys: SystemSpec,
    m: MappingState,
    changed: Iterable[str],
) -> Schedule:
    """Update ``prev`` after the layers in ``changed`` got new costs or placements.

    Only the changed layers and whatever their timing shifts reach (graph
    successors and accelerator-order successors) are revisited.  The result is
    identical to :func:`full_schedule` on ``m``.
    """
    changed = set(changed)
    if not changed:
        return prev
    table = cost_table(g, sys)
    breakdown = dict(prev.breakdown)
    energy = dict(prev.energy)
    start = dict(prev.start)
    finish = dict(prev.finish)
    for v in changed:
        breakdown[v], energy[v] = state_layer_cost(g, sys, m, v, table)

    new_prev: dict[str, str] = {}
    new_next: dict[str, str] = {}
    for o in m.acc_order.values():
        for a, b in zip(o, o[1:]):
            new_prev[b] = a
            new_next[a] = b
    seeds = set(changed)
    # layers whose accelerator predecessor may have changed
    for v in changed:
        if v in new_next:
            seeds.add(new_next[v])
        old_acc = prev.placement.get(v)
        if old_acc is not None and old_acc != m.assignment.get(v):
            old = prev.acc_order[old_acc]
            i = old.index(v)
            if i + 1 < len(old):
                seeds.add(old[i + 1])

    if _commit_consistent(g, m):
        pos = m.commit_index
    else:
        pos = {v: i for i, v in enumerate(_processing_order(g, m, m.assignment))}
    heap = [(pos[v], v) for v in seeds]
    heapq.heapify(heap)
    queued = set(seeds)
    while heap:
        _, v = heapq.heappop(heap)
        queued.discard(v)
        s = _ready_time(g, v, new_prev.get(v), finish)
        f = s + breakdown[v].total
        if v in changed or s != start.get(v) or f != finish.get(v):
            start[v] = s
            if f != finish.get(v):
                finish[v] = f
                nxt = list(g.succs[v])
                if v in new_next:
                    nxt.append(new_next[v])
                for w in nxt:
                    if w not in queued:
                        queued.add(w)
                        heapq.heappush(heap, (pos[w], w))
    return Schedule(
        start,
        finish,
        dict(m.assignment),
        {a: list(o) for a, o in m.acc_order.items()},
        breakdown,
        energy,
        max(finish.values(), default=0.0),
        math.fsum(energy.values()),
    )


def system_energy(g: ModelGraph, sys: SystemSpec, m: MappingState, sched: Schedule | None = None) -> float:
    """Compute energy plus every unfused, unpinned byte moved over a host link."""
    table = cost_table(g, sys)
    return math.fsum(state_layer_cost(g, sys, m, v, table)[1] for v in m.assignment)


def validate_schedule(g: ModelGraph, sched: Schedule, fused_edges: Iterable[tuple[str, str]] = ()) -> list[str]:
    """Independent check of dependency and exclusivity constraints.  Returns a list of problems."""
    problems = []
    missing = set(g.nodes) - set(sched.start)
    if missing:
        problems.append(f"unscheduled layers: {sorted(missing)[:5]}")
    extra = set(sched.start) - set(g.nodes)
    if extra:
        problems.append(f"schedule has unknown layers: {sorted(extra)[:5]}")
    for v in sched.start:
        s, f = sched.start[v], sched.finish[v]
        if s < 0 or f < s:
            problems.append(f"{v}: bad interval [{s}, {f}]")
        bd = sched.breakdown.get(v)
        if bd is not None and not math.isclose(f - s, bd.total, rel_tol=1e-9, abs_tol=1e-12):
            problems.append(f"{v}: duration {f - s} != cost {bd.total}")
    for u, v in g.edges:
        if u in sched.finish and v in sched.start and sched.start[v] < sched.finish[u]:
            kind = "fused " if (u, v) in set(fused_edges) else ""
            problems.append(f"{kind}edge {u}->{v}: starts {sched.start[v]} before producer finishes {sched.finish[u]}")
    listed = set()
    for acc, order in sched.acc_order.items():
        last_f = None
        for v in order:
            if v in listed:
                problems.append(f"{v} listed on more than one accelerator")
            listed.add(v)
            if sched.placement.get(v) != acc:
                problems.append(f"{v} listed on {acc} but placed on {sched.placement.get(v)}")
            if v not in sched.start:
                continue
            if last_f is not None and sched.start[v] < last_f:
                problems.append(f"{acc}: {v} starts {sched.start[v]} before previous layer finishes {last_f}")
            last_f = sched.finish[v]
    if listed != set(sched.start):
        problems.append("accelerator orders do not cover exactly the scheduled layers")
    if sched.finish and sched.sys_latency != max(sched.finish.values()):
        problems.append(f"sys_latency {sched.sys_latency} != max finish {max(sched.finish.values())}")
    return problems


def assert_valid_schedule(g: ModelGraph, sched: Schedule, fused_edges: Iterable[tuple[str, str]] = ()) -> None:
    problems = validate_schedule(g, sched, fused_edges)
    if problems:
        raise ScheduleError("; ".join(problems[:10]))


def schedule_to_gantt(sched: Schedule) -> dict[str, Any]:
    return {
        "accelerators": {
            acc: [
                {"layer": v, "start": sched.start[v], "finish": sched.finish[v], "breakdown": sched.breakdown[v].to_dict()}
                for v in order
            ]
            for acc, order in sched.acc_order.items()
        },
        "energy": dict(sched.energy),
        "summary": {
            "sys_latency": sched.sys_latency,
            "sys_energy": sched.sys_energy,
            "comm_seconds": sched.comm_seconds,
            "compute_seconds": sched.compute_seconds,
        },
    }


def gantt_to_schedule(doc: str | Mapping[str, Any]) -> Schedule:
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        start, finish, placement, breakdown = {}, {}, {}, {}
        acc_order: dict[str, list[str]] = {}
        for acc, rows in doc["accelerators"].items():
            acc_order[acc] = []
            for row in rows:
                v = row["layer"]
                acc_order[acc].append(v)
                start[v] = float(row["start"])
                finish[v] = float(row["finish"])
                placement[v] = acc
                breakdown[v] = CostBreakdown(**{k: float(x) for k, x in row["breakdown"].items()})
        summary = doc["summary"]
        energy = {v: float(e) for v, e in doc.get("energy", {}).items()}
        return Schedule(
            start, finish, placement, acc_order, breakdown, energy,
            float(summary["sys_latency"]), float(summary["sys_energy"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"malformed Gantt document: {exc!r}") from None

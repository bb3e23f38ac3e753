"""Reference implementations used only by the tests.

Written from the cost-model formulas directly, without going through the
package's cost tables or schedulers, so agreement means something.
"""

from __future__ import annotations

import itertools
import math

TOL = 1e-12


def sizes(kind: str, p: dict, dt: int) -> tuple[int, int, int]:
    """(weight, ifm, ofm) bytes."""
    if kind == "Conv":
        n, m, r, c, k, s = p["n"], p["m"], p["r"], p["c"], p["k"], p["s"]
        return dt * n * m * k * k, dt * m * ((r - 1) * s + k) * ((c - 1) * s + k), dt * n * r * c
    if kind == "FC":
        return dt * p["n"] * p["m"], dt * p["n"], dt * p["m"]
    n, h, l = p["n"], p["h"], p["l"]
    w = 4 * (n * h + h * h + 2 * h) + (l - 1) * 4 * (h * h + h * h + 2 * h)
    return dt * w, dt * n, dt * h


def macs(kind: str, p: dict) -> int:
    if kind == "Conv":
        return p["n"] * p["m"] * p["r"] * p["c"] * p["k"] ** 2
    if kind == "FC":
        return p["n"] * p["m"]
    n, h, l = p["n"], p["h"], p["l"]
    return 4 * (n * h + h * h) + (l - 1) * 4 * (2 * h * h)


def layer_costs(g, sys, m) -> dict[str, tuple[float, float, float, float]]:
    """(weight, input, compute, output) seconds for every layer under mapping ``m``."""
    preds = {v: [] for v in g.nodes}
    succs = {v: [] for v in g.nodes}
    for u, v in g.edges:
        preds[v].append(u)
        succs[u].append(v)
    out = {}
    for v, layer in g.nodes.items():
        kind = layer.kind.value
        acc = sys[m.assignment[v]]
        w, ifm, ofm = sizes(kind, dict(layer.params), layer.dtype_bytes)
        bw = acc.bw_acc
        total_in = sum(sizes(g.nodes[u].kind.value, dict(g.nodes[u].params), g.nodes[u].dtype_bytes)[2] for u in preds[v])
        fused_in = sum(
            sizes(g.nodes[u].kind.value, dict(g.nodes[u].params), g.nodes[u].dtype_bytes)[2]
            for u in preds[v]
            if (u, v) in m.fused_edges
        )
        in_bytes = ifm - (ifm * fused_in / total_in if total_in else 0)
        all_fused = succs[v] and all((v, x) in m.fused_edges for x in succs[v])
        out_bytes = 0 if all_fused else ofm
        compute = acc.perf_model.compute_latency(layer.kind, dict(layer.params))
        out[v] = (0.0 if v in m.pinned else w / bw, in_bytes / bw, compute, out_bytes / bw)
    return out


def schedule(g, sys, m, costs=None) -> tuple[dict, dict]:
    """Event-free list schedule: sweep accelerators until every layer is placed in time."""
    costs = costs or layer_costs(g, sys, m)
    preds = {v: [] for v in g.nodes}
    for u, v in g.edges:
        preds[v].append(u)
    start, finish = {}, {}
    ptr = {a: 0 for a in m.acc_order}
    free = {a: 0.0 for a in m.acc_order}
    todo = sum(len(o) for o in m.acc_order.values())
    while len(finish) < todo:
        progressed = False
        for a, order in m.acc_order.items():
            while ptr[a] < len(order):
                v = order[ptr[a]]
                if any(u not in finish for u in preds[v]):
                    break
                s = max([free[a]] + [finish[u] for u in preds[v]])
                c = costs[v]
                start[v] = s
                finish[v] = s + (((c[0] + c[1]) + c[2]) + c[3])
                free[a] = finish[v]
                ptr[a] += 1
                progressed = True
        if not progressed:
            raise RuntimeError("deadlock")
    return start, finish


def energy(g, sys, m) -> float:
    costs = layer_costs(g, sys, m)
    total = []
    for v, layer in g.nodes.items():
        acc = sys[m.assignment[v]]
        moved = sum(costs[v][i] for i in (0, 1, 3)) * acc.bw_acc
        total.append(macs(layer.kind.value, dict(layer.params)) * acc.energy_per_mac + moved * acc.energy_per_byte)
    return math.fsum(total)


def check_schedule(edges, start, finish, placement, acc_order) -> list[str]:
    """Dependency and non-overlap checks written against plain dicts."""
    bad = []
    for u, v in edges:
        if start[v] < finish[u]:
            bad.append(f"edge {u}->{v}")
    seen = set()
    for a, order in acc_order.items():
        intervals = sorted((start[v], finish[v], v) for v in order)
        for (s0, f0, v0), (s1, f1, v1) in zip(intervals, intervals[1:]):
            if s1 < f0:
                bad.append(f"overlap {v0}/{v1} on {a}")
        for v in order:
            if placement[v] != a:
                bad.append(f"placement {v}")
            seen.add(v)
    if seen != set(start):
        bad.append("coverage")
    return bad


def knapsack_value(weights, values, cap) -> float:
    """Best value by enumerating every subset."""
    best = 0.0
    n = len(weights)
    for mask in range(1 << n):
        w = v = 0
        for i in range(n):
            if mask >> i & 1:
                w += weights[i]
                v += values[i]
        if w <= cap and v > best:
            best = v
    return best


def step1(g, sys) -> dict[str, str]:
    """Computation-prioritized placement by direct enumeration of each frontier group.

    Candidate key: partial makespan (1e-12 ties), then the sum of the group's
    finish times, then enumeration order.  Groups are small in the tests, so
    no chunking happens.
    """
    from h2h.scheduler import MappingState

    m = MappingState.empty(sys)
    for group in g.levels:
        options = [[a for a in sys.ids if sys[a].supports(g.nodes[v].kind)] for v in group]
        scored = []
        for combo in itertools.product(*options):
            cand = m.copy()
            for v, a in zip(group, combo):
                cand.commit(v, a)
            done = set(cand.assignment)
            sub = g.subgraph(done)
            costs = {}
            for v in done:
                layer = g.nodes[v]
                acc = sys[cand.assignment[v]]
                w, ifm, ofm = sizes(layer.kind.value, dict(layer.params), layer.dtype_bytes)
                costs[v] = (w / acc.bw_acc, ifm / acc.bw_acc, acc.perf_model.compute_latency(layer.kind, dict(layer.params)), ofm / acc.bw_acc)
            _, fin = schedule(sub, sys, cand, costs)
            scored.append((max(fin.values()), sum(fin[v] for v in group), cand))
        low = min(x[0] for x in scored)
        near = [x for x in scored if x[0] <= low + TOL]
        low_total = min(x[1] for x in near)
        m = next(x[2] for x in near if x[1] <= low_total + TOL)
    return dict(m.assignment)

"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are written
straight to the terminal), or ``python tests/test_acceptance.py``.
"""

import random
import sys
import time

import numpy as np
import pytest

from h2h.cli import main as cli_main
from h2h.fixtures import (
    BANDWIDTHS,
    BUILTIN_MODELS,
    MMMT_FIXTURES,
    chain3,
    fig2_system,
    fig2_toy,
    mmmt_system,
    random_dag,
    random_system,
    toy_chain,
    toy_chain_system,
)
from h2h.knapsack import KnapsackItem, knapsack_solver
from h2h.mapper import relocalize, remap_incremental, run_h2h
from h2h.oracle import exhaustive_map
from h2h.scheduler import cost_table, full_schedule, gantt_to_schedule, incremental_reschedule

import oracles

LOWEST, HIGHEST = BANDWIDTHS["Low-"], BANDWIDTHS["High"]

# modality removed in the dynamic-modality check
REMOVABLE = {
    "vlocnet-like": "seg.",
    "casia-surf-like": "ir.",
    "vfs-like": "text.",
    "facebag-like": "ir.",
    "cnn-lstm-like": "imu.",
    "mocap-like": "text.",
}


@pytest.fixture
def verdict(capsys):
    def say(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
        assert ok, detail

    return say


def fixture_cases():
    """Every shipped fixture paired with a system it runs on."""
    yield "toy-chain", toy_chain(), toy_chain_system()
    yield "chain3", chain3(), toy_chain_system()
    yield "fig2-toy", fig2_toy(), fig2_system()
    for name, make in MMMT_FIXTURES.items():
        for label, bw in BANDWIDTHS.items():
            yield f"{name}@{label}", make(), mmmt_system(bw)


def monotone(res):
    lat = [res.steps[k].sys_latency for k in (1, 2, 3, 4)]
    return all(a >= b for a, b in zip(lat, lat[1:]))


def test_step_monotonicity(verdict):
    t0 = time.perf_counter()
    bad = [name for name, g, s in fixture_cases() if not monotone(run_h2h(g, s))]
    for i in range(500):
        rng = random.Random(1000 + i)
        g = random_dag(rng.randint(2, 100), 1000 + i)
        s = random_system(rng.randint(2, 12), 1000 + i)
        if not monotone(run_h2h(g, s)):
            bad.append(f"random#{i}")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    verdict(1, "step monotonicity", ok, f"{len(bad)} violations over fixtures + 500 random DAGs in {elapsed:.1f} s (limit 60 s)")


def test_oracle_gap(verdict):
    t0 = time.perf_counter()
    within = below = 0
    for i in range(200):
        rng = random.Random(5000 + i)
        n, k = rng.randint(1, 7), rng.randint(1, 3)
        g, s = random_dag(n, 5000 + i), random_system(k, 5000 + i, dram="board")
        h2h, best = run_h2h(g, s).sys_latency, exhaustive_map(g, s).latency
        below += h2h < best
        within += h2h <= 1.25 * best
    elapsed = time.perf_counter() - t0
    ok = within >= 180 and below == 0 and elapsed < 120
    verdict(2, "oracle gap", ok, f"{within}/200 within 25% (need 180), {below} below optimum, {elapsed:.1f} s (limit 120 s)")


def subset_sums(w, v):
    """Weight and value of every subset of the given items."""
    masks = np.arange(1 << len(w), dtype=np.int64)
    bits = (masks[:, None] >> np.arange(len(w))) & 1
    return bits @ np.asarray(w, dtype=np.int64), bits @ np.asarray(v, dtype=np.int64)


def brute_force_value(w, v, cap):
    """Exact optimum by enumerating both halves' subsets (meet in the middle)."""
    h = len(w) // 2
    wa, va = subset_sums(w[:h], v[:h])
    wb, vb = subset_sums(w[h:], v[h:])
    order = np.argsort(wb, kind="stable")
    wb, best_b = wb[order], np.maximum.accumulate(vb[order])
    fits = wa <= cap
    idx = np.searchsorted(wb, cap - wa[fits], side="right") - 1
    return int((va[fits] + best_b[idx]).max())


def test_knapsack_brute_force(verdict):
    rng = random.Random(42)
    wrong = []
    for t in range(1000):
        n = rng.randint(0, 20)
        scale = rng.choice([1, 1, 2**20])
        w = [rng.randint(1, 1000) * scale for _ in range(n)]
        v = [rng.randint(1, 1000) for _ in range(n)]
        cap = rng.randint(0, sum(w)) if w else rng.randint(0, 10)
        items = [KnapsackItem(f"L{i}", wi, float(vi)) for i, (wi, vi) in enumerate(zip(w, v))]
        chosen = knapsack_solver(items, cap)
        got = sum(it.value for it in items if it.layer in chosen)
        heavy = sum(it.weight for it in items if it.layer in chosen) > cap
        if heavy or got != brute_force_value(w, v, cap):
            wrong.append(t)
    verdict(3, "knapsack vs brute force", not wrong, f"{1000 - len(wrong)}/1000 exact matches")


def test_incremental_equals_full(verdict):
    mismatches = 0
    for t in range(1000):
        rng = random.Random(t)
        g = random_dag(rng.randint(2, 40), t)
        s = random_system(rng.randint(2, 5), t)
        res = run_h2h(g, s, last_step=3)
        m = res.final.copy()
        lid = rng.choice(list(g.nodes))
        dst = rng.choice(cost_table(g, s).eligible[lid])
        src = m.assignment[lid]
        m.move(lid, dst)
        m = relocalize(g, s, m, {src, dst})
        touched = set(m.acc_order[src]) | set(m.acc_order[dst])
        inc = incremental_reschedule(res.schedule, g, s, m, touched)
        full = full_schedule(g, s, m)
        if inc.start != full.start or inc.finish != full.finish:
            mismatches += 1
    verdict(4, "incremental reschedule == full schedule", mismatches == 0, f"{1000 - mismatches}/1000 trials identical")


def relative_latency(g, bw):
    res = run_h2h(g, mmmt_system(bw))
    return res.steps[4].sys_latency / res.steps[2].sys_latency, res


def test_bandwidth_trend(verdict):
    trend_bad, in_band, lines = [], 0, []
    for name, make in MMMT_FIXTURES.items():
        low, _ = relative_latency(make(), LOWEST)
        high, _ = relative_latency(make(), HIGHEST)
        reduction = 100 * (1 - low)
        in_band += 15 <= reduction <= 80
        if low > high:
            trend_bad.append(name)
        lines.append(f"{name} {reduction:.1f}%")
    ok = not trend_bad and in_band >= 4
    detail = f"trend broken on {trend_bad or 'none'}; {in_band}/6 reductions at 0.125 GB/s in [15, 80]% ({', '.join(lines)})"
    verdict(5, "bandwidth trend", ok, detail)


def test_compute_share(verdict):
    bad = []
    for name, make in MMMT_FIXTURES.items():
        _, res = relative_latency(make(), LOWEST)
        if res.steps[4].schedule.compute_share < res.steps[2].schedule.compute_share:
            bad.append(name)
    for name, g, s in fixture_cases():
        if "@" in name:
            continue
        res = run_h2h(g, s.with_bandwidth(min(s[a].bw_acc for a in s.ids)))
        if res.steps[4].schedule.compute_share < res.steps[2].schedule.compute_share:
            bad.append(name)
    verdict(6, "compute share at lowest bandwidth", not bad, f"decreased on {bad or 'no fixture'}")


def test_search_time(verdict):
    g, s = random_dag(141, 7), random_system(12, 7)
    t0 = time.perf_counter()
    run_h2h(g, s)
    elapsed = time.perf_counter() - t0
    verdict(7, "search time, 141 layers x 12 accelerators", elapsed <= 10, f"{elapsed:.2f} s (limit 10 s)")


def test_dynamic_modality(verdict):
    moved, worse, cases = [], [], 0
    for name, make in MMMT_FIXTURES.items():
        for label, bw in BANDWIDTHS.items():
            g, s = make(), mmmt_system(bw)
            keep = [v for v in g.nodes if not v.startswith(REMOVABLE[name])]
            cold = run_h2h(g, s)
            removed = remap_incremental(cold, g.subgraph(keep), s)
            readded = remap_incremental(removed, g, s)
            cases += 1
            if any(readded.final.assignment[v] != removed.final.assignment[v] for v in keep):
                moved.append(f"{name}@{label}")
            if readded.sys_latency > cold.sys_latency:
                worse.append(f"{name}@{label}")
    ok = not moved and not worse
    detail = f"{cases} remove/re-add cases; persisted layers moved in {moved or 'none'}; slower than cold in {worse or 'none'}"
    verdict(8, "dynamic modality", ok, detail)


def test_schedule_validity(verdict, tmp_path):
    checked, bad = 0, []

    def check(tag, g, sched):
        nonlocal checked
        checked += 1
        problems = oracles.check_schedule(g.edges, sched.start, sched.finish, sched.placement, sched.acc_order)
        if set(sched.start) != set(g.nodes):
            problems.append("incomplete")
        if problems:
            bad.append(f"{tag}: {problems[:2]}")

    systems = {"toy-chain": "toy-chain", "chain3": "toy-chain", "fig2-toy": "fig2"}
    for name in BUILTIN_MODELS:
        out = tmp_path / name
        cli_main(["map", "--model", f"builtin:{name}", "--system", f"builtin:{systems.get(name, 'mmmt-12')}", "--out", str(out)])
        g = BUILTIN_MODELS[name]()
        for k in (1, 2, 3, 4):
            check(f"{name} step {k}", g, gantt_to_schedule((out / f"gantt_step{k}.json").read_text()))
    for name, g, s in fixture_cases():
        for k, snap in run_h2h(g, s).steps.items():
            check(f"{name} step {k}", g, snap.schedule)
    for i in range(200):
        rng = random.Random(9000 + i)
        g, s = random_dag(rng.randint(1, 80), 9000 + i), random_system(rng.randint(1, 12), 9000 + i)
        for k, snap in run_h2h(g, s).steps.items():
            check(f"random#{i} step {k}", g, snap.schedule)
        if rng.random() < 0.1 and len(g) <= 7 and len(s) <= 3:
            check(f"random#{i} oracle", g, exhaustive_map(g, s).schedule)
    verdict(9, "schedule validity", not bad, f"{checked - len(bad)}/{checked} schedules valid")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

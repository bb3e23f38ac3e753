import itertools
import math

import pytest

from h2h.fixtures import chain3, fig2_system, fig2_toy, random_dag, random_system, toy_chain_system, vlocnet_like, mmmt_system
from h2h.graph import LayerKind, LayerNode, ModelGraph
from h2h.mapper import run_h2h
from h2h.oracle import BudgetExceeded, candidate_count, evaluate_assignment, exhaustive_map
from h2h.system import AcceleratorSpec, FixedLatencyModel, SystemSpec

FC = LayerKind.FC


def test_one_layer_three_accelerators():
    g = ModelGraph("one", [LayerNode("X", FC, {"n": 1, "m": 1}, 1)], [])
    sys = SystemSpec([AcceleratorSpec(f"a{i}", {FC}, 1.0, 0, FixedLatencyModel({FC: t})) for i, t in enumerate([4.0, 2.0, 3.0])])
    best = exhaustive_map(g, sys)
    assert best.evaluated == 3
    assert best.assignment == {"X": "a1"}
    assert best.latency == 2.0 + 3.0


def test_chain3_counts_eight():
    best = exhaustive_map(chain3(), toy_chain_system())
    assert best.evaluated == 8 == candidate_count(chain3(), toy_chain_system())


def test_best_is_minimum_of_all_candidates():
    g, sys = fig2_toy(), fig2_system()
    best = exhaustive_map(g, sys)
    layers = list(g.commit_order)
    lats = []
    for combo in itertools.product(sys.ids, repeat=len(layers)):
        lats.append(evaluate_assignment(g, sys, dict(zip(layers, combo)))[1].sys_latency)
    assert best.latency == min(lats)
    assert best.evaluated == len(lats) == 2**6
    # ties go to the lexicographically first placement vector
    first = next(c for c, l in zip(itertools.product(sys.ids, repeat=len(layers)), lats) if l == best.latency)
    assert tuple(best.assignment[v] for v in layers) == first


def test_never_beaten_by_the_mapper():
    for seed in range(20):
        g = random_dag(1 + seed % 6, seed)
        sys = random_system(1 + seed % 3, seed, dram="board")
        assert exhaustive_map(g, sys).latency <= run_h2h(g, sys).sys_latency


def test_without_locality():
    g, sys = fig2_toy(), fig2_system()
    plain = exhaustive_map(g, sys, with_locality=False)
    assert plain.state.pinned == set() and plain.state.fused_edges == set()
    assert plain.latency >= exhaustive_map(g, sys).latency


def test_orderings_mode():
    g, sys = chain3(), toy_chain_system()
    fixed = exhaustive_map(g, sys)
    wide = exhaustive_map(g, sys, enumerate_orderings=True)
    # per placement: product of factorials of per-accelerator layer counts
    expected = sum(
        math.prod(math.factorial(c.count(a)) for a in sys.ids) for c in itertools.product(sys.ids, repeat=3)
    )
    assert wide.evaluated == expected
    assert wide.latency <= fixed.latency


def test_budget():
    with pytest.raises(BudgetExceeded) as err:
        exhaustive_map(vlocnet_like(), mmmt_system())
    assert err.value.count > err.value.budget == 10**6
    with pytest.raises(BudgetExceeded):
        exhaustive_map(fig2_toy(), fig2_system(), max_candidates=63)
    assert exhaustive_map(fig2_toy(), fig2_system(), max_candidates=64).evaluated == 64

import pytest

from h2h.fixtures import (
    BANDWIDTHS,
    BUILTIN_MODELS,
    BUILTIN_SYSTEMS,
    GB,
    MB,
    MMMT_FIXTURES,
    MMMT_TARGET_PARAMS,
    mmmt_system,
    param_count,
    random_dag,
    random_system,
)
from h2h.graph import LayerKind

CONV, FC, LSTM = LayerKind.CONV, LayerKind.FC, LayerKind.LSTM


def test_bandwidth_settings():
    assert [BANDWIDTHS[k] / GB for k in ("Low-", "Low", "Mid-", "Mid", "High")] == [0.125, 0.15, 0.25, 0.5, 1.25]


@pytest.mark.parametrize("name", sorted(MMMT_FIXTURES))
def test_parameter_counts_within_2x(name):
    g = MMMT_FIXTURES[name]()
    ratio = param_count(g) / MMMT_TARGET_PARAMS[name]
    assert 0.5 <= ratio <= 2.0, ratio


@pytest.mark.parametrize("name", sorted(MMMT_FIXTURES))
def test_multi_backbone_shape(name):
    g = MMMT_FIXTURES[name]()
    assert len(g.entries) >= 3, "one entry per modality"
    assert len(g.exits) == 1, "single fusion head"
    cross = [(u, v) for u, v in g.edges if u.split(".")[0] != v.split(".")[0] and not v.startswith(("head.", "fuse.", "bag."))]
    if name != "casia-surf-like":
        assert cross, "backbones should exchange data before the head"
    mmmt_system().check_supports(g)


def test_layer_counts():
    assert len(MMMT_FIXTURES["vlocnet-like"]()) == 141
    assert len(MMMT_FIXTURES["cnn-lstm-like"]()) < 30
    assert len(MMMT_FIXTURES["mocap-like"]()) < 30
    kinds = {l.kind for l in MMMT_FIXTURES["mocap-like"]().nodes.values()}
    assert kinds == {CONV, FC, LSTM}


def test_twelve_accelerator_mix():
    sys = mmmt_system()
    assert len(sys) == 12
    mix = [frozenset(a.supported_kinds) for a in sys.accelerators]
    assert mix.count(frozenset({CONV})) == 7
    assert mix.count(frozenset({CONV, FC, LSTM})) == 2
    assert mix.count(frozenset({FC, LSTM})) == 1
    assert mix.count(frozenset({LSTM})) == 2
    assert all(512 * MB <= a.m_acc <= 8192 * MB for a in sys.accelerators)


def test_builtins_construct():
    for make in list(BUILTIN_MODELS.values()) + list(BUILTIN_SYSTEMS.values()):
        make()


def test_random_generators_are_seeded():
    assert random_dag(30, 4).to_dict() == random_dag(30, 4).to_dict()
    assert random_system(5, 4).to_dict() == random_system(5, 4).to_dict()
    for seed in range(50):
        sys = random_system(1 + seed % 12, seed)
        assert {k for a in sys.accelerators for k in a.supported_kinds} == {CONV, FC, LSTM}

"""Synthetic models and systems.

Nothing here reproduces a published network or accelerator.  The MMMT graphs
only mimic the shape of multi-backbone models (parallel backbones, cross-talk
edges, a fusion head), and the 12-accelerator system only mimics a mix of
Conv-, FC- and LSTM-capable designs.  All numbers are made up.
"""

from __future__ import annotations

import random

from .graph import LayerKind, LayerNode, ModelGraph
from .system import AcceleratorSpec, FixedLatencyModel, RooflineModel, SystemSpec

GB = 10**9
MB = 2**20

# host-link settings swept by default, bytes/s
BANDWIDTHS = {
    "Low-": 0.125 * GB,
    "Low": 0.15 * GB,
    "Mid-": 0.25 * GB,
    "Mid": 0.5 * GB,
    "High": 1.25 * GB,
}

CONV, FC, LSTM = LayerKind.CONV, LayerKind.FC, LayerKind.LSTM


def conv(lid, n, m, r, k=3, s=1, dtype=4):
    return LayerNode(lid, CONV, {"n": n, "m": m, "r": r, "c": r, "k": k, "s": s}, dtype)


def fc(lid, n, m, dtype=4):
    return LayerNode(lid, FC, {"n": n, "m": m}, dtype)


def lstm(lid, n, h, l=1, dtype=4):
    return LayerNode(lid, LSTM, {"n": n, "h": h, "l": l}, dtype)


# ---------------------------------------------------------------- toy


def toy_chain_system(bw: float = 1.0, m_acc: int = 1000) -> SystemSpec:
    """Two accelerators with fixed per-kind latencies: acc1 prefers Conv, acc2 prefers FC."""
    return SystemSpec(
        [
            AcceleratorSpec("acc1", {CONV, FC}, bw, m_acc, FixedLatencyModel({CONV: 2.0, FC: 3.0})),
            AcceleratorSpec("acc2", {CONV, FC}, bw, m_acc, FixedLatencyModel({CONV: 6.0, FC: 2.0})),
        ],
        "toy-chain",
    )


def toy_chain() -> ModelGraph:
    """A (Conv) -> B (FC), sized so each activation leg costs 2 s at 1 B/s."""
    a = LayerNode("A", CONV, {"n": 2, "m": 1, "r": 1, "c": 1, "k": 1, "s": 1}, 1)
    b = fc("B", 2, 1, dtype=1)
    return ModelGraph("toy-chain", [a, b], [("A", "B")])


def chain3() -> ModelGraph:
    """A (Conv) -> B (FC) -> C (FC), same per-layer sizes as the two-layer chain."""
    a = LayerNode("A", CONV, {"n": 2, "m": 1, "r": 1, "c": 1, "k": 1, "s": 1}, 1)
    return ModelGraph("chain3", [a, fc("B", 2, 2, dtype=1), fc("C", 2, 1, dtype=1)], [("A", "B"), ("B", "C")])


def fig2_toy() -> ModelGraph:
    """Six layers: a stem, two 2-layer branches (Conv and FC flavoured), a join."""
    layers = [
        conv("L1", 4, 2, 4, k=1),
        conv("L2", 4, 4, 4, k=1),
        fc("L3", 64, 16),
        fc("L4", 64, 16),
        fc("L5", 16, 16),
        fc("L6", 32, 4),
    ]
    edges = [("L1", "L2"), ("L1", "L4"), ("L2", "L3"), ("L4", "L5"), ("L3", "L6"), ("L5", "L6")]
    return ModelGraph("fig2-toy", layers, edges)


def fig2_system(bw: float = 64.0, m_acc: int = 64 * 1024) -> SystemSpec:
    """Conv-leaning and FC-leaning accelerators; DRAM holds every weight, so activations decide."""
    return SystemSpec(
        [
            AcceleratorSpec("conv_acc", {CONV, FC}, bw, m_acc, FixedLatencyModel({CONV: 2.0, FC: 3.0})),
            AcceleratorSpec("fc_acc", {CONV, FC}, bw, m_acc, FixedLatencyModel({CONV: 9.0, FC: 2.0})),
        ],
        "fig2-system",
    )


# ---------------------------------------------------------------- MMMT

DTYPE = 2  # 16-bit fixed point throughout the synthetic models


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.layers: list[LayerNode] = []
        self.edges: list[tuple[str, str]] = []

    def add(self, layer: LayerNode, preds=()) -> str:
        self.layers.append(layer)
        self.edges.extend((p, layer.id) for p in preds if p)
        return layer.id

    def chain(self, layers, pred=None) -> str:
        for layer in layers:
            pred = self.add(layer, [pred])
        return pred

    def graph(self) -> ModelGraph:
        return ModelGraph(self.name, self.layers, self.edges)


def _resnet(b: _Builder, tag: str, stages, stem: int, r: int, bottleneck: bool, src=None) -> list[str]:
    """ResNet-style backbone; returns the output id of every stage.

    ``stages`` is ((width, blocks), ...); spatial size halves at each stage
    after the first.  Residual shortcuts become skip edges.
    """
    prev = b.add(conv(f"{tag}.stem", stem, 3, r, k=7, s=2, dtype=DTYPE), [src])
    ch, outs = stem, []
    for si, (w, nb) in enumerate(stages):
        if si:
            r //= 2
        for bi in range(nb):
            s = 2 if si and bi == 0 else 1
            base = f"{tag}.s{si + 1}b{bi + 1}"
            if bottleneck:
                mid = w // 4
                x = b.add(conv(base + "a", mid, ch, r, k=1, s=s, dtype=DTYPE), [prev])
                x = b.add(conv(base + "b", mid, mid, r, k=3, dtype=DTYPE), [x])
                x = b.add(conv(base + "c", w, mid, r, k=1, dtype=DTYPE), [x])
            else:
                x = b.add(conv(base + "a", w, ch, r, k=3, s=s, dtype=DTYPE), [prev])
                x = b.add(conv(base + "b", w, w, r, k=3, dtype=DTYPE), [x])
            if bi and nb > 1:
                b.edges.append((prev, x))  # identity shortcut
            prev, ch = x, w
        outs.append(prev)
    return outs


def _vgg(b: _Builder, tag: str, stages, r: int, fcs, src=None) -> list[str]:
    """VGG-style backbone: ((width, convs), ...) then a dense stack; returns stage outputs."""
    prev, ch, outs = src, 3, []
    for si, (w, nc) in enumerate(stages):
        for ci in range(nc):
            prev = b.add(conv(f"{tag}.c{si + 1}{ci + 1}", w, ch, r, dtype=DTYPE), [prev])
            ch = w
        outs.append(prev)
        r //= 2
    n = ch * r * r
    for i, m in enumerate(fcs):
        prev = b.add(fc(f"{tag}.fc{i + 1}", n, m, dtype=DTYPE), [prev])
        n = m
    outs.append(prev)
    return outs


def _head(b: _Builder, tag: str, inputs, dims) -> str:
    """Fusion head: the first dense layer joins every input."""
    prev = None
    for i, (n, m) in enumerate(dims):
        prev = b.add(fc(f"{tag}.fc{i + 1}", n, m, dtype=DTYPE), inputs if i == 0 else [prev])
    return prev


def vlocnet_like() -> ModelGraph:
    """Three bottleneck ResNet backbones (14 blocks each) with stage-level cross-talk; 141 layers."""
    b = _Builder("vlocnet-like")
    stages = ((256, 3), (512, 4), (1024, 5), (2048, 2))
    nets = [_resnet(b, t, stages, 64, 112, True) for t in ("loc", "odo", "seg")]
    for a, c in (("loc", "odo"), ("odo", "seg")):
        for si in (1, 2):
            b.edges.append((f"{a}.s{si}b{stages[si - 1][1]}c", f"{c}.s{si + 1}b1a"))
    ends = []
    for t, outs in zip(("loc", "odo", "seg"), nets):
        ends.append(b.chain([fc(f"{t}.fc1", 2048, 4096, DTYPE), fc(f"{t}.fc2", 4096, 2048, DTYPE)], outs[-1]))
    _head(b, "head", ends, ((6144, 4096), (4096, 2048), (2048, 1024), (1024, 256), (256, 64), (64, 7)))
    return b.graph()


def casia_surf_like() -> ModelGraph:
    """Three slim basic-block ResNets (RGB, depth, IR) fused mid-network, then a shared tail."""
    b = _Builder("casia-surf-like")
    stages = ((64, 2), (128, 2), (256, 2))
    nets = [_resnet(b, t, stages, 64, 56, False) for t in ("rgb", "depth", "ir")]
    x = b.add(conv("fuse.c1", 256, 768, 7, k=1, dtype=DTYPE), [o[-1] for o in nets])
    x = b.chain([conv("fuse.c2", 512, 256, 4, s=2, dtype=DTYPE), conv("fuse.c3", 512, 512, 4, dtype=DTYPE)], x)
    _head(b, "head", [x], ((512 * 16, 256), (256, 2)))
    return b.graph()


def vfs_like() -> ModelGraph:
    """Two VGG-16 style visual streams plus a VD-CNN style text stream, joined by a dense head."""
    b = _Builder("vfs-like")
    vgg = ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3))
    face = _vgg(b, "face", vgg, 224, (4096, 4096))
    scene = _vgg(b, "scene", vgg, 224, (4096, 4096))
    b.edges.append((face[2], "scene.c41"))
    text = _vgg(b, "text", ((64, 2), (128, 2), (256, 2), (512, 2)), 32, (2048,))
    _head(b, "head", [face[-1], scene[-1], text[-1]], ((10240, 2048), (2048, 3)))
    return b.graph()


def facebag_like() -> ModelGraph:
    """Three basic-block ResNet streams with a bag-of-features fusion stage."""
    b = _Builder("facebag-like")
    stages = ((64, 2), (128, 2), (256, 2))
    nets = [_resnet(b, t, stages, 64, 112, False) for t in ("rgb", "depth", "ir")]
    for a, c in (("rgb", "depth"), ("depth", "ir")):
        b.edges.append((f"{a}.s1b2b", f"{c}.s2b1a"))
    x = b.add(conv("bag.c1", 512, 768, 14, k=1, dtype=DTYPE), [o[-1] for o in nets])
    x = b.chain([conv("bag.c2", 512, 512, 7, s=2, dtype=DTYPE), conv("bag.c3", 512, 512, 7, dtype=DTYPE)], x)
    _head(b, "head", [x], ((512 * 49, 512), (512, 2)))
    return b.graph()


def cnn_lstm_like() -> ModelGraph:
    """Frame ConvNet feeding an LSTM, a sensor LSTM stream, an audio ConvNet, and a joint classifier."""
    b = _Builder("cnn-lstm-like")
    x = b.chain([conv("vid.c1", 128, 3, 28, k=5, s=2, dtype=DTYPE), conv("vid.c2", 256, 128, 14, s=2, dtype=DTYPE),
                 conv("vid.c3", 512, 256, 7, s=2, dtype=DTYPE), conv("vid.c4", 512, 512, 7, dtype=DTYPE),
                 conv("vid.c5", 512, 512, 4, s=2, dtype=DTYPE), conv("vid.c6", 512, 512, 4, dtype=DTYPE)])
    x = b.chain([fc("vid.fc", 512 * 16, 512, DTYPE), lstm("vid.lstm", 512, 512, 2, DTYPE)], x)
    y = b.chain([fc("imu.emb", 128, 256, DTYPE), lstm("imu.lstm1", 256, 512, 1, DTYPE),
                 lstm("imu.lstm2", 512, 512, 1, DTYPE)])
    z = b.chain([conv("aud.c1", 128, 1, 16, dtype=DTYPE), conv("aud.c2", 256, 128, 8, s=2, dtype=DTYPE),
                 conv("aud.c3", 512, 256, 4, s=2, dtype=DTYPE), fc("aud.fc", 512 * 16, 512, DTYPE)])
    b.edges.append(("vid.c4", "aud.c3"))
    _head(b, "head", [x, y, z], ((1536, 1024), (1024, 256), (256, 64), (64, 12)))
    return b.graph()


def mocap_like() -> ModelGraph:
    """Speech ConvNet, motion-capture LSTM and text LSTM streams with a dense fusion head."""
    b = _Builder("mocap-like")
    sp = b.chain([conv("speech.c1", 128, 1, 16, k=5, s=2, dtype=DTYPE), conv("speech.c2", 256, 128, 8, s=2, dtype=DTYPE),
                  conv("speech.c3", 512, 256, 4, s=2, dtype=DTYPE), conv("speech.c4", 512, 512, 4, dtype=DTYPE),
                  fc("speech.fc", 512 * 16, 256, DTYPE)])
    mo = b.chain([fc("mocap.emb", 189, 256, DTYPE), lstm("mocap.lstm1", 256, 256, 1, DTYPE),
                  lstm("mocap.lstm2", 256, 256, 1, DTYPE), fc("mocap.fc", 256, 256, DTYPE)])
    tx = b.chain([fc("text.emb", 300, 256, DTYPE), lstm("text.lstm1", 256, 256, 2, DTYPE),
                  lstm("text.lstm2", 256, 256, 1, DTYPE), fc("text.fc", 256, 256, DTYPE)])
    b.edges.append(("speech.c3", "mocap.fc"))
    _head(b, "head", [sp, mo, tx], ((768, 1024), (1024, 256), (256, 4)))
    return b.graph()


MMMT_FIXTURES = {
    "vlocnet-like": vlocnet_like,
    "casia-surf-like": casia_surf_like,
    "vfs-like": vfs_like,
    "facebag-like": facebag_like,
    "cnn-lstm-like": cnn_lstm_like,
    "mocap-like": mocap_like,
}

# approximate parameter counts the fixtures are sized against (elements, not bytes)
MMMT_TARGET_PARAMS = {
    "vlocnet-like": 192e6,
    "casia-surf-like": 13.2e6,
    "vfs-like": 365e6,
    "facebag-like": 25e6,
    "cnn-lstm-like": 16e6,
    "mocap-like": 8e6,
}


def param_count(g: ModelGraph) -> int:
    return sum(layer.weight_bytes // layer.dtype_bytes for layer in g.nodes.values())


def mmmt_system(bw: float = BANDWIDTHS["Low-"]) -> SystemSpec:
    """Twelve synthetic accelerators: seven Conv-only, two general Conv/FC/LSTM, one LSTM/FC, two LSTM-only."""
    rows = [
        # id, kinds, DRAM MB, PEs, clock, efficiency
        ("conv-a", {CONV: 0.85}, 8192, 1024, 200e6),
        ("conv-b", {CONV: 0.80}, 1024, 512, 150e6),
        ("conv-c", {CONV: 0.90}, 4096, 2048, 200e6),
        ("conv-d", {CONV: 0.70}, 1024, 512, 200e6),
        ("conv-e", {CONV: 0.75}, 8192, 1024, 150e6),
        ("conv-f", {CONV: 0.95}, 2048, 1024, 200e6),
        ("conv-g", {CONV: 0.85}, 512, 512, 150e6),
        ("gen-a", {CONV: 0.50, FC: 0.60, LSTM: 0.30}, 512, 256, 150e6),
        ("gen-b", {CONV: 0.55, FC: 0.50, LSTM: 0.40}, 8192, 512, 200e6),
        ("lstm-fc", {FC: 0.70, LSTM: 0.80}, 8192, 1024, 200e6),
        ("lstm-a", {LSTM: 0.85}, 512, 256, 100e6),
        ("lstm-b", {LSTM: 0.90}, 8192, 512, 200e6),
    ]
    accs = [
        AcceleratorSpec(aid, set(eff), bw, mb * MB, RooflineModel(pe, clk, eff))
        for aid, eff, mb, pe, clk in rows
    ]
    return SystemSpec(accs, "mmmt-12")


# ---------------------------------------------------------------- random


def random_dag(n: int, seed: int = 0, name: str | None = None) -> ModelGraph:
    """Network-like random DAG: mostly chains with occasional branches, joins and new entries."""
    rng = random.Random(seed)
    width = len(str(max(n - 1, 1)))
    ids = [f"L{i:0{width}d}" for i in range(n)]
    layers, edges = [], []
    for i, lid in enumerate(ids):
        roll = rng.random()
        if roll < 0.6:
            ch = [16, 32, 64, 128, 256]
            layers.append(conv(lid, rng.choice(ch), rng.choice(ch), rng.choice([7, 14, 28]), rng.choice([1, 3]), rng.choice([1, 2])))
        elif roll < 0.85:
            layers.append(fc(lid, 64 * rng.randint(1, 32), 64 * rng.randint(1, 32)))
        else:
            layers.append(lstm(lid, 64 * rng.randint(1, 8), 64 * rng.randint(1, 8), rng.randint(1, 2)))
        if i == 0 or rng.random() < 0.1:
            continue
        preds = {ids[max(0, i - 1 - int(rng.expovariate(0.7)))]}
        if rng.random() < 0.3:
            preds.add(ids[rng.randrange(i)])
        edges.extend((p, lid) for p in sorted(preds))
    return ModelGraph(name or f"random-{n}-{seed}", layers, edges)


# local DRAM choices, MB: "tight" makes the knapsack bind often, "board" spans 512 MB - 8 GB FPGA boards
DRAM_PROFILES = {
    "tight": (0, 1, 4, 16, 64, 512),
    "board": (512, 1024, 2048, 4096, 8192),
}


def random_system(k: int, seed: int = 0, bw: float | None = None, dram: str = "tight") -> SystemSpec:
    """``k`` roofline accelerators; every layer kind is supported somewhere."""
    rng = random.Random(seed)
    kinds = [CONV, FC, LSTM]
    support = [set() for _ in range(k)]
    for kind in kinds:
        support[rng.randrange(k)].add(kind)
    for s in support:
        for kind in kinds:
            if rng.random() < 0.4:
                s.add(kind)
        if not s:
            s.add(rng.choice(kinds))
    link = bw if bw is not None else rng.choice(list(BANDWIDTHS.values()))
    accs = []
    for i, s in enumerate(support):
        eff = {kind: round(rng.uniform(0.1, 1.0), 3) for kind in s}
        accs.append(
            AcceleratorSpec(
                f"acc{i:02d}",
                s,
                link,
                rng.choice(DRAM_PROFILES[dram]) * MB,
                RooflineModel(rng.choice([64, 128, 256, 512, 1024]), rng.choice([100e6, 150e6, 200e6]), eff),
            )
        )
    return SystemSpec(accs, f"random-{k}-{seed}")


BUILTIN_MODELS = {"toy-chain": toy_chain, "chain3": chain3, "fig2-toy": fig2_toy, **MMMT_FIXTURES}
BUILTIN_SYSTEMS = {"toy-chain": toy_chain_system, "fig2": fig2_system, "mmmt-12": mmmt_system}

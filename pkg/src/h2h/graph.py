"""Layer-dependency graph of a heterogeneous (multi-modality multi-task) model.

A model is a DAG whose vertices are layers (Conv, FC or LSTM) and whose edges
are data dependencies.  Only shapes and byte volumes are tracked; there are no
inference semantics.
"""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping


class ModelError(ValueError):
    """The model document or graph is malformed."""


class CycleError(ModelError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("cycle detected: " + " -> ".join(cycle + cycle[:1]))


class DanglingEdgeError(ModelError):
    pass


class LayerKind(str, enum.Enum):
    CONV = "Conv"
    FC = "FC"
    LSTM = "LSTM"

    def __str__(self) -> str:
        return self.value


PARAM_FIELDS: dict[LayerKind, tuple[str, ...]] = {
    LayerKind.CONV: ("n", "m", "r", "c", "k", "s"),
    LayerKind.FC: ("n", "m"),
    LayerKind.LSTM: ("n", "h", "l"),
}


def lstm_gate_elements(n: int, h: int, l: int) -> int:
    # 4 gates x (input weights + recurrent weights + 2 biases); stacked layers take h as input.
    first = 4 * (n * h + h * h + 2 * h)
    rest = 4 * (h * h + h * h + 2 * h)
    return first + (l - 1) * rest


@dataclass(frozen=True)
class LayerNode:
    id: str
    kind: LayerKind
    params: Mapping[str, int]
    dtype_bytes: int = 4
    weight_bytes: int = field(init=False)
    ifm_bytes: int = field(init=False)
    ofm_bytes: int = field(init=False)

    def __post_init__(self):
        kind = LayerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = _check_params(self.id, kind, self.params)
        object.__setattr__(self, "params", params)
        if not isinstance(self.dtype_bytes, int) or isinstance(self.dtype_bytes, bool) or self.dtype_bytes < 1:
            raise ModelError(f"layer {self.id!r}: dtype_bytes must be a positive integer")
        d = self.dtype_bytes
        p = params
        if kind is LayerKind.CONV:
            weights = p["n"] * p["m"] * p["k"] ** 2
            ofm = p["n"] * p["r"] * p["c"]
            ifm = p["m"] * ((p["r"] - 1) * p["s"] + p["k"]) * ((p["c"] - 1) * p["s"] + p["k"])
        elif kind is LayerKind.FC:
            weights = p["n"] * p["m"]
            ofm = p["m"]
            ifm = p["n"]
        else:
            weights = lstm_gate_elements(p["n"], p["h"], p["l"])
            ofm = p["h"]
            ifm = p["n"]
        object.__setattr__(self, "weight_bytes", d * weights)
        object.__setattr__(self, "ifm_bytes", d * ifm)
        object.__setattr__(self, "ofm_bytes", d * ofm)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "params": dict(self.params),
            "dtype_bytes": self.dtype_bytes,
        }


def _check_params(layer_id: str, kind: LayerKind, params: Mapping[str, Any]) -> dict[str, int]:
    if not isinstance(params, Mapping):
        raise ModelError(f"layer {layer_id!r}: params must be a mapping")
    expected = PARAM_FIELDS[kind]
    missing = [f for f in expected if f not in params]
    if missing:
        raise ModelError(f"layer {layer_id!r}: params missing field(s) {missing} for {kind}")
    extra = sorted(set(params) - set(expected))
    if extra:
        raise ModelError(f"layer {layer_id!r}: unexpected params field(s) {extra} for {kind}")
    out = {}
    for f in expected:
        v = params[f]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ModelError(f"layer {layer_id!r}: params.{f} must be a positive integer, got {v!r}")
        out[f] = v
    return out


class ModelGraph:
    """Immutable layer DAG.  Construction validates edges and acyclicity."""

    def __init__(self, name: str, layers: Iterable[LayerNode], edges: Iterable[tuple[str, str]]):
        self.name = name
        self.nodes: dict[str, LayerNode] = {}
        for layer in layers:
            if layer.id in self.nodes:
                raise ModelError(f"duplicate layer id {layer.id!r}")
            self.nodes[layer.id] = layer
        if not self.nodes:
            raise ModelError("model has no layers")
        preds: dict[str, list[str]] = {v: [] for v in self.nodes}
        succs: dict[str, list[str]] = {v: [] for v in self.nodes}
        seen = set()
        self.edges: list[tuple[str, str]] = []
        for u, v in edges:
            for end in (u, v):
                if end not in self.nodes:
                    raise DanglingEdgeError(f"edge ({u!r}, {v!r}) references unknown layer {end!r}")
            if u == v:
                raise ModelError(f"self-loop on layer {u!r}")
            if (u, v) in seen:
                raise ModelError(f"duplicate edge ({u!r}, {v!r})")
            seen.add((u, v))
            self.edges.append((u, v))
            preds[v].append(u)
            succs[u].append(v)
        self.preds = {v: tuple(sorted(p)) for v, p in preds.items()}
        self.succs = {v: tuple(sorted(s)) for v, s in succs.items()}
        self.entries = tuple(sorted(v for v in self.nodes if not self.preds[v]))
        self.exits = tuple(sorted(v for v in self.nodes if not self.succs[v]))
        self._topo = self._kahn()
        self._topo_index = {v: i for i, v in enumerate(self._topo)}
        self._levels = self._frontier_levels()
        self._commit_order = tuple(v for level in self._levels for v in level)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, layer_id: str) -> bool:
        return layer_id in self.nodes

    def __repr__(self) -> str:
        return f"ModelGraph({self.name!r}, {len(self.nodes)} layers, {len(self.edges)} edges)"

    def _kahn(self) -> tuple[str, ...]:
        indeg = {v: len(p) for v, p in self.preds.items()}
        heap = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for v in self.succs[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(heap, v)
        if len(order) != len(self.nodes):
            raise CycleError(self._find_cycle({v for v, d in indeg.items() if d > 0}))
        return tuple(order)

    def _find_cycle(self, remaining: set[str]) -> list[str]:
        # Every node left after Kahn has a predecessor that is also left; walk back until repeat.
        node = min(remaining)
        path: list[str] = []
        pos: dict[str, int] = {}
        while node not in pos:
            pos[node] = len(path)
            path.append(node)
            node = min(p for p in self.preds[node] if p in remaining)
        cycle = path[pos[node]:]
        cycle.reverse()
        return cycle

    def _frontier_levels(self) -> tuple[tuple[str, ...], ...]:
        done: set[str] = set()
        levels = []
        while len(done) < len(self.nodes):
            level = tuple(sorted(frontier(self, done)))
            levels.append(level)
            done.update(level)
        return tuple(levels)

    @property
    def topo_index(self) -> Mapping[str, int]:
        return self._topo_index

    @property
    def levels(self) -> tuple[tuple[str, ...], ...]:
        """Successive frontier groups starting from the empty set."""
        return self._levels

    @property
    def commit_order(self) -> tuple[str, ...]:
        """Frontier groups concatenated, each sorted by id: the order layers get committed in."""
        return self._commit_order

    def subgraph(self, keep: Iterable[str], name: str | None = None) -> "ModelGraph":
        keep = set(keep)
        return ModelGraph(
            name or self.name,
            [self.nodes[v] for v in self.nodes if v in keep],
            [(u, v) for u, v in self.edges if u in keep and v in keep],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "layers": [layer.to_dict() for layer in self.nodes.values()],
            "edges": [[u, v] for u, v in self.edges],
        }


def frontier(g: ModelGraph, done: Iterable[str]) -> set[str]:
    """Layers not in ``done`` whose predecessors are all in ``done``."""
    done = set(done)
    unknown = done - g.nodes.keys()
    if unknown:
        raise ModelError(f"unknown layer id(s) in done set: {sorted(unknown)}")
    for v in done:
        missing = [p for p in g.preds[v] if p not in done]
        if missing:
            raise ModelError(f"done set is not dependency-closed: {v!r} needs {missing}")
    return {v for v in g.nodes if v not in done and all(p in done for p in g.preds[v])}


def topo_order(g: ModelGraph) -> list[str]:
    """Kahn's algorithm, always taking the smallest available id."""
    return list(g._topo)


def parse_model(document: str | Mapping[str, Any]) -> ModelGraph:
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model document is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise ModelError("model document must be an object")
    for key in ("name", "layers", "edges"):
        if key not in document:
            raise ModelError(f"model document missing field {key!r}")
    if not isinstance(document["name"], str):
        raise ModelError("field 'name' must be a string")
    if not isinstance(document["layers"], list):
        raise ModelError("field 'layers' must be a list")
    if not isinstance(document["edges"], list):
        raise ModelError("field 'edges' must be a list")
    layers = []
    for i, entry in enumerate(document["layers"]):
        if not isinstance(entry, Mapping):
            raise ModelError(f"layers[{i}] must be an object")
        for key in ("id", "kind", "params"):
            if key not in entry:
                raise ModelError(f"layers[{i}] missing field {key!r}")
        if not isinstance(entry["id"], str) or not entry["id"]:
            raise ModelError(f"layers[{i}].id must be a non-empty string")
        try:
            kind = LayerKind(entry["kind"])
        except ValueError:
            raise ModelError(
                f"layers[{i}].kind must be one of {[k.value for k in LayerKind]}, got {entry['kind']!r}"
            ) from None
        layers.append(LayerNode(entry["id"], kind, entry["params"], entry.get("dtype_bytes", 4)))
    edges = []
    for i, e in enumerate(document["edges"]):
        if not (isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(x, str) for x in e)):
            raise ModelError(f"edges[{i}] must be a [src, dst] pair of layer ids")
        edges.append((e[0], e[1]))
    return ModelGraph(document["name"], layers, edges)


def load_model(path) -> ModelGraph:
    with open(path) as f:
        return parse_model(f.read())


def dump_model(g: ModelGraph, path) -> None:
    with open(path, "w") as f:
        json.dump(g.to_dict(), f, indent=2)
        f.write("\n")

"""Heterogeneous multi-accelerator system and per-layer cost components.

Each accelerator talks to the host over a private link of ``bw_acc`` bytes/s
and owns ``m_acc`` bytes of local DRAM.  Compute latency comes from a
pluggable :class:`PerformanceModel`; transfers are ``bytes / bw_acc``.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Mapping, NamedTuple

from .graph import LayerKind, LayerNode


class SystemSpecError(ValueError):
    """The system document is malformed."""


class UnsupportedLayer(Exception):
    def __init__(self, acc_id: str, layer_id: str, kind: LayerKind | str):
        self.acc_id = acc_id
        self.layer_id = layer_id
        self.kind = kind
        where = "any accelerator" if acc_id == "*" else f"accelerator {acc_id!r}"
        super().__init__(f"layer {layer_id!r} ({getattr(kind, 'value', kind)}) is not supported by {where}")


def mac_count(kind: LayerKind | str, params: Mapping[str, int]) -> int:
    kind = LayerKind(kind)
    p = params
    if kind is LayerKind.CONV:
        return p["n"] * p["m"] * p["r"] * p["c"] * p["k"] ** 2
    if kind is LayerKind.FC:
        return p["n"] * p["m"]
    # gate matmuls only; the 2h bias terms of the weight count are adds, not MACs
    n, h, l = p["n"], p["h"], p["l"]
    return 4 * (n * h + h * h) + (l - 1) * 4 * (h * h + h * h)


class PerformanceModel(ABC):
    """Analytical latency model of one accelerator design.

    Implementations must be pure: identical arguments give identical results.
    ``compute_latency`` returns ``None`` for layer kinds the design cannot run.
    """

    type_name: str = ""

    @abstractmethod
    def compute_latency(self, kind: LayerKind, params: Mapping[str, int]) -> float | None: ...

    def compute_energy(self, kind: LayerKind, params: Mapping[str, int]) -> float | None:
        """Joules for one execution, or None to fall back to MACs x energy_per_mac."""
        return None

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...


PERF_MODELS: dict[str, Callable[[Mapping[str, Any]], PerformanceModel]] = {}


def register_perf_model(type_name: str):
    """Class decorator making a model loadable from system files by ``type``."""

    def deco(cls):
        cls.type_name = type_name
        PERF_MODELS[type_name] = cls.from_dict
        return cls

    return deco


def _kind_map(raw: Mapping[str, Any], what: str) -> dict[LayerKind, float]:
    out = {}
    for k, v in raw.items():
        try:
            kind = LayerKind(k)
        except ValueError:
            raise SystemSpecError(f"{what}: unknown layer kind {k!r}") from None
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SystemSpecError(f"{what}.{k} must be a number")
        out[kind] = float(v)
    return out


@register_perf_model("roofline")
@dataclass(frozen=True)
class RooflineModel(PerformanceModel):
    """Latency = MACs / (pe_count * freq_hz * efficiency[kind])."""

    pe_count: int
    freq_hz: float
    efficiency: Mapping[LayerKind, float]

    def __post_init__(self):
        if self.pe_count <= 0 or self.freq_hz <= 0:
            raise SystemSpecError("roofline: pe_count and freq_hz must be positive")
        eff = {LayerKind(k): float(v) for k, v in self.efficiency.items()}
        for k, v in eff.items():
            if not 0 < v <= 1:
                raise SystemSpecError(f"roofline: efficiency[{k}] must be in (0, 1], got {v}")
        object.__setattr__(self, "efficiency", eff)

    def compute_latency(self, kind, params):
        eff = self.efficiency.get(LayerKind(kind))
        if eff is None:
            return None
        return mac_count(kind, params) / (self.pe_count * self.freq_hz * eff)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(int(d["pe_count"]), float(d["freq_hz"]), _kind_map(d["efficiency"], "efficiency"))
        except KeyError as exc:
            raise SystemSpecError(f"roofline perf_model missing field {exc.args[0]!r}") from None

    def to_dict(self):
        return {
            "type": self.type_name,
            "pe_count": self.pe_count,
            "freq_hz": self.freq_hz,
            "efficiency": {k.value: v for k, v in self.efficiency.items()},
        }


@register_perf_model("fixed")
@dataclass(frozen=True)
class FixedLatencyModel(PerformanceModel):
    """Constant seconds per layer kind.  Handy for hand-checked toy systems."""

    latency: Mapping[LayerKind, float]

    def __post_init__(self):
        lat = {LayerKind(k): float(v) for k, v in self.latency.items()}
        if any(v <= 0 for v in lat.values()):
            raise SystemSpecError("fixed: latencies must be positive")
        object.__setattr__(self, "latency", lat)

    def compute_latency(self, kind, params):
        return self.latency.get(LayerKind(kind))

    @classmethod
    def from_dict(cls, d):
        if "latency" not in d:
            raise SystemSpecError("fixed perf_model missing field 'latency'")
        return cls(_kind_map(d["latency"], "latency"))

    def to_dict(self):
        return {"type": self.type_name, "latency": {k.value: v for k, v in self.latency.items()}}


@dataclass(frozen=True, eq=False)
class AcceleratorSpec:
    id: str
    supported_kinds: frozenset[LayerKind]
    bw_acc: float
    m_acc: int
    perf_model: PerformanceModel
    energy_per_mac: float = 1e-12
    energy_per_byte: float = 1e-10

    def __post_init__(self):
        kinds = frozenset(LayerKind(k) for k in self.supported_kinds)
        object.__setattr__(self, "supported_kinds", kinds)
        if not kinds:
            raise SystemSpecError(f"accelerator {self.id!r}: supported_kinds is empty")
        if not self.bw_acc > 0:
            raise SystemSpecError(f"accelerator {self.id!r}: bw_acc must be positive")
        if self.m_acc < 0:
            raise SystemSpecError(f"accelerator {self.id!r}: m_acc must be non-negative")
        if self.energy_per_mac < 0 or self.energy_per_byte < 0:
            raise SystemSpecError(f"accelerator {self.id!r}: energy coefficients must be non-negative")

    def supports(self, kind: LayerKind) -> bool:
        return kind in self.supported_kinds

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "supported_kinds": sorted(k.value for k in self.supported_kinds),
            "bw_acc_bytes_per_s": self.bw_acc,
            "m_acc_bytes": self.m_acc,
            "energy_per_mac": self.energy_per_mac,
            "energy_per_byte": self.energy_per_byte,
            "perf_model": self.perf_model.to_dict(),
        }


class SystemSpec:
    """Ordered accelerators; the host and its memory are assumed unbounded."""

    def __init__(self, accelerators: Iterable[AcceleratorSpec], name: str = "system"):
        self.name = name
        self.accelerators = list(accelerators)
        if not self.accelerators:
            raise SystemSpecError("system has no accelerators")
        self.by_id: dict[str, AcceleratorSpec] = {}
        for a in self.accelerators:
            if a.id in self.by_id:
                raise SystemSpecError(f"duplicate accelerator id {a.id!r}")
            self.by_id[a.id] = a
        self.index = {a.id: i for i, a in enumerate(self.accelerators)}

    def __getitem__(self, acc_id: str) -> AcceleratorSpec:
        return self.by_id[acc_id]

    def __len__(self) -> int:
        return len(self.accelerators)

    def __repr__(self) -> str:
        return f"SystemSpec({self.name!r}, {[a.id for a in self.accelerators]})"

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.accelerators]

    def eligible(self, kind: LayerKind) -> list[str]:
        return [a.id for a in self.accelerators if kind in a.supported_kinds]

    def with_bandwidth(self, bw: float | Mapping[str, float]) -> "SystemSpec":
        """Copy with ``bw_acc`` overridden, uniformly or per accelerator id."""
        if isinstance(bw, Mapping):
            unknown = set(bw) - set(self.by_id)
            if unknown:
                raise SystemSpecError(f"bandwidth override for unknown accelerator(s) {sorted(unknown)}")
            accs = [replace(a, bw_acc=float(bw.get(a.id, a.bw_acc))) for a in self.accelerators]
        else:
            accs = [replace(a, bw_acc=float(bw)) for a in self.accelerators]
        return SystemSpec(accs, self.name)

    def check_supports(self, g) -> None:
        """Raise UnsupportedLayer for the first layer no accelerator can run."""
        for lid in g.commit_order:
            layer = g.nodes[lid]
            if not self.eligible(layer.kind):
                raise UnsupportedLayer("*", lid, layer.kind)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "accelerators": [a.to_dict() for a in self.accelerators]}


def compute_latency(acc: AcceleratorSpec, layer: LayerNode) -> float:
    if layer.kind not in acc.supported_kinds:
        raise UnsupportedLayer(acc.id, layer.id, layer.kind)
    t = acc.perf_model.compute_latency(layer.kind, layer.params)
    if t is None:
        raise UnsupportedLayer(acc.id, layer.id, layer.kind)
    if not t > 0:
        raise ValueError(f"performance model of {acc.id!r} returned non-positive latency {t} for {layer.id!r}")
    return t


def compute_energy(acc: AcceleratorSpec, layer: LayerNode) -> float:
    e = acc.perf_model.compute_energy(layer.kind, layer.params)
    if e is None:
        e = mac_count(layer.kind, layer.params) * acc.energy_per_mac
    return e


def transfer_time(nbytes: float, bw: float) -> float:
    return nbytes / bw


class CostBreakdown(NamedTuple):
    weight_xfer: float
    input_xfer: float
    compute: float
    output_xfer: float

    @property
    def transfer(self) -> float:
        return self.weight_xfer + self.input_xfer + self.output_xfer

    @property
    def total(self) -> float:
        # fixed summation order so every code path produces identical bits
        return self.weight_xfer + self.input_xfer + self.compute + self.output_xfer

    def to_dict(self) -> dict[str, float]:
        return self._asdict()


def layer_cost(
    acc: AcceleratorSpec,
    layer: LayerNode,
    weight_pinned: bool = False,
    input_fused_bytes: float = 0,
    output_fused_bytes: float = 0,
) -> CostBreakdown:
    """Serialized cost of running ``layer`` on ``acc`` (transfers never overlap compute)."""
    if not 0 <= input_fused_bytes <= layer.ifm_bytes:
        raise ValueError(f"input_fused_bytes {input_fused_bytes} outside [0, {layer.ifm_bytes}]")
    if not 0 <= output_fused_bytes <= layer.ofm_bytes:
        raise ValueError(f"output_fused_bytes {output_fused_bytes} outside [0, {layer.ofm_bytes}]")
    bw = acc.bw_acc
    return CostBreakdown(
        0.0 if weight_pinned else transfer_time(layer.weight_bytes, bw),
        transfer_time(layer.ifm_bytes - input_fused_bytes, bw),
        compute_latency(acc, layer),
        transfer_time(layer.ofm_bytes - output_fused_bytes, bw),
    )


def _num(d: Mapping[str, Any], key: str, where: str) -> float:
    if key not in d:
        raise SystemSpecError(f"{where} missing field {key!r}")
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SystemSpecError(f"{where}.{key} must be a number, got {v!r}")
    return v


def parse_system(document: str | Mapping[str, Any]) -> SystemSpec:
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SystemSpecError(f"system document is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping) or not isinstance(document.get("accelerators"), list):
        raise SystemSpecError("system document must be an object with an 'accelerators' list")
    accs = []
    for i, a in enumerate(document["accelerators"]):
        where = f"accelerators[{i}]"
        if not isinstance(a, Mapping):
            raise SystemSpecError(f"{where} must be an object")
        if not isinstance(a.get("id"), str) or not a["id"]:
            raise SystemSpecError(f"{where}.id must be a non-empty string")
        kinds = a.get("supported_kinds")
        if not isinstance(kinds, list):
            raise SystemSpecError(f"{where}.supported_kinds must be a list")
        try:
            kinds = frozenset(LayerKind(k) for k in kinds)
        except ValueError:
            raise SystemSpecError(f"{where}.supported_kinds has an unknown kind: {a['supported_kinds']}") from None
        pm = a.get("perf_model")
        if not isinstance(pm, Mapping) or "type" not in pm:
            raise SystemSpecError(f"{where}.perf_model must be an object with a 'type'")
        factory = PERF_MODELS.get(pm["type"])
        if factory is None:
            raise SystemSpecError(f"{where}.perf_model.type {pm['type']!r} is not registered ({sorted(PERF_MODELS)})")
        m_acc = _num(a, "m_acc_bytes", where)
        if m_acc != int(m_acc):
            raise SystemSpecError(f"{where}.m_acc_bytes must be an integer")
        accs.append(
            AcceleratorSpec(
                id=a["id"],
                supported_kinds=kinds,
                bw_acc=float(_num(a, "bw_acc_bytes_per_s", where)),
                m_acc=int(m_acc),
                perf_model=factory(pm),
                energy_per_mac=float(a.get("energy_per_mac", 1e-12)),
                energy_per_byte=float(a.get("energy_per_byte", 1e-10)),
            )
        )
    return SystemSpec(accs, document.get("name", "system"))


def load_system(path) -> SystemSpec:
    with open(path) as f:
        return parse_system(f.read())


def dump_system(sys: SystemSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(sys.to_dict(), f, indent=2)
        f.write("\n")

"""Map heterogeneous DNN models onto heterogeneous multi-accelerator systems.

The mapper runs four passes: computation-prioritized placement, weight
locality (DRAM pinning), activation fusion, and communication-aware
remapping.  Every pass is scored with a list scheduler over a simple
cost model.
"""

from .graph import CycleError, LayerKind, LayerNode, ModelError, ModelGraph, load_model, parse_model, topo_order
from .knapsack import KnapsackItem, knapsack_solver
from .mapper import H2HResult, remap_incremental, run_baseline, run_h2h
from .oracle import BudgetExceeded, exhaustive_map
from .scheduler import MappingState, Schedule, full_schedule, incremental_reschedule, validate_schedule
from .system import (
    AcceleratorSpec,
    FixedLatencyModel,
    RooflineModel,
    SystemSpec,
    SystemSpecError,
    UnsupportedLayer,
    load_system,
    parse_system,
)

__all__ = [
    "AcceleratorSpec",
    "BudgetExceeded",
    "CycleError",
    "FixedLatencyModel",
    "H2HResult",
    "KnapsackItem",
    "LayerKind",
    "LayerNode",
    "MappingState",
    "ModelError",
    "ModelGraph",
    "RooflineModel",
    "Schedule",
    "SystemSpec",
    "SystemSpecError",
    "UnsupportedLayer",
    "exhaustive_map",
    "full_schedule",
    "incremental_reschedule",
    "knapsack_solver",
    "load_model",
    "load_system",
    "parse_model",
    "parse_system",
    "remap_incremental",
    "run_baseline",
    "run_h2h",
    "topo_order",
    "validate_schedule",
]

__version__ = "0.1.0"

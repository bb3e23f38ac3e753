"""Exact 0/1 knapsack used to choose which layer weights stay in local DRAM."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

# cells of the dense (items x capacity) decision table before switching to the sparse form
DENSE_LIMIT = 20_000_000
_REL_TIE = 1e-12


@dataclass(frozen=True)
class KnapsackItem:
    layer: str
    weight: int
    value: float

    def __post_init__(self):
        if self.weight <= 0 or not self.value > 0:
            raise ValueError(f"knapsack item {self.layer!r} needs positive weight and value")


def knapsack_solver(
    items: Sequence[KnapsackItem],
    capacity: int,
    mandatory: Iterable[str] = (),
) -> set[str]:
    """Value-maximal subset of ``items`` with total weight <= ``capacity``.

    Among value-optimal subsets the one that includes items appearing earlier
    in ``items`` wins, so callers encode their tie-break preference in the
    order.  Items named in ``mandatory`` are taken first; when they alone
    overflow the capacity the lowest-value ones are dropped until they fit.
    """
    if capacity < 0:
        raise ValueError("capacity must be non-negative")
    mandatory = set(mandatory)
    forced = [i for i, it in enumerate(items) if it.layer in mandatory]
    if forced:
        load = sum(items[i].weight for i in forced)
        # evict cheapest first; among equal values the latest in the order goes first
        for i in sorted(forced, key=lambda i: (items[i].value, -i)):
            if load <= capacity:
                break
            forced.remove(i)
            load -= items[i].weight
        capacity -= load
        taken = {items[i].layer for i in forced}
        rest = [it for it in items if it.layer not in mandatory]
    else:
        taken = set()
        rest = list(items)
    if not rest:
        return taken
    picked = _solve(tuple((it.weight, it.value) for it in rest), capacity)
    return taken | {rest[i].layer for i in picked}


@lru_cache(maxsize=4096)
def _solve(items: tuple[tuple[int, float], ...], capacity: int) -> tuple[int, ...]:
    fits = [i for i, (w, _) in enumerate(items) if w <= capacity]
    if sum(items[i][0] for i in fits) <= capacity:
        return tuple(fits)
    weights = [items[i][0] for i in fits]
    values = [items[i][1] for i in fits]
    g = 0
    for w in weights:
        g = math.gcd(g, w)
    scaled = [w // g for w in weights]
    cap = capacity // g
    if len(fits) * (cap + 1) <= DENSE_LIMIT:
        chosen = _dense(scaled, values, cap)
    else:
        chosen = _sparse(scaled, values, cap)
    return tuple(fits[i] for i in chosen)


def _dense(weights: list[int], values: list[float], cap: int) -> list[int]:
    n = len(weights)
    best = np.zeros(cap + 1)
    keep = np.zeros((n, cap + 1), dtype=bool)
    # suffix DP: best holds the optimum over items i.. for every capacity
    for i in range(n - 1, -1, -1):
        w, v = weights[i], values[i]
        take = np.full(cap + 1, -np.inf)
        take[w:] = best[: cap + 1 - w] + v
        keep[i] = take >= best - _REL_TIE * np.abs(best)
        np.maximum(best, take, out=best)
    out, c = [], cap
    for i in range(n):
        if keep[i, c]:
            out.append(i)
            c -= weights[i]
    return out


def _sparse(weights: list[int], values: list[float], cap: int) -> list[int]:
    # Pareto lists (weight ascending, value strictly ascending) for each suffix of the items.
    n = len(weights)
    levels: list[tuple[list[int], list[float]]] = [([], [])] * (n + 1)
    levels[n] = ([0], [0.0])
    for i in range(n - 1, -1, -1):
        ws, vs = levels[i + 1]
        w, v = weights[i], values[i]
        merged = sorted(
            list(zip(ws, vs)) + [(a + w, b + v) for a, b in zip(ws, vs) if a + w <= cap],
            key=lambda t: (t[0], -t[1]),
        )
        nw, nv = [], []
        for a, b in merged:
            if not nv or b > nv[-1]:
                nw.append(a)
                nv.append(b)
        levels[i] = (nw, nv)

    def best_at(level: int, c: int) -> float:
        ws, vs = levels[level]
        return vs[bisect.bisect_right(ws, c) - 1]

    out, c = [], cap
    for i in range(n):
        w = weights[i]
        if w > c:
            continue
        skip = best_at(i + 1, c)
        take = best_at(i + 1, c - w) + values[i]
        if take >= skip - _REL_TIE * abs(skip):
            out.append(i)
            c -= w
    return out


"""h2h command line: map, sweep, compare, oracle, validate, export.

Models and systems are JSON files, or built-in fixtures written as
``builtin:NAME`` (``random:N`` draws a seeded random graph / system).

Exit codes: 0 success, 1 infeasible (unsupported layer, oracle budget,
invalid schedule), 2 I/O or schema error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

from . import fixtures
from .graph import ModelError, ModelGraph, dump_model, load_model
from .mapper import H2HResult, run_h2h
from .oracle import DEFAULT_BUDGET, BudgetExceeded, exhaustive_map
from .scheduler import (
    MappingError,
    MappingState,
    Schedule,
    ScheduleError,
    check_state,
    gantt_to_schedule,
    schedule_to_gantt,
    state_layer_cost,
    validate_schedule,
)
from .system import SystemSpec, SystemSpecError, UnsupportedLayer, dump_system, load_system

log = logging.getLogger("h2h")

REPORT_HEADER = ["step", "sys_latency_s", "sys_energy_j", "comm_s", "compute_s", "compute_share", "relative_latency_pct", "remaps"]
SWEEP_HEADER = ["bandwidth_gbps", "bandwidth_label", "step", "sys_latency_s", "sys_energy_j", "comm_s", "compute_s",
                "relative_latency_pct", "remaps"]
COMPARE_HEADER = ["bandwidth_gbps", "baseline_latency_s", "h2h_latency_s", "latency_reduction_pct",
                  "baseline_energy_j", "h2h_energy_j", "energy_reduction_pct",
                  "baseline_comm_share", "baseline_compute_share", "h2h_comm_share", "h2h_compute_share", "remaps"]


class InputError(Exception):
    """Unreadable or malformed input; exit code 2."""


class Infeasible(Exception):
    """Well-formed input that cannot be processed; exit code 1."""


@dataclass
class SweepConfig:
    bandwidths: list[float] = field(default_factory=lambda: list(fixtures.BANDWIDTHS.values()))

    def __post_init__(self):
        if not self.bandwidths:
            raise InputError("bandwidth list is empty")
        if any(not (b > 0 and math.isfinite(b)) for b in self.bandwidths):
            raise InputError(f"bandwidths must be positive: {self.bandwidths}")


def label_for(bw: float) -> str:
    for name, value in fixtures.BANDWIDTHS.items():
        if math.isclose(bw, value):
            return name
    return ""


def parse_bandwidths(text: str) -> SweepConfig:
    """Comma list of GB/s values or setting names (Low-, Low, Mid-, Mid, High)."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if tok in fixtures.BANDWIDTHS:
            out.append(fixtures.BANDWIDTHS[tok])
            continue
        try:
            out.append(float(tok) * fixtures.GB)
        except ValueError:
            raise InputError(f"bad bandwidth {tok!r}: expected GB/s or one of {', '.join(fixtures.BANDWIDTHS)}") from None
    return SweepConfig(out)


def parse_acc_bandwidths(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        acc, sep, val = item.partition("=")
        try:
            if not sep:
                raise ValueError
            out[acc] = float(val) * fixtures.GB
        except ValueError:
            raise InputError(f"bad --acc-bandwidth {item!r}: expected ACC=GBPS") from None
    return out


def _read(loader, path: str, what: str):
    try:
        return loader(path)
    except FileNotFoundError:
        raise InputError(f"{what} file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read {what} file {path}: {exc.strerror}") from None
    except (ModelError, SystemSpecError, ScheduleError) as exc:
        raise InputError(f"{path}: {exc}") from None


def resolve_model(spec: str, seed: int) -> ModelGraph:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in fixtures.BUILTIN_MODELS:
            raise InputError(f"unknown built-in model {name!r}; choose from {', '.join(fixtures.BUILTIN_MODELS)}")
        return fixtures.BUILTIN_MODELS[name]()
    if spec.startswith("random:"):
        return fixtures.random_dag(_count(spec), seed)
    return _read(load_model, spec, "model")


def resolve_system(spec: str, seed: int) -> SystemSpec:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in fixtures.BUILTIN_SYSTEMS:
            raise InputError(f"unknown built-in system {name!r}; choose from {', '.join(fixtures.BUILTIN_SYSTEMS)}")
        return fixtures.BUILTIN_SYSTEMS[name]()
    if spec.startswith("random:"):
        return fixtures.random_system(_count(spec), seed)
    return _read(load_system, spec, "system")


def _count(spec: str) -> int:
    try:
        n = int(spec.split(":", 1)[1])
    except ValueError:
        n = 0
    if n <= 0:
        raise InputError(f"bad random spec {spec!r}: expected random:N with N > 0")
    return n


def _inputs(args) -> tuple[ModelGraph, SystemSpec]:
    g = resolve_model(args.model, args.seed)
    sys = resolve_system(args.system, args.seed)
    overrides = parse_acc_bandwidths(getattr(args, "acc_bandwidth", None))
    unknown = set(overrides) - set(sys.ids)
    if unknown:
        raise InputError(f"--acc-bandwidth names unknown accelerator(s): {sorted(unknown)}")
    if overrides:
        sys = sys.with_bandwidth(overrides)
    return g, sys


def _checked(g: ModelGraph, step: int, sched: Schedule, m: MappingState) -> Schedule:
    problems = validate_schedule(g, sched, m.fused_edges)
    if problems:
        raise RuntimeError(f"step {step} schedule failed validation: {problems[:3]}")
    return sched


def _run(g: ModelGraph, sys: SystemSpec, steps: int = 4) -> H2HResult:
    res = run_h2h(g, sys, last_step=steps)
    for k, snap in res.steps.items():
        _checked(g, k, snap.schedule, snap.state)
    return res


def _relative(res: H2HResult, step: int) -> float | None:
    if 2 not in res.steps:
        return None
    return 100.0 * res.steps[step].sys_latency / res.steps[2].sys_latency


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _outdir(path: str | None) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def build_report(res: H2HResult) -> dict:
    steps = {}
    for k, snap in sorted(res.steps.items()):
        s = snap.schedule
        steps[str(k)] = {
            "sys_latency": s.sys_latency,
            "sys_energy": s.sys_energy,
            "comm_seconds": s.comm_seconds,
            "compute_seconds": s.compute_seconds,
            "compute_share": s.compute_share,
            "relative_latency_pct": _relative(res, k),
        }
    return {
        "model": res.graph.name,
        "layers": len(res.graph),
        "steps": steps,
        "remaps": len(res.remap_log),
        "passes": res.passes,
        "search_time": res.search_time,
        "remap_log": res.remap_log,
    }


def report_rows(res: H2HResult):
    remaps = len(res.remap_log)
    for k, snap in sorted(res.steps.items()):
        s = snap.schedule
        yield [k, s.sys_latency, s.sys_energy, s.comm_seconds, s.compute_seconds, s.compute_share,
               _relative(res, k), remaps if k == 4 else 0]


# ---------------------------------------------------------------- commands


def cmd_map(args) -> int:
    g, sys = _inputs(args)
    res = _run(g, sys, args.steps)
    report = build_report(res)
    report["system"] = sys.name
    out = _outdir(args.out)
    if out is not None:
        _write_json(out / "summary.json", report)
        _write_csv(out / "report.csv", REPORT_HEADER, report_rows(res))
        for k, snap in res.steps.items():
            _write_json(out / f"gantt_step{k}.json", schedule_to_gantt(snap.schedule))
        _write_json(out / "mapping.json", res.final.to_dict())
    print(f"{g.name} on {sys.name}: {len(g)} layers, {len(sys)} accelerators")
    for row in report_rows(res):
        rel = "" if row[6] is None else f"  {row[6]:6.2f}%"
        print(f"  step {row[0]}: latency {row[1]:.6g} s  energy {row[2]:.6g} J  compute share {row[5]:.3f}{rel}")
    print(f"  remaps {len(res.remap_log)}, search time {res.search_time:.3f} s")
    return 0


def sweep_rows(g: ModelGraph, sys: SystemSpec, config: SweepConfig):
    for bw in config.bandwidths:
        res = _run(g, sys.with_bandwidth(bw))
        for row in report_rows(res):
            k, lat, energy, comm, comp, _share, rel, remaps = row
            yield [bw / fixtures.GB, label_for(bw), k, lat, energy, comm, comp, rel, remaps]


def cmd_sweep(args) -> int:
    g, sys = _inputs(args)
    config = parse_bandwidths(args.bandwidths) if args.bandwidths else SweepConfig()
    rows = list(sweep_rows(g, sys, config))
    out = _outdir(args.out)
    if out is not None:
        _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    w = csv.writer(_sys.stdout)
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return 0


def _reduction(before: float, after: float) -> float:
    return 0.0 if before == 0 else 100.0 * (before - after) / before


def compare_row(g: ModelGraph, sys: SystemSpec) -> list:
    res = _run(g, sys)
    base, final = res.steps[2].schedule, res.steps[4].schedule
    bw = {sys[a].bw_acc for a in sys.ids}
    return [
        bw.pop() / fixtures.GB if len(bw) == 1 else None,
        base.sys_latency, final.sys_latency, _reduction(base.sys_latency, final.sys_latency),
        base.sys_energy, final.sys_energy, _reduction(base.sys_energy, final.sys_energy),
        1 - base.compute_share, base.compute_share, 1 - final.compute_share, final.compute_share,
        len(res.remap_log),
    ]


def cmd_compare(args) -> int:
    g, sys = _inputs(args)
    systems = [sys] if not args.bandwidths else [sys.with_bandwidth(b) for b in parse_bandwidths(args.bandwidths).bandwidths]
    rows = [compare_row(g, s) for s in systems]
    out = _outdir(args.out)
    if out is not None:
        _write_csv(out / "compare.csv", COMPARE_HEADER, rows)
    for row in rows:
        bw = "" if row[0] is None else f"@{row[0]:g} GB/s "
        print(f"{g.name} {bw}latency {row[1]:.6g} -> {row[2]:.6g} s ({row[3]:.2f}% less), "
              f"energy {row[4]:.6g} -> {row[5]:.6g} J ({row[6]:.2f}% less), "
              f"compute share {row[8]:.3f} -> {row[10]:.3f}")
    return 0


def cmd_oracle(args) -> int:
    g, sys = _inputs(args)
    try:
        best = exhaustive_map(g, sys, max_candidates=args.budget)
    except BudgetExceeded as exc:
        raise Infeasible(str(exc)) from None
    _checked(g, 0, best.schedule, best.state)
    res = _run(g, sys)
    gap = res.sys_latency - best.latency
    doc = {
        "model": g.name,
        "system": sys.name,
        "candidates": best.evaluated,
        "optimum_latency": best.latency,
        "optimum_assignment": dict(sorted(best.assignment.items())),
        "h2h_latency": res.sys_latency,
        "h2h_assignment": dict(sorted(res.final.assignment.items())),
        "gap": gap,
        "gap_pct": 0.0 if best.latency == 0 else 100.0 * gap / best.latency,
    }
    out = _outdir(args.out)
    if out is not None:
        _write_json(out / "oracle.json", doc)
    print(f"{g.name}: optimum {best.latency:.6g} s over {best.evaluated} candidates; "
          f"h2h {res.sys_latency:.6g} s; gap {gap:.6g} s ({doc['gap_pct']:.2f}%)")
    return 0


def cmd_validate(args) -> int:
    g, sys = _inputs(args)
    sys.check_supports(g)
    print(f"model {g.name}: {len(g)} layers, {len(g.edges)} edges, entries {list(g.entries)}, exits {list(g.exits)}")
    print(f"system {sys.name}: {len(sys)} accelerators, every layer kind supported")
    if args.gantt is None:
        return 0
    sched = _read(lambda p: gantt_to_schedule(Path(p).read_text()), args.gantt, "Gantt")
    problems = []
    fused = ()
    if args.mapping is not None:
        doc = _read(lambda p: json.loads(Path(p).read_text()), args.mapping, "mapping")
        try:
            m = MappingState.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.mapping}: malformed mapping: {exc!r}") from None
        fused = m.fused_edges
        try:
            check_state(g, sys, m)
        except MappingError as exc:
            problems.append(f"mapping: {exc}")
        else:
            for lid in g.nodes:
                bd, _ = state_layer_cost(g, sys, m, lid)
                got = sched.breakdown.get(lid)
                if got is not None and not math.isclose(got.total, bd.total, rel_tol=1e-9, abs_tol=1e-12):
                    problems.append(f"{lid}: Gantt cost {got.total} != model cost {bd.total}")
                if sched.placement.get(lid) not in (None, m.assignment[lid]):
                    problems.append(f"{lid}: Gantt places it on {sched.placement[lid]}, mapping on {m.assignment[lid]}")
    problems += validate_schedule(g, sched, fused)
    if problems:
        for p in problems:
            print(f"  {p}", file=_sys.stderr)
        raise Infeasible(f"{args.gantt}: {len(problems)} problem(s)")
    print(f"schedule {args.gantt}: valid, latency {sched.sys_latency:.6g} s")
    return 0


def cmd_export(args) -> int:
    out = _outdir(args.out or ".")
    for name, make in fixtures.BUILTIN_MODELS.items():
        dump_model(make(), out / f"model-{name}.json")
    for name, make in fixtures.BUILTIN_SYSTEMS.items():
        dump_system(make(), out / f"system-{name}.json")
    print(f"wrote {len(fixtures.BUILTIN_MODELS)} models and {len(fixtures.BUILTIN_SYSTEMS)} systems to {out}")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h2h", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--model", required=True, help="model JSON, builtin:NAME or random:N")
        sp.add_argument("--system", required=True, help="system JSON, builtin:NAME or random:K")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int, default=0, help="seed for random: models and systems")
        sp.add_argument("--acc-bandwidth", action="append", metavar="ACC=GBPS",
                        help="override one accelerator's host link (repeatable)")

    sp = sub.add_parser("map", help="run the mapper and write reports")
    common(sp)
    sp.add_argument("--steps", type=int, choices=(1, 2, 3, 4), default=4, help="run through this step")
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("sweep", help="map under several host-link bandwidths")
    common(sp)
    sp.add_argument("--bandwidths", help="comma list of GB/s values or names (default: Low-,Low,Mid-,Mid,High)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="baseline (step 2) vs final mapping")
    common(sp)
    sp.add_argument("--bandwidths", help="optional comma list of GB/s values or names")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("oracle", help="exhaustive optimum and the mapper's gap to it")
    common(sp)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="maximum candidate placements")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("validate", help="check model/system files and optionally a Gantt schedule")
    common(sp)
    sp.add_argument("--gantt", help="Gantt JSON to validate")
    sp.add_argument("--mapping", help="mapping JSON the Gantt came from (enables cost checks)")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("export", help="write the built-in fixtures as JSON files")
    sp.add_argument("--out", help="output directory (default: current directory)")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"h2h: error: {exc}", file=_sys.stderr)
        return 2
    except UnsupportedLayer as exc:
        print(f"h2h: infeasible: {exc}", file=_sys.stderr)
        return 1
    except Infeasible as exc:
        print(f"h2h: infeasible: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())

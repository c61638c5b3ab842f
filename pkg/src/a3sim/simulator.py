"""Deterministic cycle-approximate execution model.

Two architectures share one task-graph front end:

* baseline_sequential: a monolithic PE array runs every task one at a time in
  a fixed priority-topological order (RGB before Depth, then by level, then
  id); all data movement, including fusion traffic, shares the single dram
  channel.
* fuse_multitasking: the array is split into two halves, each running its
  home modality's tasks in the same relative order concurrently. Fusion
  transfers use the dedicated fuseLink channel and park their words in the
  receiving half's fuseLink buffer until the consuming task starts.

A task costs task_setup_cycles + ceil(macs / PEs) + ceil(move_words / channel
bandwidth), phases sequential. Everything is integer-exact and replayable.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .costmodel import layer_cost, link_cost
from .errors import ValidationError
from .fuselink import Deployment, validate_deployment
from .hypergate import GateVector, Threshold, prune
from .netspec import DualNetwork, Modality


class ArchMode(str, Enum):
    BASELINE = "baseline_sequential"
    FUSE_MULTITASKING = "fuse_multitasking"


class TaskKind(str, Enum):
    LAYER_COMPUTE = "layer_compute"
    FUSE_FILTER = "fuse_filter"
    FUSE_TRANSFER = "fuse_transfer"


@dataclass(frozen=True)
class ArchConfig:
    mode: ArchMode = ArchMode.BASELINE
    pe_rows: int = 16
    pe_cols: int = 16
    frequency_mhz: float = 80.0
    dram_bandwidth_words_per_cycle: float = 4.0
    fuselink_bandwidth_words_per_cycle: float = 16.0
    fuselink_buffer_words: int = 1_048_576
    task_setup_cycles: int = 0
    dsp_per_pe: int = 5
    macs_per_pe_per_cycle: int = 1  # fixed
    word_bytes: int = 4             # fixed
    input_buffer_words: int = 1_048_576
    weight_buffer_words: int = 1_048_576
    output_buffer_words: int = 1_048_576
    half_input_buffer_words: int = 524_288
    half_weight_buffer_words: int = 524_288
    half_output_buffer_words: int = 524_288

    def __post_init__(self) -> None:
        if self.pe_rows < 1 or self.pe_cols < 1:
            raise ValidationError("arch: PE array dims must be positive")
        if self.mode is ArchMode.FUSE_MULTITASKING and self.pe_cols % 2 != 0:
            raise ValidationError("arch: fuse_multitasking needs an even pe_cols to split")
        if self.frequency_mhz <= 0:
            raise ValidationError("arch: frequency_mhz must be positive")
        if self.dram_bandwidth_words_per_cycle <= 0:
            raise ValidationError("arch: dram bandwidth must be positive")
        if self.fuselink_bandwidth_words_per_cycle <= 0:
            raise ValidationError("arch: fuseLink bandwidth must be positive")
        if self.fuselink_buffer_words < 0:
            raise ValidationError("arch: fuseLink buffer words must be non-negative")
        if self.task_setup_cycles < 0:
            raise ValidationError("arch: task_setup_cycles must be non-negative")
        if self.macs_per_pe_per_cycle != 1:
            raise ValidationError("arch: macs_per_pe_per_cycle is fixed at 1")
        if self.word_bytes != 4:
            raise ValidationError("arch: word_bytes is fixed at 4")
        for name in ("input_buffer_words", "weight_buffer_words", "output_buffer_words",
                     "half_input_buffer_words", "half_weight_buffer_words",
                     "half_output_buffer_words"):
            if getattr(self, name) < 0:
                raise ValidationError(f"arch: {name} must be non-negative")

    @property
    def total_pes(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def pes_per_half(self) -> int:
        return self.total_pes // 2

    @property
    def dsp_total(self) -> int:
        return self.total_pes * self.dsp_per_pe

    def with_mode(self, mode: ArchMode) -> "ArchConfig":
        return replace(self, mode=mode)

    def to_doc(self) -> dict:
        doc = {k: (v.value if isinstance(v, ArchMode) else v)
               for k, v in self.__dict__.items()}
        doc["total_pes"] = self.total_pes
        doc["dsp_total"] = self.dsp_total
        return doc


_ARCH_FIELDS = {
    "mode", "pe_rows", "pe_cols", "frequency_mhz",
    "dram_bandwidth_words_per_cycle", "fuselink_bandwidth_words_per_cycle",
    "fuselink_buffer_words", "task_setup_cycles", "dsp_per_pe",
    "macs_per_pe_per_cycle", "word_bytes",
    "input_buffer_words", "weight_buffer_words", "output_buffer_words",
    "half_input_buffer_words", "half_weight_buffer_words", "half_output_buffer_words",
}


def arch_from_overrides(overrides: dict, base: ArchConfig | None = None) -> ArchConfig:
    base = base or ArchConfig()
    unknown = set(overrides) - _ARCH_FIELDS
    if unknown:
        raise ValidationError(f"arch: unknown keys {sorted(unknown)}")
    values = dict(overrides)
    if "mode" in values and not isinstance(values["mode"], ArchMode):
        try:
            values["mode"] = ArchMode(values["mode"])
        except ValueError:
            raise ValidationError(f"arch: unknown mode {values['mode']!r}") from None
    return replace(base, **values)


@dataclass(frozen=True)
class Task:
    id: str
    kind: TaskKind
    modality_home: Modality
    macs: int
    move_words: int
    depends_on: frozenset[str] = frozenset()
    level: int = 0

    def __post_init__(self) -> None:
        if self.macs < 0 or self.move_words < 0:
            raise ValidationError(f"task {self.id!r}: negative cost")
        if self.kind is TaskKind.FUSE_TRANSFER and self.macs != 0:
            raise ValidationError(f"task {self.id!r}: fuse_transfer carries no macs")


@dataclass(frozen=True)
class TaskGraph:
    tasks: tuple[Task, ...]

    def __post_init__(self) -> None:
        seen = set()
        for task in self.tasks:
            if task.id in seen:
                raise ValidationError(f"task {task.id!r}: duplicate id")
            seen.add(task.id)
        for task in self.tasks:
            for dep in task.depends_on:
                if dep not in seen:
                    raise ValidationError(f"task {task.id!r}: unknown dependency {dep!r}")

    def by_id(self, task_id: str) -> Task:
        for task in self.tasks:
            if task.id == task_id:
                return task
        raise KeyError(task_id)


@dataclass(frozen=True)
class TraceEvent:
    task_id: str
    array: str
    start_cycle: int
    end_cycle: int
    kind: TaskKind


@dataclass(frozen=True)
class ArrayStats:
    pe_count: int
    busy_cycles: int
    idle_cycles: int
    dependency_stall_cycles: int
    transfer_stall_cycles: int
    macs: int
    utilization: float

    def to_doc(self) -> dict:
        return {
            "pe_count": self.pe_count,
            "busy_cycles": self.busy_cycles,
            "idle_cycles": self.idle_cycles,
            "dependency_stall_cycles": self.dependency_stall_cycles,
            "transfer_stall_cycles": self.transfer_stall_cycles,
            "macs": self.macs,
            "utilization": self.utilization,
        }


@dataclass(frozen=True)
class SimResult:
    mode: ArchMode
    total_cycles: int
    latency_ms: float
    per_array: tuple[tuple[str, ArrayStats], ...]
    peak_fuselink_buffer_words: int
    total_macs: int
    energy_proxy: int
    utilization: float
    events: tuple[TraceEvent, ...] = field(default=(), repr=False)

    def array_stats(self, name: str) -> ArrayStats:
        for label, stats in self.per_array:
            if label == name:
                return stats
        raise KeyError(name)

    def to_doc(self) -> dict:
        return {
            "mode": self.mode.value,
            "total_cycles": self.total_cycles,
            "latency_ms": self.latency_ms,
            "per_array": {name: stats.to_doc() for name, stats in self.per_array},
            "peak_fuselink_buffer_words": self.peak_fuselink_buffer_words,
            "total_macs": self.total_macs,
            "energy_proxy": self.energy_proxy,
            "utilization": self.utilization,
        }


def sim_result_from_doc(doc: dict) -> SimResult:
    try:
        per_array = tuple(
            (name, ArrayStats(
                pe_count=entry["pe_count"],
                busy_cycles=entry["busy_cycles"],
                idle_cycles=entry["idle_cycles"],
                dependency_stall_cycles=entry["dependency_stall_cycles"],
                transfer_stall_cycles=entry["transfer_stall_cycles"],
                macs=entry["macs"],
                utilization=entry["utilization"],
            ))
            for name, entry in doc["per_array"].items())
        return SimResult(
            mode=ArchMode(doc["mode"]),
            total_cycles=doc["total_cycles"],
            latency_ms=doc["latency_ms"],
            per_array=per_array,
            peak_fuselink_buffer_words=doc["peak_fuselink_buffer_words"],
            total_macs=doc["total_macs"],
            energy_proxy=doc["energy_proxy"],
            utilization=doc["utilization"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed simulation result document: {exc}") from None


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------

_MODALITY_RANK = {Modality.RGB: 0, Modality.DEPTH: 1}


def compute_task_id(modality: Modality, layer_id: str) -> str:
    return f"{modality.value}/{layer_id}"


def build_taskgraph(nets: DualNetwork, dep: Deployment) -> TaskGraph:
    """One compute task per layer chained per modality; per link, a filter
    task and a transfer task homed on the passive half, wired between the
    active producer and the passive consumer."""
    violations = validate_deployment(dep, nets)
    if violations:
        first = violations[0]
        raise ValidationError(
            f"invalid deployment {dep.name!r}: link {first['link_id']!r}: {first['rule']}")

    transfers_into: dict[tuple[Modality, int], list[str]] = {}
    fuse_tasks: list[Task] = []
    for link in dep.links:
        lc = link_cost(link, nets)
        filter_id = f"fuse_filter/{link.id}"
        transfer_id = f"fuse_transfer/{link.id}"
        active_task = compute_task_id(link.active.modality, link.active.layer_id)
        fuse_tasks.append(Task(
            id=filter_id, kind=TaskKind.FUSE_FILTER,
            modality_home=link.passive.modality,
            macs=lc.macs, move_words=lc.weight_words,
            depends_on=frozenset({active_task}), level=link.passive.level))
        fuse_tasks.append(Task(
            id=transfer_id, kind=TaskKind.FUSE_TRANSFER,
            modality_home=link.passive.modality,
            macs=0, move_words=lc.activation_words,
            depends_on=frozenset({filter_id}), level=link.passive.level))
        transfers_into.setdefault(
            (link.passive.modality, link.passive.level), []).append(transfer_id)

    compute_tasks: list[Task] = []
    for net in (nets.rgb, nets.depth):
        prev_id: str | None = None
        for level, block in enumerate(net.blocks):
            for li, layer in enumerate(block):
                deps: set[str] = set()
                if prev_id is not None:
                    deps.add(prev_id)
                if li == 0:
                    deps.update(transfers_into.get((net.modality, level), ()))
                cost = layer_cost(layer)
                tid = compute_task_id(net.modality, layer.id)
                compute_tasks.append(Task(
                    id=tid, kind=TaskKind.LAYER_COMPUTE, modality_home=net.modality,
                    macs=cost.macs,
                    move_words=cost.weight_words + cost.activation_words,
                    depends_on=frozenset(deps), level=level))
                prev_id = tid
    return TaskGraph(tasks=tuple(compute_tasks + fuse_tasks))


def topological_order(graph: TaskGraph) -> list[Task]:
    """Kahn's algorithm; among ready tasks, RGB before Depth, then lower
    level, then id. Raises on cycles."""
    by_id = {t.id: t for t in graph.tasks}
    dependents: dict[str, list[str]] = {t.id: [] for t in graph.tasks}
    indegree = {t.id: len(t.depends_on) for t in graph.tasks}
    for task in graph.tasks:
        for dep in task.depends_on:
            dependents[dep].append(task.id)
    heap = [( _MODALITY_RANK[t.modality_home], t.level, t.id)
            for t in graph.tasks if indegree[t.id] == 0]
    heapq.heapify(heap)
    order: list[Task] = []
    while heap:
        _, _, tid = heapq.heappop(heap)
        task = by_id[tid]
        order.append(task)
        for succ in dependents[tid]:
            indegree[succ] -= 1
            if indegree[succ] == 0:
                s = by_id[succ]
                heapq.heappush(heap, (_MODALITY_RANK[s.modality_home], s.level, s.id))
    if len(order) != len(graph.tasks):
        stuck = sorted(tid for tid, deg in indegree.items() if deg > 0)
        raise ValidationError(f"task graph contains a cycle involving {stuck[:4]}")
    return order


# ---------------------------------------------------------------------------
# Event-driven simulation
# ---------------------------------------------------------------------------

def _ceil_cycles(amount: int, rate: float) -> int:
    if amount <= 0:
        return 0
    if float(rate).is_integer():
        r = int(rate)
        return -(-amount // r)
    return math.ceil(amount / rate)


_BASELINE_ARRAY = "pe_array"
_HALF_NAME = {Modality.RGB: "rgb_half", Modality.DEPTH: "depth_half"}


class _Reservation:
    __slots__ = ("words", "start", "release")

    def __init__(self, words: int, start: int) -> None:
        self.words = words
        self.start = start
        self.release: int | None = None


def simulate(graph: TaskGraph, nets: DualNetwork | None, arch: ArchConfig) -> SimResult:
    """Run the graph on the configured architecture.

    nets is accepted for interface symmetry with build_taskgraph; the graph
    already carries every cost the simulation needs.
    """
    order = topological_order(graph)
    split = arch.mode is ArchMode.FUSE_MULTITASKING
    if split:
        pes = {name: arch.pes_per_half for name in _HALF_NAME.values()}
        array_of = {t.id: _HALF_NAME[t.modality_home] for t in order}
        for task in order:
            if (task.kind is TaskKind.FUSE_TRANSFER
                    and task.move_words > arch.fuselink_buffer_words):
                raise ValidationError(
                    f"fuse transfer for link {_link_of(task.id)!r} needs "
                    f"{task.move_words} words but the fuseLink buffer holds "
                    f"{arch.fuselink_buffer_words}: deadlock")
    else:
        pes = {_BASELINE_ARRAY: arch.total_pes}
        array_of = {t.id: _BASELINE_ARRAY for t in order}

    free = {name: 0 for name in pes}
    busy = {name: 0 for name in pes}
    dep_stall = {name: 0 for name in pes}
    buf_stall = {name: 0 for name in pes}
    macs_on = {name: 0 for name in pes}
    finish: dict[str, int] = {}
    start_of: dict[str, int] = {}
    reservations: dict[str, dict[str, _Reservation]] = {name: {} for name in pes}
    events: list[TraceEvent] = []

    for task in order:
        arr = array_of[task.id]
        t_free = free[arr]
        t_dep = max((finish[d] for d in task.depends_on), default=0)
        base_start = max(t_free, t_dep)
        start = base_start
        if split and task.kind is TaskKind.FUSE_TRANSFER and task.move_words > 0:
            start = _earliest_room(reservations[arr].values(), base_start,
                                   task.move_words, arch.fuselink_buffer_words,
                                   task.id)
        compute = _ceil_cycles(task.macs, pes[arr] * arch.macs_per_pe_per_cycle)
        if split and task.kind is TaskKind.FUSE_TRANSFER:
            bandwidth = arch.fuselink_bandwidth_words_per_cycle
        else:
            bandwidth = arch.dram_bandwidth_words_per_cycle
        movement = _ceil_cycles(task.move_words, bandwidth)
        duration = arch.task_setup_cycles + compute + movement
        end = start + duration

        dep_stall[arr] += max(0, t_dep - t_free)
        buf_stall[arr] += start - base_start
        busy[arr] += duration
        macs_on[arr] += task.macs
        free[arr] = end
        finish[task.id] = end
        start_of[task.id] = start
        if split and task.kind is TaskKind.FUSE_TRANSFER and task.move_words > 0:
            reservations[arr][task.id] = _Reservation(task.move_words, start)
        for dep in task.depends_on:
            res = reservations[array_of[dep]].get(dep)
            if res is not None and res.release is None:
                res.release = start
        events.append(TraceEvent(task.id, arr, start, end, task.kind))

    total_cycles = max(finish.values(), default=0)
    peak = 0
    for arr, res_map in reservations.items():
        marks: list[tuple[int, int, int]] = []
        for res in res_map.values():
            release = res.release if res.release is not None else total_cycles
            marks.append((res.start, 1, res.words))
            marks.append((release, 0, -res.words))
        marks.sort()  # releases (tag 0) apply before reserves (tag 1) at equal times
        level = 0
        for _, _, delta in marks:
            level += delta
            peak = max(peak, level)

    per_array = []
    for name in pes:
        idle = total_cycles - busy[name] - dep_stall[name] - buf_stall[name]
        util = macs_on[name] / (busy[name] * pes[name]) if busy[name] else 0.0
        per_array.append((name, ArrayStats(
            pe_count=pes[name], busy_cycles=busy[name], idle_cycles=idle,
            dependency_stall_cycles=dep_stall[name],
            transfer_stall_cycles=buf_stall[name],
            macs=macs_on[name], utilization=util)))

    total_macs = sum(t.macs for t in order)
    overall_util = (total_macs / (total_cycles * arch.total_pes)
                    if total_cycles else 0.0)
    return SimResult(
        mode=arch.mode,
        total_cycles=total_cycles,
        latency_ms=total_cycles / (arch.frequency_mhz * 1000.0),
        per_array=tuple(per_array),
        peak_fuselink_buffer_words=peak,
        total_macs=total_macs,
        energy_proxy=sum(busy[name] * pes[name] for name in pes),
        utilization=overall_util,
        events=tuple(events),
    )


def _link_of(task_id: str) -> str:
    return task_id.split("/", 1)[1] if "/" in task_id else task_id


def _earliest_room(reservations: Iterable[_Reservation], base_start: int,
                   words: int, capacity: int, task_id: str) -> int:
    """First cycle >= base_start with room for `words` in the buffer."""
    pending = 0   # reservations whose consumer has not started yet
    releasing: list[tuple[int, int]] = []
    for res in reservations:
        if res.release is None:
            pending += res.words
        else:
            releasing.append((res.release, res.words))
    if pending + words > capacity:
        raise ValidationError(
            f"fuse transfer for link {_link_of(task_id)!r} cannot fit: "
            f"{pending} words are parked for unstarted consumers and "
            f"{words} more exceed the {capacity}-word fuseLink buffer: deadlock")
    held = pending + sum(w for rel, w in releasing if rel > base_start)
    t = base_start
    idx = 0
    by_time = sorted((rel, w) for rel, w in releasing if rel > base_start)
    while held + words > capacity and idx < len(by_time):
        t = by_time[idx][0]
        while idx < len(by_time) and by_time[idx][0] == t:
            held -= by_time[idx][1]
            idx += 1
    if held + words > capacity:
        raise ValidationError(
            f"fuse transfer for link {_link_of(task_id)!r} cannot fit in the "
            f"{capacity}-word fuseLink buffer: deadlock")
    return t


def run_experiment(nets: DualNetwork, dep: Deployment, arch: ArchConfig,
                   gates: GateVector | None = None,
                   th: Threshold | float | None = None) -> SimResult:
    """Optionally prune, then build the graph and simulate."""
    if gates is not None:
        if th is None:
            raise ValidationError("run_experiment: gates given without a threshold")
        dep = prune(dep, gates, th)
    graph = build_taskgraph(nets, dep)
    return simulate(graph, nets, arch)


def compare(results: Sequence[tuple[str, SimResult]]) -> list[dict]:
    """Comparison rows against the first (baseline) entry."""
    if len(results) < 2:
        raise ValidationError("compare: need at least two results")
    base_label, base = results[0]
    rows = []
    for i, (label, res) in enumerate(results):
        if i == 0:
            delta = None
        elif base.total_cycles == 0:
            delta = 0.0
        else:
            delta = 100.0 * (res.total_cycles - base.total_cycles) / base.total_cycles
        rows.append({
            "label": label,
            "total_cycles": res.total_cycles,
            "latency_ms": res.latency_ms,
            "utilization": res.utilization,
            "delta_pct": delta,
        })
    return rows


# ---------------------------------------------------------------------------
# Trace output and replay verification
# ---------------------------------------------------------------------------

TRACE_HEADER = "task_id,array,start_cycle,end_cycle,kind"


def trace_to_csv(events: Sequence[TraceEvent]) -> str:
    lines = [TRACE_HEADER]
    lines += [f"{e.task_id},{e.array},{e.start_cycle},{e.end_cycle},{e.kind.value}"
              for e in events]
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str) -> list[TraceEvent]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise ValidationError("trace: missing or wrong header row")
    events = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise ValidationError(f"trace: malformed row {ln!r}")
        events.append(TraceEvent(parts[0], parts[1], int(parts[2]), int(parts[3]),
                                 TaskKind(parts[4])))
    return events


def replay_verify(graph: TaskGraph, events: Sequence[TraceEvent]) -> list[str]:
    """Independent check that a trace respects the graph: every task appears
    exactly once, no task starts before its dependencies finish, and tasks on
    one array never overlap. Empty list means the trace is clean."""
    violations: list[str] = []
    seen: dict[str, TraceEvent] = {}
    for event in events:
        if event.task_id in seen:
            violations.append(f"task {event.task_id!r} appears more than once")
        seen[event.task_id] = event
        if event.end_cycle < event.start_cycle:
            violations.append(f"task {event.task_id!r} ends before it starts")
    for task in graph.tasks:
        if task.id not in seen:
            violations.append(f"task {task.id!r} missing from trace")
    for task in graph.tasks:
        ev = seen.get(task.id)
        if ev is None:
            continue
        for dep in task.depends_on:
            dep_ev = seen.get(dep)
            if dep_ev is None:
                continue
            if ev.start_cycle < dep_ev.end_cycle:
                violations.append(
                    f"task {task.id!r} starts at {ev.start_cycle} before its "
                    f"dependency {dep!r} finishes at {dep_ev.end_cycle}")
    by_array: dict[str, list[TraceEvent]] = {}
    for event in events:
        by_array.setdefault(event.array, []).append(event)
    for array, evs in by_array.items():
        evs.sort(key=lambda e: (e.start_cycle, e.end_cycle, e.task_id))
        for prev, cur in zip(evs, evs[1:]):
            if cur.start_cycle < prev.end_cycle:
                violations.append(
                    f"array {array!r}: {cur.task_id!r} overlaps {prev.task_id!r}")
    return violations

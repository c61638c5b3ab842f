"""Independent reference implementations used only by tests.

Everything here recomputes results the slow, obvious way (explicit loops,
one-cycle-at-a-time stepping) so the library's closed-form and event-driven
paths are checked against a second, structurally different route.
"""

from __future__ import annotations

import math

from a3sim.netspec import LayerKind, LayerSpec, Modality
from a3sim.simulator import ArchConfig, ArchMode, Task, TaskGraph, TaskKind


# ---------------------------------------------------------------------------
# MAC counting by enumeration
# ---------------------------------------------------------------------------

def slide_positions(in_dim: int, kernel: int, stride: int, padding: int) -> int:
    """Count kernel placements by actually sliding the window."""
    count = 0
    pos = -padding
    while pos + kernel <= in_dim + padding:
        count += 1
        pos += stride
    return count


def brute_layer_macs(layer: LayerSpec) -> int:
    if layer.kind is LayerKind.CONV:
        out_h = slide_positions(layer.in_height, layer.kernel_h, layer.stride, layer.padding)
        out_w = slide_positions(layer.in_width, layer.kernel_w, layer.stride, layer.padding)
        count = 0
        for _oc in range(layer.out_channels):
            for _oy in range(out_h):
                for _ox in range(out_w):
                    for _ic in range(layer.in_channels):
                        for _ky in range(layer.kernel_h):
                            for _kx in range(layer.kernel_w):
                                count += 1
        return count
    if layer.kind is LayerKind.FC:
        count = 0
        for _o in range(layer.out_channels):
            for _i in range(layer.in_channels):
                count += 1
        return count
    return 0


def brute_link_macs(c_input: int, c_output: int, w: int, h: int,
                    p_h: int, p_w: int) -> int:
    count = 0
    for _oc in range(c_output):
        for _oy in range(p_h):
            for _ox in range(p_w):
                for _ic in range(c_input):
                    for _kw in range(w):
                        for _kh in range(h):
                            count += 1
    return count


# ---------------------------------------------------------------------------
# Dense gating-network forward pass, pure Python
# ---------------------------------------------------------------------------

def dense_hypernet_forward(conv_w, conv_b, fc_w, fc_b, frame) -> list[float]:
    """Nested-loop conv3x3 pad1 stride1 -> relu -> global avg -> fc -> sigmoid."""
    k_out = len(conv_w)
    k_in = len(conv_w[0])
    h = len(frame[0])
    w = len(frame[0][0])
    pooled = []
    for o in range(k_out):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                val = conv_b[o]
                for c in range(k_in):
                    for u in range(3):
                        for v in range(3):
                            y = i + u - 1
                            x = j + v - 1
                            if 0 <= y < h and 0 <= x < w:
                                val += conv_w[o][c][u][v] * frame[c][y][x]
                if val > 0.0:
                    acc += val
        pooled.append(acc / (h * w))
    scores = []
    for l in range(len(fc_w)):
        z = fc_b[l]
        for o in range(k_out):
            z += fc_w[l][o] * pooled[o]
        if z >= 0:
            scores.append(1.0 / (1.0 + math.exp(-z)))
        else:
            ez = math.exp(z)
            scores.append(ez / (1.0 + ez))
    return scores


# ---------------------------------------------------------------------------
# One-cycle-at-a-time simulator
# ---------------------------------------------------------------------------

_RANK = {Modality.RGB: 0, Modality.DEPTH: 1}


def _priority_topo(graph: TaskGraph) -> list[Task]:
    remaining = {t.id: t for t in graph.tasks}
    done: set[str] = set()
    order: list[Task] = []
    while remaining:
        ready = [t for t in remaining.values() if set(t.depends_on) <= done]
        if not ready:
            raise AssertionError("oracle: cyclic graph")
        ready.sort(key=lambda t: (_RANK[t.modality_home], t.level, t.id))
        task = ready[0]
        order.append(task)
        done.add(task.id)
        del remaining[task.id]
    return order


class _Running:
    def __init__(self, task: Task, pes: int, bandwidth: float, setup: int) -> None:
        self.task = task
        self.setup_left = setup
        self.macs_left = task.macs
        self.words_left = float(task.move_words)
        self.pes = pes
        self.bandwidth = bandwidth

    def tick(self) -> bool:
        """Advance one cycle; True when the task completes at the next boundary."""
        if self.setup_left > 0:
            self.setup_left -= 1
        elif self.macs_left > 0:
            self.macs_left -= self.pes
        else:
            self.words_left -= self.bandwidth
        return self.setup_left <= 0 and self.macs_left <= 0 and self.words_left <= 1e-9


def step_simulate(graph: TaskGraph, arch: ArchConfig, max_cycles: int = 50_000_000) -> int:
    """Total cycles by literally stepping the clock."""
    order = _priority_topo(graph)
    split = arch.mode is ArchMode.FUSE_MULTITASKING
    if split:
        queues = {
            "rgb_half": [t for t in order if t.modality_home is Modality.RGB],
            "depth_half": [t for t in order if t.modality_home is Modality.DEPTH],
        }
        pes = arch.total_pes // 2
    else:
        queues = {"array": list(order)}
        pes = arch.total_pes
    head = {name: 0 for name in queues}
    running: dict[str, _Running | None] = {name: None for name in queues}
    finished: set[str] = set()
    buffer_held = {name: 0 for name in queues}
    reserved_by: dict[str, tuple[str, int]] = {}  # transfer id -> (array, words)
    if not graph.tasks:
        return 0

    cycle = 0
    while len(finished) < len(graph.tasks):
        if cycle > max_cycles:
            raise AssertionError("oracle: exceeded max cycles (deadlock?)")
        # Boundary fixed point: starts can free buffer room for transfers
        # starting at the same boundary, and zero-duration tasks finish
        # immediately, unlocking further starts.
        changed = True
        while changed:
            changed = False
            for name in queues:
                if running[name] is not None or head[name] >= len(queues[name]):
                    continue
                task = queues[name][head[name]]
                if not set(task.depends_on) <= finished:
                    continue
                if (split and task.kind is TaskKind.FUSE_TRANSFER
                        and task.move_words > 0
                        and buffer_held[name] + task.move_words
                        > arch.fuselink_buffer_words):
                    continue
                bandwidth = (arch.fuselink_bandwidth_words_per_cycle
                             if split and task.kind is TaskKind.FUSE_TRANSFER
                             else arch.dram_bandwidth_words_per_cycle)
                running[name] = _Running(task, pes, bandwidth, arch.task_setup_cycles)
                head[name] += 1
                if split and task.kind is TaskKind.FUSE_TRANSFER and task.move_words > 0:
                    buffer_held[name] += task.move_words
                    reserved_by[task.id] = (name, task.move_words)
                for dep in task.depends_on:
                    held = reserved_by.pop(dep, None)
                    if held is not None:
                        buffer_held[held[0]] -= held[1]
                changed = True
            for name in queues:
                run = running[name]
                if run is not None and run.setup_left <= 0 and run.macs_left <= 0 \
                        and run.words_left <= 1e-9:
                    finished.add(run.task.id)
                    running[name] = None
                    changed = True
        if len(finished) == len(graph.tasks):
            return cycle
        # Advance one cycle; true deadlocks hit the max_cycles guard.
        for name in queues:
            run = running[name]
            if run is None:
                continue
            if run.tick():
                finished.add(run.task.id)
                running[name] = None
        cycle += 1
    return cycle

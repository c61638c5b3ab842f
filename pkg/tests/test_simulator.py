import random

import pytest

from a3sim.errors import ValidationError
from a3sim.fuselink import Deployment, link_between
from a3sim.hypergate import GateVector
from a3sim.netspec import Modality, builtin_preset
from a3sim.simulator import (
    ArchConfig, ArchMode, Task, TaskGraph, TaskKind, compare, build_taskgraph,
    replay_verify, run_experiment, sim_result_from_doc, simulate,
    topological_order, trace_from_csv, trace_to_csv,
)

from oracles import step_simulate


@pytest.fixture(scope="module")
def tiny2():
    return builtin_preset("tiny2")


def rgb_task(tid, macs, move=0, deps=(), level=0, kind=TaskKind.LAYER_COMPUTE):
    return Task(id=tid, kind=kind, modality_home=Modality.RGB, macs=macs,
                move_words=move, depends_on=frozenset(deps), level=level)


def depth_task(tid, macs, move=0, deps=(), level=0, kind=TaskKind.LAYER_COMPUTE):
    return Task(id=tid, kind=kind, modality_home=Modality.DEPTH, macs=macs,
                move_words=move, depends_on=frozenset(deps), level=level)


def arch(mode=ArchMode.BASELINE, pes=16, **kw):
    rows = {16: (4, 4), 256: (16, 16), 8: (2, 4)}[pes]
    return ArchConfig(mode=mode, pe_rows=rows[0], pe_cols=rows[1], **kw)


def tiny2_deployments(nets):
    rgb_link = link_between(nets, Modality.RGB, 0, 1)
    depth_link = link_between(nets, Modality.DEPTH, 0, 1)
    return {
        "empty": Deployment("empty", ()),
        "r2d": Deployment("r2d", (rgb_link,)),
        "d2r": Deployment("d2r", (depth_link,)),
        "bi": Deployment("bi", (rgb_link, depth_link)),
    }


class TestBuildTaskgraph:
    def test_empty_deployment_two_chains(self, tiny2):
        graph = build_taskgraph(tiny2, Deployment("empty", ()))
        assert len(graph.tasks) == 4
        roots = [t for t in graph.tasks if not t.depends_on]
        assert len(roots) == 2
        assert {t.modality_home for t in roots} == {Modality.RGB, Modality.DEPTH}

    def test_single_link_six_tasks(self, tiny2):
        dep = tiny2_deployments(tiny2)["r2d"]
        graph = build_taskgraph(tiny2, dep)
        assert len(graph.tasks) == 6
        order = topological_order(graph)  # raises if cyclic
        assert len(order) == 6
        kinds = {t.kind for t in graph.tasks}
        assert kinds == {TaskKind.LAYER_COMPUTE, TaskKind.FUSE_FILTER,
                         TaskKind.FUSE_TRANSFER}

    def test_bidirectional_eight_tasks_acyclic(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        assert len(graph.tasks) == 8
        assert len(topological_order(graph)) == 8

    def test_fusion_chain_wiring(self, tiny2):
        dep = tiny2_deployments(tiny2)["r2d"]
        graph = build_taskgraph(tiny2, dep)
        ff = graph.by_id("fuse_filter/RGB0->Depth1")
        xfer = graph.by_id("fuse_transfer/RGB0->Depth1")
        passive = graph.by_id("Depth/d_b1")
        assert ff.depends_on == {"RGB/rgb_b0"}
        assert xfer.depends_on == {ff.id}
        assert xfer.id in passive.depends_on
        assert ff.modality_home is Modality.DEPTH
        assert xfer.macs == 0 and xfer.move_words == 4 * 8 * 8

    def test_invalid_deployment_rejected(self, tiny2):
        from a3sim.fuselink import FilterDims, FuseLink
        good = link_between(tiny2, Modality.RGB, 0, 1)
        bad = FuseLink(id=good.id, active=good.active, passive=good.passive,
                       distance=good.distance, filter=FilterDims(9, 9, 1, 1))
        with pytest.raises(ValidationError, match="invalid deployment"):
            build_taskgraph(tiny2, Deployment("bad", (bad,)))


class TestSimulateWorkedExamples:
    def test_single_task_baseline(self):
        graph = TaskGraph((rgb_task("t", macs=1024),))
        res = simulate(graph, None, arch(ArchMode.BASELINE, 16))
        assert res.total_cycles == 64

    def test_single_task_split_half_array(self):
        graph = TaskGraph((rgb_task("t", macs=1024),))
        res = simulate(graph, None, arch(ArchMode.FUSE_MULTITASKING, 16))
        assert res.total_cycles == 128
        assert res.array_stats("rgb_half").busy_cycles == 128
        assert res.array_stats("depth_half").busy_cycles == 0
        assert res.array_stats("depth_half").idle_cycles == 128

    def test_symmetric_parity(self):
        graph = TaskGraph((rgb_task("r", macs=1024), depth_task("d", macs=1024)))
        base = simulate(graph, None, arch(ArchMode.BASELINE, 16))
        split = simulate(graph, None, arch(ArchMode.FUSE_MULTITASKING, 16))
        assert base.total_cycles == 64 + 64 == 128
        assert split.total_cycles == max(128, 128) == 128

    def test_empty_graph(self):
        res = simulate(TaskGraph(()), None, arch())
        assert res.total_cycles == 0
        assert res.latency_ms == 0.0
        assert res.total_macs == 0

    def test_setup_cycles_charged_per_task(self):
        graph = TaskGraph((rgb_task("a", macs=16), rgb_task("b", macs=16, deps=("a",))))
        res = simulate(graph, None, arch(ArchMode.BASELINE, 16, task_setup_cycles=10))
        assert res.total_cycles == (10 + 1) * 2

    def test_movement_cycles(self):
        graph = TaskGraph((rgb_task("a", macs=0, move=100),))
        res = simulate(graph, None,
                       arch(ArchMode.BASELINE, 16, dram_bandwidth_words_per_cycle=8.0))
        assert res.total_cycles == 13  # ceil(100 / 8)

    def test_latency_ms(self):
        graph = TaskGraph((rgb_task("t", macs=80_000 * 16),))
        res = simulate(graph, None, arch(ArchMode.BASELINE, 16))
        assert res.total_cycles == 80_000
        assert res.latency_ms == pytest.approx(1.0)  # 80k cycles at 80 MHz


class TestSimulateSemantics:
    def test_determinism_bit_identical(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        for mode in (ArchMode.BASELINE, ArchMode.FUSE_MULTITASKING):
            a = simulate(graph, tiny2, arch(mode, 16))
            b = simulate(graph, tiny2, arch(mode, 16))
            assert a == b

    def test_baseline_is_serial_sum(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        stats = res.array_stats("pe_array")
        assert stats.busy_cycles == res.total_cycles
        assert stats.idle_cycles == 0
        assert stats.dependency_stall_cycles == 0

    def test_stall_accounting_sums_to_total(self, tiny2):
        for name, dep in tiny2_deployments(tiny2).items():
            graph = build_taskgraph(tiny2, dep)
            res = simulate(graph, tiny2, arch(ArchMode.FUSE_MULTITASKING, 16))
            for _, stats in res.per_array:
                total = (stats.busy_cycles + stats.idle_cycles
                         + stats.dependency_stall_cycles
                         + stats.transfer_stall_cycles)
                assert total == res.total_cycles, name

    def test_mac_conservation(self, tiny2):
        for dep in tiny2_deployments(tiny2).values():
            graph = build_taskgraph(tiny2, dep)
            for mode in (ArchMode.BASELINE, ArchMode.FUSE_MULTITASKING):
                res = simulate(graph, tiny2, arch(mode, 16))
                envelope = sum(stats.busy_cycles * stats.pe_count
                               for _, stats in res.per_array)
                assert envelope >= res.total_macs

    def test_mac_conservation_equality_exact_multiples(self):
        # zero movement/setup and macs an exact multiple of the array size
        graph = TaskGraph((rgb_task("a", macs=64), rgb_task("b", macs=128, deps=("a",))))
        res = simulate(graph, None, arch(ArchMode.BASELINE, 16))
        envelope = sum(s.busy_cycles * s.pe_count for _, s in res.per_array)
        assert envelope == res.total_macs == 192

    def test_ceil_slack_bounded(self):
        graph = TaskGraph((rgb_task("a", macs=65),))  # one PE short of 5 rows
        res = simulate(graph, None, arch(ArchMode.BASELINE, 16))
        envelope = sum(s.busy_cycles * s.pe_count for _, s in res.per_array)
        assert 0 <= envelope - res.total_macs <= 15

    def test_energy_proxy(self):
        graph = TaskGraph((rgb_task("a", macs=64), depth_task("b", macs=64)))
        res = simulate(graph, None, arch(ArchMode.FUSE_MULTITASKING, 16))
        assert res.energy_proxy == sum(s.busy_cycles * s.pe_count
                                       for _, s in res.per_array)

    def test_cyclic_graph_rejected(self):
        graph = TaskGraph((rgb_task("a", macs=1, deps=("b",)),
                           rgb_task("b", macs=1, deps=("a",))))
        with pytest.raises(ValidationError, match="cycle"):
            simulate(graph, None, arch())

    def test_pruning_monotonic_cycles(self, tiny2):
        deps = tiny2_deployments(tiny2)
        results = {}
        for name, dep in deps.items():
            graph = build_taskgraph(tiny2, dep)
            results[name] = simulate(graph, tiny2,
                                     arch(ArchMode.FUSE_MULTITASKING, 16)).total_cycles
        assert results["empty"] <= results["r2d"] <= results["bi"]
        assert results["empty"] <= results["d2r"] <= results["bi"]


class TestBuffer:
    def transfer_graph(self, words, n=1):
        tasks = [rgb_task("producer", macs=16)]
        for i in range(n):
            tasks.append(depth_task(
                f"fuse_filter/link{i}", macs=16, deps=("producer",), level=1,
                kind=TaskKind.FUSE_FILTER))
            tasks.append(depth_task(
                f"fuse_transfer/link{i}", macs=0, move=words,
                deps=(f"fuse_filter/link{i}",), level=1, kind=TaskKind.FUSE_TRANSFER))
        tasks.append(depth_task(
            "consumer", macs=16,
            deps=tuple(f"fuse_transfer/link{i}" for i in range(n)), level=1))
        return TaskGraph(tuple(tasks))

    def test_peak_tracks_and_respects_capacity(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16, fuselink_buffer_words=256)
        res = simulate(graph, tiny2, cfg)
        assert 0 < res.peak_fuselink_buffer_words <= cfg.fuselink_buffer_words

    def test_oversized_transfer_names_link(self):
        graph = self.transfer_graph(words=1000)
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16, fuselink_buffer_words=999)
        with pytest.raises(ValidationError, match="link0.*deadlock"):
            simulate(graph, None, cfg)

    def test_two_transfers_one_consumer_overflow(self):
        graph = self.transfer_graph(words=600, n=2)
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16, fuselink_buffer_words=1000)
        with pytest.raises(ValidationError, match="deadlock"):
            simulate(graph, None, cfg)

    def test_baseline_never_uses_buffer(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16,
                                          fuselink_buffer_words=1))
        assert res.peak_fuselink_buffer_words == 0

    def test_transfer_stall_when_buffer_tight(self):
        # The first transfer's words stay parked until its cross-half consumer
        # starts (held up behind a slow task), so a tight buffer stalls the
        # second transfer until then.
        tasks = (
            rgb_task("a_slow", macs=800, level=0),
            depth_task("xfer_a", macs=0, move=64, level=0,
                       kind=TaskKind.FUSE_TRANSFER),
            rgb_task("c_r", macs=8, deps=("xfer_a", "a_slow"), level=1),
            depth_task("xfer_b", macs=0, move=64, level=2,
                       kind=TaskKind.FUSE_TRANSFER),
            depth_task("c_d", macs=8, deps=("xfer_b",), level=2),
        )
        graph = TaskGraph(tasks)
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16, fuselink_buffer_words=64)
        res = simulate(graph, None, cfg)
        # a_slow runs [0,100); xfer_a parks 64 words at cycle 0 until c_r
        # starts at 100; xfer_b is ready at cycle 4 but must wait out 96.
        assert res.array_stats("depth_half").transfer_stall_cycles == 96
        assert res.peak_fuselink_buffer_words == 64
        assert res.total_cycles == 105


class TestOracleEquivalence:
    def arch_matrix(self):
        return [
            arch(ArchMode.BASELINE, 16),
            arch(ArchMode.FUSE_MULTITASKING, 16),
            arch(ArchMode.BASELINE, 16, task_setup_cycles=3,
                 dram_bandwidth_words_per_cycle=2.0),
            arch(ArchMode.FUSE_MULTITASKING, 16, task_setup_cycles=3,
                 dram_bandwidth_words_per_cycle=2.0,
                 fuselink_bandwidth_words_per_cycle=8.0),
            arch(ArchMode.FUSE_MULTITASKING, 8, fuselink_buffer_words=256),
        ]

    def test_tiny2_graphs_match_cycle_stepper(self, tiny2):
        for dep in tiny2_deployments(tiny2).values():
            graph = build_taskgraph(tiny2, dep)
            assert len(graph.tasks) <= 8
            for cfg in self.arch_matrix():
                expected = step_simulate(graph, cfg)
                got = simulate(graph, tiny2, cfg).total_cycles
                assert got == expected, (dep.name, cfg.mode, cfg.task_setup_cycles)

    def test_hand_graphs_match_cycle_stepper(self):
        rng = random.Random(77)
        for trial in range(30):
            n = rng.randint(1, 6)
            tasks = []
            for i in range(n):
                deps = tuple(f"t{j}" for j in range(i) if rng.random() < 0.4)
                maker = rgb_task if rng.random() < 0.5 else depth_task
                tasks.append(maker(f"t{i}", macs=rng.randrange(0, 300),
                                   move=rng.randrange(0, 100), deps=deps,
                                   level=rng.randint(0, 3)))
            graph = TaskGraph(tuple(tasks))
            for cfg in self.arch_matrix()[:4]:
                expected = step_simulate(graph, cfg)
                got = simulate(graph, None, cfg).total_cycles
                assert got == expected, (trial, cfg.mode)


class TestTraceAndReplay:
    def test_replay_clean_for_all_tiny2_deployments(self, tiny2):
        for dep in tiny2_deployments(tiny2).values():
            graph = build_taskgraph(tiny2, dep)
            for mode in (ArchMode.BASELINE, ArchMode.FUSE_MULTITASKING):
                res = simulate(graph, tiny2, arch(mode, 16))
                assert replay_verify(graph, res.events) == []

    def test_trace_csv_roundtrip(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        graph = build_taskgraph(tiny2, dep)
        res = simulate(graph, tiny2, arch(ArchMode.FUSE_MULTITASKING, 16))
        text = trace_to_csv(res.events)
        assert text.splitlines()[0] == "task_id,array,start_cycle,end_cycle,kind"
        assert tuple(trace_from_csv(text)) == res.events

    def test_replay_detects_violation(self, tiny2):
        dep = tiny2_deployments(tiny2)["r2d"]
        graph = build_taskgraph(tiny2, dep)
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        events = list(res.events)
        # corrupt: move the last task before its dependency finishes
        bad = events[-1]
        events[-1] = type(bad)(bad.task_id, bad.array, 0, 1, bad.kind)
        problems = replay_verify(graph, events)
        assert problems and any("before its" in p or "overlaps" in p for p in problems)


class TestRunExperimentAndCompare:
    def gates_for(self, dep, scores):
        return GateVector(scores=tuple(scores),
                          link_ids=tuple(link.id for link in dep.links))

    def test_th_one_equals_empty(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        gates = self.gates_for(dep, (0.7, 0.3))
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16)
        pruned_all = run_experiment(tiny2, dep, cfg, gates=gates, th=1.0)
        empty = run_experiment(tiny2, Deployment("empty", ()), cfg)
        assert pruned_all.total_cycles == empty.total_cycles

    def test_th_zero_equals_full(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        gates = self.gates_for(dep, (0.7, 0.3))
        cfg = arch(ArchMode.FUSE_MULTITASKING, 16)
        assert run_experiment(tiny2, dep, cfg, gates=gates, th=0.0) \
            == run_experiment(tiny2, dep, cfg)

    def test_mid_threshold_selects_links(self, tiny2):
        fusenet = builtin_preset("fusenet_vgg16")
        dep = Deployment("three", (
            link_between(fusenet, Modality.RGB, 0, 1),
            link_between(fusenet, Modality.DEPTH, 0, 1),
            link_between(fusenet, Modality.RGB, 1, 2),
        ))
        gates = self.gates_for(dep, (0.9, 0.4, 0.6))
        cfg = arch(ArchMode.FUSE_MULTITASKING, 256)
        via_gates = run_experiment(fusenet, dep, cfg, gates=gates, th=0.5)
        explicit = run_experiment(
            fusenet, Deployment("three", (dep.links[0], dep.links[2])), cfg)
        assert via_gates.total_cycles == explicit.total_cycles

    def test_gates_without_threshold_rejected(self, tiny2):
        dep = tiny2_deployments(tiny2)["bi"]
        gates = self.gates_for(dep, (0.7, 0.3))
        with pytest.raises(ValidationError, match="threshold"):
            run_experiment(tiny2, dep, arch(), gates=gates)

    def test_compare_delta(self, tiny2):
        graph = build_taskgraph(tiny2, Deployment("empty", ()))
        base = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        fake_doc = base.to_doc()
        fake_doc["total_cycles"] = int(base.total_cycles * 0.8)
        faster = sim_result_from_doc(fake_doc)
        rows = compare([("baseline", base), ("split", faster)])
        assert rows[0]["delta_pct"] is None
        assert rows[1]["delta_pct"] == pytest.approx(-20.0, abs=0.1)

    def test_compare_identical_zero_delta(self, tiny2):
        graph = build_taskgraph(tiny2, Deployment("empty", ()))
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        rows = compare([("a", res), ("b", res)])
        assert rows[1]["delta_pct"] == 0.0

    def test_compare_three_results(self, tiny2):
        graph = build_taskgraph(tiny2, Deployment("empty", ()))
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        rows = compare([("a", res), ("b", res), ("c", res)])
        assert len(rows) == 3
        assert sum(1 for r in rows if r["delta_pct"] is not None) == 2

    def test_compare_needs_two(self, tiny2):
        graph = build_taskgraph(tiny2, Deployment("empty", ()))
        res = simulate(graph, tiny2, arch(ArchMode.BASELINE, 16))
        with pytest.raises(ValidationError, match="two results"):
            compare([("only", res)])


class TestArchConfig:
    def test_split_requires_even_cols(self):
        with pytest.raises(ValidationError, match="even"):
            ArchConfig(mode=ArchMode.FUSE_MULTITASKING, pe_rows=4, pe_cols=3)

    def test_rates_positive(self):
        with pytest.raises(ValidationError, match="bandwidth"):
            ArchConfig(dram_bandwidth_words_per_cycle=0)

    def test_fixed_fields(self):
        with pytest.raises(ValidationError, match="fixed"):
            ArchConfig(macs_per_pe_per_cycle=2)
        with pytest.raises(ValidationError, match="fixed"):
            ArchConfig(word_bytes=8)

    def test_dsp_total(self):
        cfg = ArchConfig(pe_rows=4, pe_cols=4, dsp_per_pe=5)
        assert cfg.dsp_total == 80

    def test_result_json_roundtrip(self, tiny2):
        graph = build_taskgraph(tiny2, tiny2_deployments(tiny2)["bi"])
        res = simulate(graph, tiny2, arch(ArchMode.FUSE_MULTITASKING, 16))
        again = sim_result_from_doc(res.to_doc())
        assert again.total_cycles == res.total_cycles
        assert again.per_array == res.per_array
        assert again.to_doc() == res.to_doc()

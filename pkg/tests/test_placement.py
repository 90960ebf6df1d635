"""Placement: cost model, feasibility, the three algorithms, replanning."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from infersub.core import (
    LinkDescriptor,
    MATCH_ALL,
    Mapping,
    NodeDescriptor,
    Pin,
    PipelineSpec,
    StageSpec,
    TopicFilter,
    Topology,
)
from infersub.errors import (
    InstanceTerminatedError,
    NoFeasiblePlacementError,
    SearchSpaceTooLargeError,
)
from infersub.placement import (
    Objective,
    Placement,
    WorkloadEntry,
    WorkloadSpec,
    cost,
    feasible,
    place_baseline_subscriber,
    place_oracle,
    place_upstream,
    replan,
)

from helpers import BENCH_TOPIC, assignment_nodes, line_to_core
from oracles import (
    gen_mixed_instance,
    line_chain_brute_force,
    line_chain_cost,
)


def two_node_setup(sel=Fraction(1, 2)):
    topo = Topology.of(
        [
            NodeDescriptor("p", "device", Fraction(4), Fraction(256)),
            NodeDescriptor("c", "cloud", Fraction(8), Fraction(2048)),
        ],
        [LinkDescriptor("p", "c", Fraction(2), Fraction(100))],
    )
    stage = StageSpec("s1", Mapping("identity"), Fraction(6), Fraction(16), sel)
    pipeline = PipelineSpec(
        "one", (stage,), (), {"s1": TopicFilter.parse(BENCH_TOPIC)}, "s1"
    )
    workload = WorkloadSpec({BENCH_TOPIC: WorkloadEntry(2048, Fraction(10))})
    return topo, pipeline, workload


def test_cost_hand_checked_single_stage():
    """2048 B at p, one stage at c, subscriber c: one 2 KB transfer."""
    topo, pipeline, workload = two_node_setup()
    o = Objective(Fraction(1), Fraction(1, 10))
    rep = cost(Placement({"s1": "c"}), pipeline, topo, workload, o, "p", "c")
    transfer = Fraction(2) + Fraction(2048, 1024) / Fraction(100)
    compute = Fraction(6) / Fraction(8)
    assert rep.latency_ms == transfer + compute
    assert rep.bytes_kb == Fraction(2048, 1024)
    assert rep.objective_value == o.value(rep.latency_ms, rep.bytes_kb)
    assert rep.feasible


def test_cost_counts_every_hop_and_the_tail():
    """Stage at p: the (smaller) output crosses to the subscriber instead."""
    topo, pipeline, workload = two_node_setup()
    o = Objective()
    rep = cost(Placement({"s1": "p"}), pipeline, topo, workload, o, "p", "c")
    compute = Fraction(6) / Fraction(4)
    tail = Fraction(2) + Fraction(1024, 1024) / Fraction(100)
    assert rep.latency_ms == compute + tail
    assert rep.bytes_kb == Fraction(1)


def test_cost_is_none_without_a_route():
    topo = Topology.of(
        [
            NodeDescriptor("p", "device", 4, 256),
            NodeDescriptor("x", "edge", 4, 256),
        ],
        [],
    )
    stage = StageSpec("s1", Mapping("identity"), 1, 1, 1)
    pipeline = PipelineSpec(
        "one", (stage,), (), {"s1": TopicFilter.parse(BENCH_TOPIC)}, "s1"
    )
    w = WorkloadSpec({BENCH_TOPIC: WorkloadEntry(100, 1)})
    rep = cost(Placement({"s1": "x"}), pipeline, topo, w, Objective(), "p", "p")
    assert rep.latency_ms is None and rep.bytes_kb is None
    assert not rep.feasible


def test_feasible_flags_memory_cpu_pins_accelerator():
    topo = Topology.of(
        [
            NodeDescriptor("p", "device", Fraction(1, 10), Fraction(10)),
            NodeDescriptor("c", "cloud", Fraction(8), Fraction(2048), True),
        ],
        [LinkDescriptor("p", "c", 1, 100)],
    )
    w = WorkloadSpec({BENCH_TOPIC: WorkloadEntry(100, Fraction(50))})

    heavy = StageSpec("s1", Mapping("identity"), Fraction(10), Fraction(64), 1)
    p1 = PipelineSpec("p1", (heavy,), (), {"s1": TopicFilter.parse(BENCH_TOPIC)}, "s1")
    rules = {v.rule for v in feasible(Placement({"s1": "p"}), p1, topo, w, "p", "c")}
    assert "MemoryExceeded" in rules or "CpuExceeded" in rules

    accel = StageSpec(
        "s1", Mapping("identity"), 0, 0, 1, needs_accelerator=True
    )
    p2 = PipelineSpec("p2", (accel,), (), {"s1": TopicFilter.parse(BENCH_TOPIC)}, "s1")
    rules = {v.rule for v in feasible(Placement({"s1": "p"}), p2, topo, w, "p", "c")}
    assert "AcceleratorMissing" in rules
    assert not feasible(Placement({"s1": "c"}), p2, topo, w, "p", "c")

    pinned = StageSpec("s1", Mapping("identity"), 0, 0, 1, pin=Pin.at_node("c"))
    p3 = PipelineSpec("p3", (pinned,), (), {"s1": TopicFilter.parse(BENCH_TOPIC)}, "s1")
    rules = {v.rule for v in feasible(Placement({"s1": "p"}), p3, topo, w, "p", "c")}
    assert "PinViolation" in rules


def test_objective_weight_validation():
    with pytest.raises(ValueError):
        Objective(Fraction(-1), Fraction(1))
    with pytest.raises(ValueError):
        Objective(Fraction(0), Fraction(0))
    assert Objective().beta == Fraction(1, 10)


# ---------------------------------------------------------------------------
# Randomized audits against the independent evaluator


@given(st.integers(0, 10**9))
@settings(max_examples=60)
def test_cost_matches_line_evaluator(seed):
    rng = random.Random(seed)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    n, k = len(inst.node_ids), len(inst.stages)
    combo = tuple(rng.randrange(n) for _ in range(k))
    rep = cost(Placement(assignment_nodes(inst, combo)), p, t, w, o, pub, sub)
    lat, kb = line_chain_cost(inst, combo)
    assert rep.latency_ms == lat
    assert rep.bytes_kb == kb
    assert rep.objective_value == o.value(lat, kb)


@given(st.integers(0, 10**9))
@settings(max_examples=40)
def test_oracle_never_beaten_by_random_assignments(seed):
    rng = random.Random(seed)
    inst = gen_mixed_instance(rng)
    if line_chain_brute_force(inst) is None:
        return
    p, t, w, o, pub, sub = line_to_core(inst)
    orc = place_oracle(p, t, w, o, pub, sub)
    best = cost(orc, p, t, w, o, pub, sub)
    assert best.feasible
    n, k = len(inst.node_ids), len(inst.stages)
    for _ in range(6):
        combo = tuple(rng.randrange(n) for _ in range(k))
        rep = cost(Placement(assignment_nodes(inst, combo)), p, t, w, o, pub, sub)
        if rep.feasible:
            assert rep.objective_value >= best.objective_value


@given(st.integers(0, 10**9))
@settings(max_examples=60)
def test_upstream_respects_pins_and_reports_feasible(seed):
    rng = random.Random(seed)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    try:
        pl = place_upstream(p, t, w, o, pub, sub)
    except NoFeasiblePlacementError:
        return  # the heuristic may honestly give up; it must never lie
    assert not feasible(pl, p, t, w, pub, sub)
    for i, (_, _, _, pin) in enumerate(inst.stages):
        if pin is not None:
            assert pl.assignment[f"s{i + 1}"] == inst.node_ids[pin]


def test_baseline_puts_unpinned_stages_at_subscriber():
    rng = random.Random(4)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    pl = place_baseline_subscriber(p, t, w, pub, sub)
    for i, (_, _, _, pin) in enumerate(inst.stages):
        want = inst.node_ids[pin] if pin is not None else sub
        assert pl.assignment[f"s{i + 1}"] == want


def test_cost_invariant_under_node_relabeling():
    rng = random.Random(99)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    pl = place_oracle(p, t, w, o, pub, sub)
    base = cost(pl, p, t, w, o, pub, sub)

    ren = {nid: f"zz-{nid}" for nid in t.nodes}
    topo2 = Topology.of(
        [
            NodeDescriptor(ren[n.node_id], n.tier, n.cpu_capacity, n.mem_mb,
                           n.has_accelerator, n.domain_id)
            for n in t.nodes.values()
        ],
        [
            LinkDescriptor(ren[l.a], ren[l.b], l.latency_ms, l.bandwidth_kb_per_ms)
            for l in t.links.values()
        ],
    )
    pl2 = Placement({sid: ren[n] for sid, n in pl.assignment.items()})
    rep2 = cost(pl2, p, topo2, w, o, ren[pub], ren[sub])
    assert rep2.objective_value == base.objective_value
    assert rep2.latency_ms == base.latency_ms
    assert rep2.bytes_kb == base.bytes_kb


# ---------------------------------------------------------------------------
# Replanning


@given(st.integers(0, 10**9))
@settings(max_examples=40)
def test_replan_moves_only_stages_on_failed_nodes(seed):
    rng = random.Random(seed)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    try:
        pl = place_upstream(p, t, w, o, pub, sub)
    except NoFeasiblePlacementError:
        return
    used = sorted(set(pl.assignment.values()) - {pub, sub})
    if not used:
        return
    failed = used[rng.randrange(len(used))]
    pinned_there = any(
        pin is not None and inst.node_ids[pin] == failed
        for _, _, _, pin in inst.stages
    )
    down = t.with_node_state(failed, up=False)
    try:
        moved = replan(pl, {failed}, p, down, w, o, pub, sub)
    except NoFeasiblePlacementError:
        assert pinned_there or True  # nowhere to go is a legal outcome
        return
    for sid, node in pl.assignment.items():
        if node != failed:
            assert moved.assignment[sid] == node
        else:
            assert moved.assignment[sid] != failed


def test_replan_terminates_when_an_endpoint_failed():
    rng = random.Random(12)
    inst = gen_mixed_instance(rng)
    p, t, w, o, pub, sub = line_to_core(inst)
    pl = place_baseline_subscriber(p, t, w, pub, sub)
    with pytest.raises(InstanceTerminatedError):
        replan(pl, {sub}, p, t, w, o, pub, sub)


def test_oracle_refuses_oversized_search_spaces():
    n = 12
    ids = [f"n{i}" for i in range(n)]
    nodes = [NodeDescriptor(i, "edge", 4, 10**6) for i in ids]
    links = [LinkDescriptor(ids[i], ids[i + 1], 1, 100) for i in range(n - 1)]
    topo = Topology.of(nodes, links)
    stages = tuple(
        StageSpec(f"s{i}", Mapping("identity"), 1, 1, 1) for i in range(1, 8)
    )
    p = PipelineSpec(
        "big",
        stages,
        tuple((f"s{i}", f"s{i + 1}") for i in range(1, 7)),
        {"s1": MATCH_ALL},
        "s7",
    )
    w = WorkloadSpec({BENCH_TOPIC: WorkloadEntry(100, 1)})
    with pytest.raises(SearchSpaceTooLargeError):
        place_oracle(p, topo, w, Objective(), ids[0], ids[-1])

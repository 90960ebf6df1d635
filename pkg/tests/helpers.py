"""Shared fixtures-in-code: instance bridging and scenario JSON builders."""

from __future__ import annotations

import json
from fractions import Fraction

from infersub.core import (
    LinkDescriptor,
    Mapping,
    NodeDescriptor,
    Pin,
    PipelineSpec,
    StageSpec,
    Topology,
    TopicFilter,
)
from infersub.placement import Objective, WorkloadEntry, WorkloadSpec
from infersub.scenario import Scenario, loads_scenario

from oracles import LineInstance

BENCH_TOPIC = "bench/in"


def line_to_core(
    inst: LineInstance,
) -> tuple[PipelineSpec, Topology, WorkloadSpec, Objective, str, str]:
    """Build the package-side view of a LineInstance."""
    nodes = [
        NodeDescriptor(
            node_id=inst.node_ids[i],
            tier="edge",
            cpu_capacity=inst.cpu[i],
            mem_mb=inst.mem[i],
        )
        for i in range(len(inst.node_ids))
    ]
    links = [
        LinkDescriptor(
            inst.node_ids[i],
            inst.node_ids[i + 1],
            latency_ms=inst.link_latency_ms[i],
            bandwidth_kb_per_ms=inst.link_bandwidth[i],
        )
        for i in range(len(inst.node_ids) - 1)
    ]
    topo = Topology.of(nodes, links)

    stages = []
    for i, (cost_ms, mem_mb, selectivity, pin) in enumerate(inst.stages, 1):
        stages.append(
            StageSpec(
                stage_id=f"s{i}",
                kind=Mapping("identity"),
                compute_cost=cost_ms,
                mem_mb=mem_mb,
                selectivity=selectivity,
                pin=(
                    Pin.at_node(inst.node_ids[pin])
                    if pin is not None
                    else Pin.unpinned()
                ),
            )
        )
    pipeline = PipelineSpec(
        pipeline_id="bench",
        stages=tuple(stages),
        edges=tuple(
            (stages[i].stage_id, stages[i + 1].stage_id)
            for i in range(len(stages) - 1)
        ),
        source_bindings={stages[0].stage_id: TopicFilter.parse(BENCH_TOPIC)},
        sink=stages[-1].stage_id,
    )
    workload = WorkloadSpec(
        {BENCH_TOPIC: WorkloadEntry(inst.input_size, inst.rate_per_s)}
    )
    objective = Objective(inst.alpha, inst.beta)
    publisher = inst.node_ids[inst.publisher]
    subscriber = inst.node_ids[inst.subscriber]
    return pipeline, topo, workload, objective, publisher, subscriber


def assignment_nodes(
    inst: LineInstance, combo: tuple[int, ...]
) -> dict[str, str]:
    return {
        f"s{i + 1}": inst.node_ids[combo[i]] for i in range(len(inst.stages))
    }


# ---------------------------------------------------------------------------
# Scenario builders (JSON-first so the loader is always on the path)


def node(node_id, tier, cpu, mem, domain, accelerator=False):
    d = {
        "node_id": node_id,
        "tier": tier,
        "cpu_capacity": cpu,
        "mem_mb": mem,
        "domain_id": domain,
    }
    if accelerator:
        d["has_accelerator"] = True
    return d


def link(a, b, latency_ms, bandwidth):
    return {
        "a": a,
        "b": b,
        "latency_ms": latency_ms,
        "bandwidth_kb_per_ms": bandwidth,
    }


def build_scenario(
    *,
    nodes,
    links,
    brokers,
    models=(),
    bindings=None,
    subscriptions=(),
    workload=None,
    faults=(),
    objective=None,
    sim=None,
    peers=(),
) -> Scenario:
    doc = {
        "topology": {
            "nodes": list(nodes),
            "links": list(links),
            "brokers": dict(brokers),
        },
        "models": list(models),
        "bindings": dict(bindings or {}),
        "subscriptions": list(subscriptions),
        "workload": dict(workload or {}),
        "faults": list(faults),
        "objective": dict(objective or {}),
        "sim": dict(sim or {"duration_ms": 10000, "seed": 1}),
    }
    if peers:
        doc["topology"]["peers"] = list(peers)
    return loads_scenario(json.dumps(doc))


def star_scenario(fanout: int, *, count: int = 20, seed: int = 5) -> Scenario:
    """One publisher, one broker hub, `fanout` identical inference
    subscriptions at one monitor node."""
    return build_scenario(
        nodes=[
            node("pub", "device", 8, 512, "hub"),
            node("h", "edge", 16, 2048, "hub"),
            node("mon", "edge", 16, 2048, "hub"),
        ],
        links=[link("pub", "h", 2, 200), link("h", "mon", 2, 200)],
        brokers={"hub": "h"},
        models=[
            {
                "model_id": "shared",
                "version": 1,
                "task_tag": "telemetry",
                "domain_id": "hub",
                "layers": [
                    {"compute_cost": 2, "mem_mb": 64, "selectivity": 0.5},
                    {"compute_cost": 2, "mem_mb": 64, "selectivity": 0.5},
                ],
            }
        ],
        bindings={"hub/pub/t": "pub"},
        subscriptions=[
            {
                "sub_id": f"s{i:02d}",
                "subscriber": "mon",
                "kind": "inference",
                "model_id": "shared",
                "filter": "hub/pub/t",
                "k": 2,
            }
            for i in range(1, fanout + 1)
        ],
        workload={
            "hub/pub/t": {
                "size_bytes": 1024,
                "rate_per_s": 10,
                "periodic": True,
                "count": count,
            }
        },
        sim={"duration_ms": 6000, "seed": seed},
    )


def barrier_scenario(count_a: int, count_b: int, *, seed: int = 9) -> Scenario:
    """Two phase-offset periodic inputs joined by a barrier funnel."""
    return build_scenario(
        nodes=[
            node("a", "device", 8, 256, "lab"),
            node("b", "device", 8, 256, "lab"),
            node("h", "edge", 16, 2048, "lab"),
            node("s", "edge", 8, 1024, "lab"),
        ],
        links=[
            link("a", "h", 1, 500),
            link("b", "h", 1, 500),
            link("h", "s", 1, 500),
        ],
        brokers={"lab": "h"},
        models=[
            {
                "model_id": "pair",
                "version": 1,
                "task_tag": "telemetry",
                "domain_id": "lab",
                "layers": [
                    {"compute_cost": 1, "mem_mb": 32, "selectivity": 1}
                ],
            }
        ],
        bindings={"lab/a/x": "a", "lab/b/x": "b"},
        subscriptions=[
            {
                "sub_id": "joined",
                "subscriber": "s",
                "kind": "inference",
                "model_id": "pair",
                "filter": "lab/+/x",
                "k": 1,
            }
        ],
        workload={
            "lab/a/x": {
                "size_bytes": 256,
                "rate_per_s": 10,
                "periodic": True,
                "count": count_a,
            },
            "lab/b/x": {
                "size_bytes": 256,
                "rate_per_s": 10,
                "periodic": True,
                "start_ms": 50,
                "count": count_b,
            },
        },
        sim={"duration_ms": 4000, "seed": seed},
    )


def count_window_scenario(pubs: int, n: int, *, seed: int = 13) -> Scenario:
    """Single input through a count-window funnel."""
    return build_scenario(
        nodes=[
            node("p", "device", 8, 256, "lab"),
            node("h", "edge", 16, 2048, "lab"),
            node("s", "edge", 8, 1024, "lab"),
        ],
        links=[link("p", "h", 1, 500), link("h", "s", 1, 500)],
        brokers={"lab": "h"},
        models=[
            {
                "model_id": "acc",
                "version": 1,
                "task_tag": "telemetry",
                "domain_id": "lab",
                "layers": [
                    {"compute_cost": 1, "mem_mb": 32, "selectivity": 1}
                ],
            }
        ],
        bindings={"lab/p/x": "p"},
        subscriptions=[
            {
                "sub_id": "batched",
                "subscriber": "s",
                "kind": "inference",
                "model_id": "acc",
                "filter": "lab/p/x",
                "k": 1,
                "trigger": {"kind": "count", "n": n},
            }
        ],
        workload={
            "lab/p/x": {
                "size_bytes": 256,
                "rate_per_s": 20,
                "periodic": True,
                "count": pubs,
            }
        },
        sim={"duration_ms": 4000, "seed": seed},
    )


def time_window_scenario(pubs: int, delta_ms: int, *, seed: int = 17) -> Scenario:
    return build_scenario(
        nodes=[
            node("p", "device", 8, 256, "lab"),
            node("h", "edge", 16, 2048, "lab"),
            node("s", "edge", 8, 1024, "lab"),
        ],
        links=[link("p", "h", 1, 500), link("h", "s", 1, 500)],
        brokers={"lab": "h"},
        models=[
            {
                "model_id": "win",
                "version": 1,
                "task_tag": "telemetry",
                "domain_id": "lab",
                "layers": [
                    {"compute_cost": 1, "mem_mb": 32, "selectivity": 0.5}
                ],
            }
        ],
        bindings={"lab/p/x": "p"},
        subscriptions=[
            {
                "sub_id": "windowed",
                "subscriber": "s",
                "kind": "inference",
                "model_id": "win",
                "filter": "lab/p/x",
                "k": 1,
                "trigger": {"kind": "time", "delta_ms": delta_ms},
            }
        ],
        workload={
            "lab/p/x": {
                "size_bytes": 512,
                "rate_per_s": 10,
                "periodic": True,
                "count": pubs,
            }
        },
        sim={"duration_ms": 4000, "seed": seed},
    )


def trainer_scenario(*, fault_at_ms: float | None = 144, seed: int = 29) -> Scenario:
    """Three trainers feeding rounds of deltas; one mid-route node killed
    between a delivery and its ack so the replay path gets exercised."""
    faults = []
    if fault_at_ms is not None:
        faults.append({"at_ms": fault_at_ms, "kind": "node_down", "node": "m"})
    return build_scenario(
        nodes=[
            node("t1", "device", 8, 256, "fl"),
            node("t2", "device", 8, 256, "fl"),
            node("t3", "device", 8, 256, "fl"),
            node("b", "edge", 16, 2048, "fl"),
            node("m", "edge", 8, 1024, "fl"),
            node("r", "edge", 8, 1024, "fl"),
            node("s", "device", 8, 256, "fl"),
        ],
        links=[
            link("t1", "b", 1, 500),
            link("t2", "b", 1, 500),
            link("t3", "b", 1, 500),
            link("b", "m", 1, 500),
            link("m", "s", 1, 500),
            link("b", "r", 2, 300),
            link("r", "s", 2, 300),
        ],
        brokers={"fl": "b"},
        models=[
            {
                "model_id": "fed",
                "version": 1,
                "task_tag": "text",
                "domain_id": "fl",
                "trainers": ["t1", "t2", "t3"],
                "params": [0, 0, 0, 0],
                "layers": [
                    {"compute_cost": 1, "mem_mb": 16, "selectivity": 1}
                ],
            }
        ],
        bindings={
            "_updates/fed/t1": "t1",
            "_updates/fed/t2": "t2",
            "_updates/fed/t3": "t3",
        },
        subscriptions=[
            {
                "sub_id": "upd-s",
                "subscriber": "s",
                "kind": "model_update",
                "model_id": "fed",
            }
        ],
        workload={
            "_updates/fed/t1": {
                "size_bytes": 64,
                "rate_per_s": 1,
                "periodic": True,
                "start_ms": 100,
                "count": 3,
                "payload": [1, 2, 3, 4],
            },
            "_updates/fed/t2": {
                "size_bytes": 64,
                "rate_per_s": 1,
                "periodic": True,
                "start_ms": 120,
                "count": 3,
                "payload": [2, 3, 4, 5],
            },
            "_updates/fed/t3": {
                "size_bytes": 64,
                "rate_per_s": 1,
                "periodic": True,
                "start_ms": 140,
                "count": 3,
                "payload": [3, 4, 5, 6],
            },
        },
        faults=faults,
        sim={"duration_ms": 5000, "seed": seed},
    )


def two_publisher_scenario(extra_topic: bool, *, seed: int = 37) -> Scenario:
    """Two disjoint publisher/subscriber pairs through one hub; the second
    pair can be switched off to probe workload substream independence."""
    bindings = {"iso/p1/x": "p1"}
    subs = [
        {
            "sub_id": "tap1",
            "subscriber": "s1",
            "kind": "data",
            "filter": "iso/p1/x",
        }
    ]
    workload = {
        "iso/p1/x": {"size_bytes": 512, "rate_per_s": 20, "count": 30}
    }
    if extra_topic:
        bindings["iso/p2/y"] = "p2"
        subs.append(
            {
                "sub_id": "tap2",
                "subscriber": "s2",
                "kind": "data",
                "filter": "iso/p2/y",
            }
        )
        workload["iso/p2/y"] = {
            "size_bytes": 2048,
            "rate_per_s": 35,
            "count": 40,
        }
    return build_scenario(
        nodes=[
            node("p1", "device", 8, 256, "iso"),
            node("p2", "device", 8, 256, "iso"),
            node("c", "edge", 16, 2048, "iso"),
            node("s1", "device", 8, 256, "iso"),
            node("s2", "device", 8, 256, "iso"),
        ],
        links=[
            link("p1", "c", 1, 400),
            link("p2", "c", 1, 400),
            link("c", "s1", 1, 400),
            link("c", "s2", 1, 400),
        ],
        brokers={"iso": "c"},
        bindings=bindings,
        subscriptions=subs,
        workload=workload,
        sim={"duration_ms": 8000, "seed": seed},
    )


def fraction_str(v: Fraction) -> str:
    return f"{v.numerator}/{v.denominator}"

"""Stage-to-node assignment: cost model, oracle, upstream heuristic, replanning."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import TYPE_CHECKING, Sequence, Union

from .core import (
    Barrier,
    CountWindow,
    Funnel,
    PipelineSpec,
    StageSpec,
    TimeWindow,
    Topic,
    TopicFilter,
    Topology,
    Violation,
    as_ratio,
    match_filter,
    route,
    scaled_size,
)
from .errors import (
    InstanceTerminatedError,
    NoFeasiblePlacementError,
    NoRouteError,
    SearchSpaceTooLargeError,
)

if TYPE_CHECKING:
    from .broker import PipelineInstance

ORACLE_BOUND = 1_000_000

# publisher context for a pipeline: one node id, or one per entry stage
Publishers = Union[str, dict[str, str]]


@dataclass(frozen=True)
class Objective:
    """J = alpha * latency_ms + beta * bytes_kb."""

    alpha: Fraction = Fraction(1)
    beta: Fraction = Fraction(1, 10)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", as_ratio(self.alpha))
        object.__setattr__(self, "beta", as_ratio(self.beta))
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("objective: weights must be >= 0")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("objective: weights cannot both be zero")

    def value(self, latency_ms: Fraction, bytes_kb: Fraction) -> Fraction:
        return self.alpha * latency_ms + self.beta * bytes_kb


@dataclass(frozen=True)
class WorkloadEntry:
    """Per-topic input description. Only size and rate matter to placement;
    the remaining fields drive the simulator's publication generator."""

    size_bytes: int
    rate_per_s: Fraction
    periodic: bool = False
    payload: tuple[float, ...] = (1.0,)
    start_ms: int = 0
    count: int | None = None
    semantic_tag: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate_per_s", as_ratio(self.rate_per_s))
        object.__setattr__(self, "payload", tuple(float(v) for v in self.payload))
        if self.size_bytes < 1:
            raise ValueError("workload: size_bytes must be >= 1")
        if self.rate_per_s <= 0:
            raise ValueError("workload: rate_per_s must be > 0")
        if self.start_ms < 0:
            raise ValueError("workload: start_ms must be >= 0")
        if self.count is not None and self.count < 0:
            raise ValueError("workload: count must be >= 0")


@dataclass(frozen=True, eq=False)
class WorkloadSpec:
    topics: dict[str, WorkloadEntry]

    def matching(self, filter: TopicFilter) -> list[str]:
        return sorted(
            name
            for name in self.topics
            if match_filter(filter, Topic.parse(name))
        )


@dataclass(frozen=True, eq=False)
class Placement:
    """Total map stage_id -> node_id for one pipeline instance."""

    assignment: dict[str, str]

    def node_of(self, stage_id: str) -> str:
        return self.assignment[stage_id]


@dataclass(frozen=True)
class CostReport:
    """Per-publication latency and traffic of a placement.

    bytes_kb counts each link hop separately (a 2-hop transfer of 10 KB costs
    20 KB); 1 KB = 1024 bytes. All three numbers are None when some required
    route is missing.
    """

    latency_ms: Fraction | None
    bytes_kb: Fraction | None
    objective_value: Fraction | None
    feasible: bool
    violations: tuple[Violation, ...] = ()


# ---------------------------------------------------------------------------
# Size and rate propagation


def _propagate_sizes(p: PipelineSpec, entry_sizes: dict[str, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for sid in p.topo_order():
        stage = p.stage(sid)
        preds = p.preds(sid)
        if not preds:
            incoming = entry_sizes[sid]
        elif isinstance(stage.kind, Funnel):
            incoming = sum(out[q] for q in preds)
        else:
            incoming = max(out[q] for q in preds)
        out[sid] = scaled_size(incoming, stage.selectivity)
    return out


def stage_sizes(p: PipelineSpec, input_size: int) -> dict[str, int]:
    """Output size per stage for a uniform input_size at every entry."""
    return _propagate_sizes(p, {sid: input_size for sid in p.entry_ids()})


def _propagate_rates(
    p: PipelineSpec, entry_rates: dict[str, Fraction]
) -> dict[str, Fraction]:
    """Publications per 1000 ms emitted by each stage (filters counted as
    pass-through, the conservative bound for cpu budgeting)."""
    out: dict[str, Fraction] = {}
    for sid in p.topo_order():
        stage = p.stage(sid)
        preds = p.preds(sid)
        if not preds:
            out[sid] = entry_rates[sid]
        elif isinstance(stage.kind, Funnel):
            trigger = stage.kind.trigger
            if isinstance(trigger, Barrier):
                out[sid] = min(out[q] for q in preds)
            elif isinstance(trigger, CountWindow):
                out[sid] = sum((out[q] for q in preds), Fraction(0)) / trigger.n
            else:
                assert isinstance(trigger, TimeWindow)
                out[sid] = Fraction(1000, trigger.delta_ms)
        else:
            out[sid] = sum((out[q] for q in preds), Fraction(0))
    return out


def entry_workload(
    p: PipelineSpec, w: WorkloadSpec
) -> tuple[dict[str, int], dict[str, Fraction], list[Violation]]:
    """(entry sizes, entry rates, violations) from each entry's topic binding.

    Several matching topics combine as max size and summed rate.
    """
    sizes: dict[str, int] = {}
    rates: dict[str, Fraction] = {}
    violations: list[Violation] = []
    for sid in sorted(p.entry_ids()):
        names = w.matching(p.source_bindings[sid]) if sid in p.source_bindings else []
        if not names:
            violations.append(Violation("WorkloadMissing", sid))
            sizes[sid] = 1
            rates[sid] = Fraction(0)
            continue
        sizes[sid] = max(w.topics[n].size_bytes for n in names)
        rates[sid] = sum((w.topics[n].rate_per_s for n in names), Fraction(0))
    return sizes, rates, violations


def _publishers_by_entry(p: PipelineSpec, publisher: Publishers) -> dict[str, str]:
    if isinstance(publisher, str):
        return {sid: publisher for sid in p.entry_ids()}
    return dict(publisher)


def _anchor_publisher(p: PipelineSpec, sid: str, pubs: dict[str, str]) -> str:
    """The publisher feeding a stage: its own for entries, otherwise the
    lexicographically smallest over its entry ancestry."""
    if sid in pubs:
        return pubs[sid]
    seen: set[str] = set()
    frontier = [sid]
    found: set[str] = set()
    while frontier:
        cur = frontier.pop()
        if cur in seen:
            continue
        seen.add(cur)
        preds = p.preds(cur)
        if not preds and cur in pubs:
            found.add(pubs[cur])
        frontier.extend(preds)
    if not found:
        raise KeyError(f"no publisher reaches stage {sid}")
    return min(found)


# ---------------------------------------------------------------------------
# Route cache


class _Routes:
    """Memoized routing over one topology snapshot."""

    def __init__(self, t: Topology) -> None:
        self.t = t
        self._paths: dict[tuple[str, str], list[str] | None] = {}

    def path(self, a: str, b: str) -> list[str] | None:
        key = (a, b)
        if key not in self._paths:
            try:
                self._paths[key] = route(self.t, a, b)
            except NoRouteError:
                self._paths[key] = None
        return self._paths[key]

    def latency_hops(self, a: str, b: str) -> tuple[Fraction, int] | None:
        path = self.path(a, b)
        if path is None:
            return None
        total = Fraction(0)
        for x, y in zip(path, path[1:]):
            link = self.t.link_between(x, y)
            assert link is not None
            total += link.latency_ms
        return total, len(path) - 1

    def transfer_ms(self, a: str, b: str, size_bytes: int) -> Fraction | None:
        """Per-hop latency plus size/bandwidth along the route."""
        path = self.path(a, b)
        if path is None:
            return None
        total = Fraction(0)
        kb = Fraction(size_bytes, 1024)
        for x, y in zip(path, path[1:]):
            link = self.t.link_between(x, y)
            assert link is not None
            total += link.latency_ms + kb / link.bandwidth_kb_per_ms
        return total

    def hop_kb(self, a: str, b: str, size_bytes: int) -> Fraction | None:
        got = self.latency_hops(a, b)
        if got is None:
            return None
        return Fraction(size_bytes, 1024) * got[1]


# ---------------------------------------------------------------------------
# Feasibility and cost


def feasible(
    pl: Placement,
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    publisher: Publishers | None = None,
    subscriber: str | None = None,
) -> list[Violation]:
    """Resource, pin and route violations of a placement; empty means feasible.

    Publisher/subscriber pins are only checkable when that context is given.
    """
    out: list[Violation] = []
    pubs = _publishers_by_entry(p, publisher) if publisher is not None else None
    assigned = pl.assignment

    for s in p.stages:
        if s.stage_id not in assigned:
            out.append(Violation("Unassigned", s.stage_id))
    if out:
        return sorted(out)

    for s in p.stages:
        node_id = assigned[s.stage_id]
        if node_id not in t.nodes:
            out.append(Violation("NodeMissing", s.stage_id, node_id))
            continue
        if not t.is_node_up(node_id):
            out.append(Violation("NodeDown", s.stage_id, node_id))
        if s.needs_accelerator and not t.node(node_id).has_accelerator:
            out.append(Violation("AcceleratorMissing", s.stage_id, node_id))
        pin = s.pin
        if pin.kind == "node" and node_id != pin.node_id:
            out.append(Violation("PinViolation", s.stage_id, f"pinned {pin.node_id}"))
        elif pin.kind == "publisher" and pubs is not None:
            want = _anchor_publisher(p, s.stage_id, pubs)
            if node_id != want:
                out.append(Violation("PinViolation", s.stage_id, f"pinned {want}"))
        elif pin.kind == "subscriber" and subscriber is not None:
            if node_id != subscriber:
                out.append(
                    Violation("PinViolation", s.stage_id, f"pinned {subscriber}")
                )
    if any(v.rule == "NodeMissing" for v in out):
        return sorted(out)

    entry_sizes, entry_rates, wl_violations = entry_workload(p, w)
    out.extend(wl_violations)
    rates = _propagate_rates(p, entry_rates)

    per_node: dict[str, list[StageSpec]] = {}
    for s in p.stages:
        per_node.setdefault(assigned[s.stage_id], []).append(s)
    for node_id in sorted(per_node):
        node = t.node(node_id)
        stages = per_node[node_id]
        mem = sum((s.mem_mb for s in stages), Fraction(0))
        if mem > node.mem_mb:
            out.append(
                Violation("MemoryExceeded", node_id, f"{mem} > {node.mem_mb}")
            )
        load = sum(
            (s.compute_cost * rates[s.stage_id] / 1000 for s in stages), Fraction(0)
        )
        if load > node.cpu_capacity:
            out.append(
                Violation("CpuExceeded", node_id, f"{load} > {node.cpu_capacity}")
            )

    routes = _Routes(t)
    hops: list[tuple[str, str]] = []
    for a, b in p.edges:
        hops.append((assigned[a], assigned[b]))
    if pubs is not None:
        for sid in p.entry_ids():
            hops.append((pubs[sid], assigned[sid]))
    if subscriber is not None:
        hops.append((assigned[p.sink], subscriber))
    for a, b in hops:
        if a != b and routes.path(a, b) is None:
            out.append(Violation("RouteMissing", f"{a}->{b}"))
    return sorted(set(out))


def _cost_cached(
    pl: Placement,
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    publisher: Publishers,
    subscriber: str,
    routes: _Routes,
) -> CostReport:
    violations = tuple(feasible(pl, p, t, w, publisher, subscriber))
    pubs = _publishers_by_entry(p, publisher)
    assigned = pl.assignment
    if any(v.rule in ("Unassigned", "NodeMissing", "RouteMissing") for v in violations):
        return CostReport(None, None, None, False, violations)

    entry_sizes, _, _ = entry_workload(p, w)
    sizes = _propagate_sizes(p, entry_sizes)

    bytes_kb = Fraction(0)
    finish: dict[str, Fraction] = {}
    for sid in p.topo_order():
        stage = p.stage(sid)
        node_id = assigned[sid]
        preds = p.preds(sid)
        arrival = Fraction(0)
        if not preds:
            tm = routes.transfer_ms(pubs[sid], node_id, entry_sizes[sid])
            if tm is None:
                return CostReport(None, None, None, False, violations)
            arrival = tm
            kb = routes.hop_kb(pubs[sid], node_id, entry_sizes[sid])
            bytes_kb += kb if kb is not None else Fraction(0)
        else:
            for q in preds:
                tm = routes.transfer_ms(assigned[q], node_id, sizes[q])
                if tm is None:
                    return CostReport(None, None, None, False, violations)
                arrival = max(arrival, finish[q] + tm)
        finish[sid] = arrival + stage.compute_cost / t.node(node_id).cpu_capacity

    for a, b in p.edges:
        kb = routes.hop_kb(assigned[a], assigned[b], sizes[a])
        bytes_kb += kb if kb is not None else Fraction(0)

    sink_node = assigned[p.sink]
    tail = routes.transfer_ms(sink_node, subscriber, sizes[p.sink])
    if tail is None:
        return CostReport(None, None, None, False, violations)
    latency = finish[p.sink] + tail
    kb = routes.hop_kb(sink_node, subscriber, sizes[p.sink])
    bytes_kb += kb if kb is not None else Fraction(0)

    return CostReport(
        latency_ms=latency,
        bytes_kb=bytes_kb,
        objective_value=o.value(latency, bytes_kb),
        feasible=not violations,
        violations=violations,
    )


def cost(
    pl: Placement,
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    publisher: Publishers,
    subscriber: str,
) -> CostReport:
    """Critical-path latency and per-hop KB for one publication through pl.

    Latency sums entry transfer, per-stage compute (cost / cpu_capacity),
    inter-stage transfers, and the final transfer to the subscriber, along the
    longest path of the DAG.
    """
    return _cost_cached(pl, p, t, w, o, publisher, subscriber, _Routes(t))


# ---------------------------------------------------------------------------
# Placement algorithms


def _resolve_pins(
    p: PipelineSpec, pubs: dict[str, str], subscriber: str
) -> dict[str, str]:
    fixed: dict[str, str] = {}
    for s in p.stages:
        if s.pin.kind == "node":
            assert s.pin.node_id is not None
            fixed[s.stage_id] = s.pin.node_id
        elif s.pin.kind == "publisher":
            fixed[s.stage_id] = _anchor_publisher(p, s.stage_id, pubs)
        elif s.pin.kind == "subscriber":
            fixed[s.stage_id] = subscriber
    return fixed


def _upstream_rank(routes: _Routes, subscriber: str, node_id: str) -> tuple:
    """Sort key placing more-upstream nodes (farther from the subscriber)
    first; unroutable nodes last."""
    got = routes.latency_hops(node_id, subscriber)
    if got is None:
        return (0, Fraction(0), 0, node_id)
    lat, hops = got
    return (-1, -lat, -hops, node_id)


def _downstreamness(routes: _Routes, subscriber: str, node_id: str) -> tuple:
    """Totally ordered proxy for position along the flow toward the
    subscriber; smaller means closer to the subscriber."""
    got = routes.latency_hops(node_id, subscriber)
    if got is None:
        return (1, Fraction(0), 0)
    lat, hops = got
    return (0, lat, hops)


def _not_upstream_of(
    routes: _Routes, subscriber: str, candidate: str, reference: str
) -> bool:
    """candidate is at or downstream of reference (toward the subscriber)."""
    return _downstreamness(routes, subscriber, candidate) <= _downstreamness(
        routes, subscriber, reference
    )


def place_oracle(
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    publisher: Publishers,
    subscriber: str,
) -> Placement:
    """Exhaustive minimum-objective placement of all unpinned stages.

    Ties prefer more upstream assignments: lexicographically by stage order on
    (distance from the stage's publisher, node id).
    """
    pubs = _publishers_by_entry(p, publisher)
    fixed = _resolve_pins(p, pubs, subscriber)
    unpinned = [s.stage_id for s in p.stages if s.stage_id not in fixed]
    candidates = sorted(n for n in t.nodes if t.is_node_up(n))
    space = len(candidates) ** len(unpinned) if unpinned else 1
    if space > ORACLE_BOUND:
        raise SearchSpaceTooLargeError(space, ORACLE_BOUND)

    routes = _Routes(t)

    def upstream_key(assignment: dict[str, str]) -> tuple:
        key = []
        for s in p.stages:
            node_id = assignment[s.stage_id]
            anchor = _anchor_publisher(p, s.stage_id, pubs)
            got = routes.latency_hops(anchor, node_id)
            if got is None:
                key.append((1, Fraction(0), 0, node_id))
            else:
                key.append((0, got[0], got[1], node_id))
        return tuple(key)

    best: tuple | None = None
    best_assignment: dict[str, str] | None = None
    for combo in product(candidates, repeat=len(unpinned)):
        assignment = dict(fixed)
        assignment.update(zip(unpinned, combo))
        pl = Placement(assignment)
        report = _cost_cached(pl, p, t, w, o, publisher, subscriber, routes)
        if not report.feasible:
            continue
        assert report.objective_value is not None
        key = (report.objective_value, upstream_key(assignment))
        if best is None or key < best:
            best = key
            best_assignment = assignment
    if best_assignment is None:
        raise NoFeasiblePlacementError(p.pipeline_id)
    return Placement(best_assignment)


def _route_candidates(
    routes: _Routes, pubs: dict[str, str], subscriber: str
) -> list[str]:
    """Union of publisher->subscriber route nodes, most upstream first."""
    seen: set[str] = set()
    for pub in sorted(set(pubs.values())):
        path = routes.path(pub, subscriber)
        if path is None:
            raise NoFeasiblePlacementError(f"no route {pub}->{subscriber}")
        seen.update(path)
    return sorted(seen, key=lambda n: _upstream_rank(routes, subscriber, n))


def _upstream_with_fixed(
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    pubs: dict[str, str],
    subscriber: str,
    fixed: dict[str, str],
    movable: list[str],
) -> Placement:
    """Greedy most-upstream assignment of movable stages plus local search.

    Movable stages may only sit at or downstream of their predecessors along
    the route ordering; fixed assignments are never touched.
    """
    routes = _Routes(t)
    candidates = _route_candidates(routes, pubs, subscriber)
    movable_set = set(movable)
    assignment = dict(fixed)

    _, entry_rates, _ = entry_workload(p, w)
    rates = _propagate_rates(p, entry_rates)

    def mem_cpu_ok(assigned: dict[str, str]) -> bool:
        """Memory and cpu budgets over the stages assigned so far."""
        per_node: dict[str, list[StageSpec]] = {}
        for sid2, node2 in assigned.items():
            per_node.setdefault(node2, []).append(p.stage(sid2))
        for node2, stages2 in per_node.items():
            node = t.node(node2)
            if sum((s.mem_mb for s in stages2), Fraction(0)) > node.mem_mb:
                return False
            load = sum(
                (s.compute_cost * rates[s.stage_id] / 1000 for s in stages2),
                Fraction(0),
            )
            if load > node.cpu_capacity:
                return False
        return True

    for sid in p.topo_order():
        if sid not in movable_set:
            continue
        stage = p.stage(sid)
        chosen = None
        for cand in candidates:
            if not t.is_node_up(cand):
                continue
            ok = all(
                _not_upstream_of(routes, subscriber, cand, assignment[q])
                for q in p.preds(sid)
                if q in assignment
            )
            if not ok:
                continue
            if stage.needs_accelerator and not t.node(cand).has_accelerator:
                continue
            trial = dict(assignment)
            trial[sid] = cand
            if mem_cpu_ok(trial):
                chosen = cand
                break
        if chosen is None:
            raise NoFeasiblePlacementError(f"{p.pipeline_id}: stage {sid}")
        assignment[sid] = chosen

    full = Placement(assignment)
    report = _cost_cached(full, p, t, w, o, pubs, subscriber, routes)
    if not report.feasible:
        raise NoFeasiblePlacementError(
            f"{p.pipeline_id}: {[v.rule for v in report.violations]}"
        )
    assert report.objective_value is not None
    current = report.objective_value

    max_moves = 100 * len(p.stages)
    moves = 0
    improved = True
    while improved and moves < max_moves:
        improved = False
        for sid in p.topo_order():
            if sid not in movable_set or moves >= max_moves:
                continue
            here = assignment[sid]
            best_key: tuple | None = None
            best_node: str | None = None
            for cand in candidates:
                if cand == here or not t.is_node_up(cand):
                    continue
                ok = all(
                    _not_upstream_of(routes, subscriber, cand, assignment[q])
                    for q in p.preds(sid)
                    if q in assignment
                ) and all(
                    _not_upstream_of(routes, subscriber, assignment[q], cand)
                    for q in p.succs(sid)
                    if q in assignment
                )
                if not ok:
                    continue
                trial = dict(assignment)
                trial[sid] = cand
                trial_report = _cost_cached(
                    Placement(trial), p, t, w, o, pubs, subscriber, routes
                )
                if not trial_report.feasible:
                    continue
                assert trial_report.objective_value is not None
                if trial_report.objective_value >= current:
                    continue
                key = (
                    trial_report.objective_value,
                    _upstream_rank(routes, subscriber, cand),
                )
                if best_key is None or key < best_key:
                    best_key = key
                    best_node = cand
            if best_node is not None and best_key is not None:
                assignment[sid] = best_node
                current = best_key[0]
                moves += 1
                improved = True
    return Placement(assignment)


def place_upstream(
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    publisher: Publishers,
    subscriber: str,
) -> Placement:
    """Balanced-upstream heuristic over the publisher->subscriber route."""
    pubs = _publishers_by_entry(p, publisher)
    fixed = _resolve_pins(p, pubs, subscriber)
    movable = [s.stage_id for s in p.stages if s.stage_id not in fixed]
    pl = _upstream_with_fixed(p, t, w, o, pubs, subscriber, fixed, movable)
    bad = feasible(pl, p, t, w, pubs, subscriber)
    if bad:
        raise NoFeasiblePlacementError(f"{p.pipeline_id}: {[v.rule for v in bad]}")
    return pl


def place_baseline_subscriber(
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    publisher: Publishers,
    subscriber: str,
) -> Placement:
    """Everything unpinned at the subscriber; feasibility not required."""
    pubs = _publishers_by_entry(p, publisher)
    fixed = _resolve_pins(p, pubs, subscriber)
    assignment = {
        s.stage_id: fixed.get(s.stage_id, subscriber) for s in p.stages
    }
    return Placement(assignment)


def replan(
    pl: Placement,
    failed: set[str],
    p: PipelineSpec,
    t: Topology,
    w: WorkloadSpec,
    o: Objective,
    publisher: Publishers,
    subscriber: str,
) -> Placement:
    """Re-place only the stages that sat on failed nodes; survivors stay."""
    pubs = _publishers_by_entry(p, publisher)
    if subscriber in failed or any(pub in failed for pub in pubs.values()):
        raise InstanceTerminatedError(p.pipeline_id)
    pinned = _resolve_pins(p, pubs, subscriber)
    for sid, node_id in pinned.items():
        if node_id in failed:
            raise NoFeasiblePlacementError(f"{p.pipeline_id}: pin on failed {node_id}")
    movable = [
        s.stage_id
        for s in p.stages
        if pl.assignment[s.stage_id] in failed and s.stage_id not in pinned
    ]
    if not movable:
        bad = feasible(pl, p, t, w, pubs, subscriber)
        if bad:
            raise NoFeasiblePlacementError(
                f"{p.pipeline_id}: {[v.rule for v in bad]}"
            )
        return pl
    fixed = {
        sid: node
        for sid, node in pl.assignment.items()
        if sid not in movable
    }
    out = _upstream_with_fixed(p, t, w, o, pubs, subscriber, fixed, movable)
    bad = feasible(out, p, t, w, pubs, subscriber)
    if bad:
        raise NoFeasiblePlacementError(f"{p.pipeline_id}: {[v.rule for v in bad]}")
    return out


# ---------------------------------------------------------------------------
# Shared-prefix merging


@dataclass(frozen=True)
class ExecStage:
    """One physically executed stage, possibly shared by several instances."""

    exec_id: str
    stage: StageSpec
    node: str
    pred_ids: tuple[str, ...]
    entry_binding: tuple[str, str] | None  # (topic, publisher) for entries
    instance_ids: tuple[str, ...]


@dataclass(frozen=True)
class DeliveryEdge:
    """Fan-out from an instance's sink execution to its subscriber."""

    exec_id: str
    instance_id: str
    sub_id: str
    subscriber: str


@dataclass(frozen=True, eq=False)
class ExecutionGraph:
    """Instance pipelines merged so each shared prefix stage runs once."""

    stages: dict[str, ExecStage]
    deliveries: tuple[DeliveryEdge, ...]

    def succs(self, exec_id: str) -> list[ExecStage]:
        return sorted(
            (s for s in self.stages.values() if exec_id in s.pred_ids),
            key=lambda s: s.exec_id,
        )

    def entries(self) -> list[ExecStage]:
        return sorted(
            (s for s in self.stages.values() if not s.pred_ids),
            key=lambda s: s.exec_id,
        )


def _exec_key_id(
    stage: StageSpec,
    node: str,
    pred_ids: tuple[str, ...],
    entry_binding: tuple[str, str] | None,
) -> str:
    text = repr((stage, node, pred_ids, entry_binding))
    return "x" + hashlib.sha1(text.encode()).hexdigest()[:12]


def merge_shared_prefix(instances: Sequence["PipelineInstance"]) -> ExecutionGraph:
    """Build the merged execution graph over compatible instances.

    Two instances share an execution exactly when the stage spec, assigned
    node, upstream executions, and (for entries) the topic binding coincide;
    anything downstream of a divergence fans out.
    """
    stages: dict[str, ExecStage] = {}
    deliveries: list[DeliveryEdge] = []
    for inst in sorted(instances, key=lambda i: i.instance_id):
        local: dict[str, str] = {}
        for sid in inst.pipeline.topo_order():
            spec = inst.pipeline.stage(sid)
            node = inst.placement.node_of(sid)
            preds = tuple(sorted(local[q] for q in inst.pipeline.preds(sid)))
            binding = inst.entry_bindings.get(sid)
            exec_id = _exec_key_id(spec, node, preds, binding)
            local[sid] = exec_id
            prior = stages.get(exec_id)
            if prior is None:
                stages[exec_id] = ExecStage(
                    exec_id, spec, node, preds, binding, (inst.instance_id,)
                )
            elif inst.instance_id not in prior.instance_ids:
                stages[exec_id] = ExecStage(
                    exec_id,
                    spec,
                    node,
                    preds,
                    binding,
                    tuple(sorted(prior.instance_ids + (inst.instance_id,))),
                )
        deliveries.append(
            DeliveryEdge(
                local[inst.pipeline.sink],
                inst.instance_id,
                inst.sub_id,
                inst.subscriber,
            )
        )
    return ExecutionGraph(stages, tuple(deliveries))

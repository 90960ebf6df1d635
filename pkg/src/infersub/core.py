"""Domain types: topics, publications, models, pipelines, topology, routing."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import ceil
from typing import Iterable, Union

from .errors import NoRouteError, SplitArityError

Ratio = Union[int, float, str, Fraction]

TIERS = ("device", "edge", "cloud")
TASK_TAGS = ("text", "aural", "visual", "telemetry")
TAGS = ("raw", "derived")


def as_ratio(x: Ratio) -> Fraction:
    """Exact rational from a number. Floats go through their shortest decimal
    literal, so as_ratio(0.1) == Fraction(1, 10), not the binary expansion."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("bool is not a ratio")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, (float, str)):
        return Fraction(str(x))
    raise TypeError(f"cannot convert {type(x).__name__} to a ratio")


def scaled_size(input_total: int, selectivity: Fraction) -> int:
    """Size law shared by every operator: max(1, ceil(total * selectivity))."""
    return max(1, ceil(input_total * selectivity))


# ---------------------------------------------------------------------------
# Topics and filters


@dataclass(frozen=True, order=True)
class Topic:
    """A slash-rendered channel name, e.g. Topic.parse("net/cell1/kpi")."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("topic: needs at least one segment")
        for seg in self.segments:
            if not seg or any(c in seg for c in "/+#"):
                raise ValueError(f"topic: bad segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> Topic:
        return cls(tuple(text.split("/")))

    def __str__(self) -> str:
        return "/".join(self.segments)


@dataclass(frozen=True, order=True)
class TopicFilter:
    """Topic pattern: "+" matches one segment, a trailing "#" matches any tail."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("filter: needs at least one segment")
        for i, seg in enumerate(self.segments):
            if seg == "#":
                if i != len(self.segments) - 1:
                    raise ValueError("filter: '#' only allowed as last segment")
            elif seg != "+":
                if not seg or any(c in seg for c in "/+#"):
                    raise ValueError(f"filter: bad segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> TopicFilter:
        return cls(tuple(text.split("/")))

    def __str__(self) -> str:
        return "/".join(self.segments)

    def matches(self, topic: Topic) -> bool:
        return match_filter(self, topic)


MATCH_ALL = TopicFilter(("#",))


def match_filter(filter: TopicFilter, topic: Topic) -> bool:
    """True iff topic matches filter under "+"/"#" semantics."""
    fs, ts = filter.segments, topic.segments
    for i, seg in enumerate(fs):
        if seg == "#":
            return True
        if i >= len(ts):
            return False
        if seg != "+" and seg != ts[i]:
            return False
    return len(fs) == len(ts)


# ---------------------------------------------------------------------------
# Publications


@dataclass(frozen=True)
class Publication:
    """A sized, sequence-numbered message on a topic.

    ts is simulated milliseconds (exact rational); seq is per-(source, topic)
    and strictly increasing at the origin; tag is "raw" only before any stage
    has touched the payload.
    """

    topic: Topic
    source: str
    seq: int
    ts: Fraction
    size_bytes: int
    payload: tuple[float, ...] = (1.0,)
    tag: str = "raw"
    semantic_tag: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ts", as_ratio(self.ts))
        object.__setattr__(self, "payload", tuple(float(v) for v in self.payload))
        if self.seq < 0:
            raise ValueError("publication: seq must be >= 0")
        if self.ts < 0:
            raise ValueError("publication: ts must be >= 0")
        if self.size_bytes < 1:
            raise ValueError("publication: size_bytes must be >= 1")
        if self.tag not in TAGS:
            raise ValueError(f"publication: tag must be one of {TAGS}")

    def sort_key(self) -> tuple:
        """Canonical (topic, source, seq) ordering used before combining."""
        return (self.topic, self.source, self.seq)


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class LayerSpec:
    compute_cost: Fraction
    mem_mb: Fraction
    selectivity: Fraction
    needs_accelerator: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "compute_cost", as_ratio(self.compute_cost))
        object.__setattr__(self, "mem_mb", as_ratio(self.mem_mb))
        object.__setattr__(self, "selectivity", as_ratio(self.selectivity))
        if self.compute_cost < 0:
            raise ValueError("layer: compute_cost must be >= 0")
        if self.mem_mb < 0:
            raise ValueError("layer: mem_mb must be >= 0")
        if self.selectivity <= 0:
            raise ValueError("layer: selectivity must be > 0")


@dataclass(frozen=True)
class ModelDescriptor:
    model_id: str
    version: int
    task_tag: str
    layers: tuple[LayerSpec, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.version < 0:
            raise ValueError("model: version must be >= 0")
        if self.task_tag not in TASK_TAGS:
            raise ValueError(f"model: task_tag must be one of {TASK_TAGS}")
        if not self.layers:
            raise ValueError("model: needs at least one layer")


# ---------------------------------------------------------------------------
# Stages and pipelines


@dataclass(frozen=True)
class Pin:
    """Placement constraint for a stage."""

    kind: str  # "unpinned" | "publisher" | "subscriber" | "node"
    node_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("unpinned", "publisher", "subscriber", "node"):
            raise ValueError(f"pin: bad kind {self.kind!r}")
        if (self.kind == "node") != (self.node_id is not None):
            raise ValueError("pin: node_id exactly when kind == 'node'")

    @classmethod
    def unpinned(cls) -> Pin:
        return cls("unpinned")

    @classmethod
    def at_publisher(cls) -> Pin:
        return cls("publisher")

    @classmethod
    def at_subscriber(cls) -> Pin:
        return cls("subscriber")

    @classmethod
    def at_node(cls, node_id: str) -> Pin:
        return cls("node", node_id)

    @property
    def is_pinned(self) -> bool:
        return self.kind != "unpinned"


@dataclass(frozen=True)
class Barrier:
    """Emit once every expected input has a pending publication."""

    inputs: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise ValueError("barrier: inputs must be nonempty")
        if len(set(self.inputs)) != len(self.inputs):
            raise ValueError("barrier: duplicate input ids")


@dataclass(frozen=True)
class CountWindow:
    """Emit on every n-th buffered publication."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("count window: n must be >= 1")


@dataclass(frozen=True)
class TimeWindow:
    """Open at the first buffered publication, emit delta_ms later."""

    delta_ms: int

    def __post_init__(self) -> None:
        if self.delta_ms < 1:
            raise ValueError("time window: delta_ms must be >= 1")


TriggerPolicy = Union[Barrier, CountWindow, TimeWindow]

FnArgs = tuple[tuple[str, Union[int, float, str]], ...]


def fn_args(**kwargs: Union[int, float, str]) -> FnArgs:
    """Canonical (sorted) argument tuple for stage function kinds."""
    return tuple(sorted(kwargs.items()))


@dataclass(frozen=True)
class Mapping:
    """One-in one-out stage applying a catalog function."""

    fn_id: str
    args: FnArgs = ()


@dataclass(frozen=True)
class Funnel:
    """Many-in one-out stage combining publications under a trigger policy."""

    fn_id: str
    trigger: TriggerPolicy
    args: FnArgs = ()


@dataclass(frozen=True)
class Filter:
    """Stage passing or dropping a publication by a catalog predicate."""

    predicate_id: str
    args: FnArgs = ()


StageKind = Union[Mapping, Funnel, Filter]


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    kind: StageKind
    compute_cost: Fraction
    mem_mb: Fraction
    selectivity: Fraction
    needs_accelerator: bool = False
    pin: Pin = field(default_factory=Pin.unpinned)

    def __post_init__(self) -> None:
        object.__setattr__(self, "compute_cost", as_ratio(self.compute_cost))
        object.__setattr__(self, "mem_mb", as_ratio(self.mem_mb))
        object.__setattr__(self, "selectivity", as_ratio(self.selectivity))
        if self.compute_cost < 0:
            raise ValueError(f"stage {self.stage_id}: compute_cost must be >= 0")
        if self.mem_mb < 0:
            raise ValueError(f"stage {self.stage_id}: mem_mb must be >= 0")
        if self.selectivity <= 0:
            raise ValueError(f"stage {self.stage_id}: selectivity must be > 0")


@dataclass(frozen=True, eq=False)
class PipelineSpec:
    """A DAG of stages with topic-filter bindings on its entry stages.

    The constructor only normalizes; structural rules are checked by
    validate_pipeline so that invalid pipelines can be built and inspected.
    """

    pipeline_id: str
    stages: tuple[StageSpec, ...]
    edges: tuple[tuple[str, str], ...]
    source_bindings: dict[str, TopicFilter]
    sink: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "edges", tuple((a, b) for a, b in self.edges))
        object.__setattr__(self, "source_bindings", dict(self.source_bindings))

    def stage(self, stage_id: str) -> StageSpec:
        for s in self.stages:
            if s.stage_id == stage_id:
                return s
        raise KeyError(stage_id)

    def stage_ids(self) -> list[str]:
        return [s.stage_id for s in self.stages]

    def preds(self, stage_id: str) -> list[str]:
        return [a for a, b in self.edges if b == stage_id]

    def succs(self, stage_id: str) -> list[str]:
        return [b for a, b in self.edges if a == stage_id]

    def entry_ids(self) -> list[str]:
        with_in = {b for _, b in self.edges}
        return [s.stage_id for s in self.stages if s.stage_id not in with_in]

    def sink_ids(self) -> list[str]:
        with_out = {a for a, _ in self.edges}
        return [s.stage_id for s in self.stages if s.stage_id not in with_out]

    def topo_order(self) -> list[str]:
        """Kahn order; stable by declaration order. Raises on a cycle."""
        order = self._kahn()
        if len(order) != len(self.stages):
            raise ValueError(f"pipeline {self.pipeline_id}: cycle")
        return order

    def _kahn(self) -> list[str]:
        indeg = {s.stage_id: 0 for s in self.stages}
        for a, b in self.edges:
            if b in indeg and a in indeg:
                indeg[b] += 1
        ready = [sid for sid in self.stage_ids() if indeg[sid] == 0]
        order: list[str] = []
        while ready:
            sid = ready.pop(0)
            order.append(sid)
            for nxt in self.succs(sid):
                if nxt in indeg:
                    indeg[nxt] -= 1
                    if indeg[nxt] == 0:
                        ready.append(nxt)
        return order


@dataclass(frozen=True, order=True)
class Violation:
    """One broken pipeline rule, naming the offending stage or edge."""

    rule: str
    subject: str
    detail: str = ""


def validate_pipeline(p: PipelineSpec) -> list[Violation]:
    """Empty list iff all structural pipeline rules hold."""
    out: list[Violation] = []
    ids = p.stage_ids()
    known = set(ids)

    if not ids:
        return [Violation("EmptyPipeline", p.pipeline_id)]
    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            out.append(Violation("DuplicateStage", sid))
        seen.add(sid)
    for a, b in p.edges:
        for end in (a, b):
            if end not in known:
                out.append(Violation("UnknownStage", end, f"edge {a}->{b}"))

    order = p._kahn()
    if len(order) != len(known):
        stuck = sorted(known - set(order))
        out.append(Violation("CycleDetected", ",".join(stuck)))
        return sorted(set(out))

    sinks = p.sink_ids()
    if len(sinks) > 1:
        out.append(Violation("MultipleSinks", ",".join(sorted(sinks))))
    elif not sinks:
        out.append(Violation("NoSink", p.pipeline_id))
    elif p.sink != sinks[0]:
        out.append(Violation("SinkMismatch", p.sink, f"actual sink {sinks[0]}"))

    entries = set(p.entry_ids())
    for sid in sorted(p.source_bindings):
        if sid not in known:
            out.append(Violation("UnknownStage", sid, "source binding"))
        elif sid not in entries:
            out.append(Violation("BindingNotEntry", sid))
    for sid in sorted(entries):
        if sid not in p.source_bindings:
            out.append(Violation("UnboundEntry", sid))

    reach = set()
    frontier = [sid for sid in order if sid in entries]
    while frontier:
        sid = frontier.pop()
        if sid in reach:
            continue
        reach.add(sid)
        frontier.extend(p.succs(sid))
    for sid in order:
        if sid not in reach:
            out.append(Violation("Unreachable", sid))

    for s in p.stages:
        if isinstance(s.kind, Funnel):
            preds = p.preds(s.stage_id)
            if not preds:
                out.append(Violation("FunnelNoInput", s.stage_id))
            elif isinstance(s.kind.trigger, Barrier):
                if set(s.kind.trigger.inputs) != set(preds):
                    out.append(
                        Violation(
                            "BarrierArity",
                            s.stage_id,
                            f"inputs {sorted(s.kind.trigger.inputs)}"
                            f" vs preds {sorted(preds)}",
                        )
                    )
    return sorted(set(out))


def split_model(model: ModelDescriptor, k: int, privacy_split: bool) -> PipelineSpec:
    """Chain pipeline of k stages over contiguous, count-balanced layer groups.

    Earlier groups take the remainder. Per stage: costs and memory are sums,
    selectivity is the product, accelerator need is the disjunction. With
    privacy_split the first and last stages (the single stage when k == 1)
    are pinned at the publisher.
    """
    n = len(model.layers)
    if not 1 <= k <= n:
        raise SplitArityError(f"k={k} outside 1..{n} for model {model.model_id}")
    base, rem = divmod(n, k)
    sizes = [base + 1 if i < rem else base for i in range(k)]
    stages: list[StageSpec] = []
    at = 0
    for i, size in enumerate(sizes, start=1):
        group = model.layers[at : at + size]
        at += size
        sel = Fraction(1)
        for layer in group:
            sel *= layer.selectivity
        pinned = privacy_split and (i == 1 or i == k)
        stages.append(
            StageSpec(
                stage_id=f"{model.model_id}-v{model.version}-s{i}",
                kind=Mapping("identity"),
                compute_cost=sum((l.compute_cost for l in group), Fraction(0)),
                mem_mb=sum((l.mem_mb for l in group), Fraction(0)),
                selectivity=sel,
                needs_accelerator=any(l.needs_accelerator for l in group),
                pin=Pin.at_publisher() if pinned else Pin.unpinned(),
            )
        )
    edges = tuple(
        (stages[i].stage_id, stages[i + 1].stage_id) for i in range(k - 1)
    )
    return PipelineSpec(
        pipeline_id=f"{model.model_id}-v{model.version}-k{k}",
        stages=tuple(stages),
        edges=edges,
        source_bindings={stages[0].stage_id: MATCH_ALL},
        sink=stages[-1].stage_id,
    )


# ---------------------------------------------------------------------------
# Topology


@dataclass(frozen=True)
class NodeDescriptor:
    node_id: str
    tier: str
    cpu_capacity: Fraction  # compute units per ms
    mem_mb: Fraction
    has_accelerator: bool = False
    domain_id: str = "d0"

    def __post_init__(self) -> None:
        object.__setattr__(self, "cpu_capacity", as_ratio(self.cpu_capacity))
        object.__setattr__(self, "mem_mb", as_ratio(self.mem_mb))
        if self.tier not in TIERS:
            raise ValueError(f"node {self.node_id}: tier must be one of {TIERS}")
        if self.cpu_capacity <= 0:
            raise ValueError(f"node {self.node_id}: cpu_capacity must be > 0")
        if self.mem_mb < 0:
            raise ValueError(f"node {self.node_id}: mem_mb must be >= 0")


@dataclass(frozen=True)
class LinkDescriptor:
    """Undirected link; endpoints are stored sorted."""

    a: str
    b: str
    latency_ms: Fraction
    bandwidth_kb_per_ms: Fraction
    state: str = "up"

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ValueError(f"link: self-loop at {self.a}")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        object.__setattr__(self, "latency_ms", as_ratio(self.latency_ms))
        object.__setattr__(
            self, "bandwidth_kb_per_ms", as_ratio(self.bandwidth_kb_per_ms)
        )
        if self.latency_ms < 0:
            raise ValueError(f"link {self.a}-{self.b}: latency_ms must be >= 0")
        if self.bandwidth_kb_per_ms <= 0:
            raise ValueError(
                f"link {self.a}-{self.b}: bandwidth_kb_per_ms must be > 0"
            )
        if self.state not in ("up", "down"):
            raise ValueError(f"link {self.a}-{self.b}: bad state {self.state!r}")

    @property
    def ends(self) -> tuple[str, str]:
        return (self.a, self.b)


@dataclass(frozen=True, eq=False)
class Topology:
    """The continuum graph. Node liveness lives here, not on NodeDescriptor."""

    nodes: dict[str, NodeDescriptor]
    links: dict[tuple[str, str], LinkDescriptor]
    down_nodes: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "down_nodes", frozenset(self.down_nodes))
        for key, link in self.links.items():
            if key != link.ends:
                raise ValueError(f"topology: link keyed {key} but ends {link.ends}")
            for end in link.ends:
                if end not in self.nodes:
                    raise ValueError(f"topology: link endpoint {end!r} unknown")
        for nid, node in self.nodes.items():
            if nid != node.node_id:
                raise ValueError(f"topology: node keyed {nid!r} vs {node.node_id!r}")

    @classmethod
    def of(cls, nodes: Iterable[NodeDescriptor],
           links: Iterable[LinkDescriptor]) -> Topology:
        node_map = {n.node_id: n for n in nodes}
        link_map: dict[tuple[str, str], LinkDescriptor] = {}
        for l in links:
            if l.ends in link_map:
                raise ValueError(f"topology: duplicate link {l.ends}")
            link_map[l.ends] = l
        return cls(node_map, link_map)

    def node(self, node_id: str) -> NodeDescriptor:
        return self.nodes[node_id]

    def is_node_up(self, node_id: str) -> bool:
        return node_id in self.nodes and node_id not in self.down_nodes

    def link_between(self, a: str, b: str) -> LinkDescriptor | None:
        return self.links.get((a, b) if a < b else (b, a))

    def is_link_up(self, a: str, b: str) -> bool:
        link = self.link_between(a, b)
        return (
            link is not None
            and link.state == "up"
            and self.is_node_up(a)
            and self.is_node_up(b)
        )

    def up_neighbors(self, node_id: str) -> list[tuple[str, LinkDescriptor]]:
        out = []
        for link in self.links.values():
            if link.state != "up":
                continue
            if node_id == link.a:
                other = link.b
            elif node_id == link.b:
                other = link.a
            else:
                continue
            if self.is_node_up(other):
                out.append((other, link))
        return sorted(out, key=lambda pair: pair[0])

    def with_node_state(self, node_id: str, up: bool) -> Topology:
        if node_id not in self.nodes:
            raise KeyError(node_id)
        down = set(self.down_nodes)
        if up:
            down.discard(node_id)
        else:
            down.add(node_id)
        return Topology(self.nodes, self.links, frozenset(down))

    def with_link_state(self, a: str, b: str, up: bool) -> Topology:
        link = self.link_between(a, b)
        if link is None:
            raise KeyError((a, b))
        links = dict(self.links)
        links[link.ends] = replace(link, state="up" if up else "down")
        return Topology(self.nodes, links, self.down_nodes)

    def domains(self) -> list[str]:
        return sorted({n.domain_id for n in self.nodes.values()})


def route(t: Topology, a: str, b: str) -> list[str]:
    """Minimum-latency up path from a to b.

    Ties go to fewer hops, then the lexicographically smallest node sequence.
    route(t, a, a) == [a].
    """
    if a not in t.nodes or b not in t.nodes:
        raise NoRouteError(a, b)
    if a == b:
        return [a]
    if not t.is_node_up(a) or not t.is_node_up(b):
        raise NoRouteError(a, b)
    heap: list[tuple[Fraction, int, tuple[str, ...]]] = [(Fraction(0), 0, (a,))]
    done: set[str] = set()
    while heap:
        lat, hops, path = heapq.heappop(heap)
        here = path[-1]
        if here == b:
            return list(path)
        if here in done:
            continue
        done.add(here)
        for nxt, link in t.up_neighbors(here):
            if nxt not in done:
                heapq.heappush(
                    heap, (lat + link.latency_ms, hops + 1, path + (nxt,))
                )
    raise NoRouteError(a, b)


def route_latency(t: Topology, a: str, b: str) -> tuple[Fraction, int]:
    """(total latency, hop count) of route(t, a, b)."""
    path = route(t, a, b)
    total = Fraction(0)
    for x, y in zip(path, path[1:]):
        link = t.link_between(x, y)
        assert link is not None
        total += link.latency_ms
    return total, len(path) - 1


# ---------------------------------------------------------------------------
# Subscriptions


@dataclass(frozen=True)
class DataSub:
    """Deliver raw publications matching a filter."""

    filter: TopicFilter


@dataclass(frozen=True)
class InferenceSub:
    """Deliver the output of a model pipeline applied to matching publications.

    combine_fn, trigger and prefilter only matter when the filter matches
    several bound topics (or a windowed trigger is requested): the entries are
    then joined by a funnel before the split-model chain.
    """

    model_id: str
    filter: TopicFilter
    privacy_split: bool = False
    k: int = 1
    combine_fn: str = "concat"
    trigger: TriggerPolicy | None = None
    prefilter: str | None = None
    prefilter_args: FnArgs = ()

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("inference: k must be >= 1")


@dataclass(frozen=True)
class ModelUpdateSub:
    """Deliver aggregated model updates from min_version on."""

    model_id: str
    min_version: int = 0

    def __post_init__(self) -> None:
        if self.min_version < 0:
            raise ValueError("model update: min_version must be >= 0")


SubscriptionKind = Union[DataSub, InferenceSub, ModelUpdateSub]


@dataclass(frozen=True)
class Subscription:
    sub_id: str
    subscriber: str
    kind: SubscriptionKind

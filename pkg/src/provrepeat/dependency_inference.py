"""Turn an execution trace into a causally valid provenance graph.

A path in the trace is only a real dependency when a non-decreasing sequence
of times can be threaded through the edge intervals along it.  Reachability
under that constraint is computed by propagating the earliest feasible time
forward: an edge is traversable at time t when t <= interval.end, and arrival
at its head happens at max(t, interval.begin).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import networkx as nx

from .prov_graph import ProvEdge, ProvenanceGraph, ProvLabel, make_node
from .trace_model import (
    ExecutionTrace,
    NodeKind,
    TraceEdge,
    TraceLabel,
    TraceNode,
    validate_trace,
)

TRACE_TO_PROV: dict[TraceLabel, ProvLabel] = {
    TraceLabel.READ_FROM: ProvLabel.USED,
    TraceLabel.HAS_WRITTEN: ProvLabel.WAS_GENERATED_BY,
    TraceLabel.EXECUTED: ProvLabel.WAS_INFORMED_BY,
}

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class CausalPathWitness:
    """A path plus one crossing time per edge proving temporal feasibility."""

    path: tuple[ProvEdge, ...]
    times: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.path) != len(self.times):
            raise ValueError("one time per edge required")
        for earlier, later in zip(self.times, self.times[1:]):
            if earlier > later:
                raise ValueError("witness times must be non-decreasing")
        for edge, t in zip(self.path, self.times):
            if edge.interval is not None and not edge.interval.begin <= t <= edge.interval.end:
                raise ValueError(f"time {t} outside interval of edge {edge.src}->{edge.dst}")


@dataclass(frozen=True)
class CycleReport:
    cycles: tuple[tuple[str, ...], ...]
    affected_entities: frozenset[str]

    @property
    def is_acyclic(self) -> bool:
        return not self.cycles


def infer_provenance(trace: ExecutionTrace) -> ProvenanceGraph:
    """Relabel trace edges into PROV vocabulary, keeping direction and intervals.

    The result answers dependency queries lazily through :func:`depends` /
    :func:`earliest_reach`; nothing is precomputed here.
    """
    problems = validate_trace(trace)
    if problems:
        raise ValueError(f"trace is not well-formed: {problems[0].message} ({problems[0].subject})")
    nodes = [
        make_node(
            n.id,
            n.kind,
            n.label,
            pid=n.pid,
            path=_strip_version(n.path)[0] if n.path else None,
            version=_strip_version(n.path)[1] if n.path else None,
        )
        for n in trace.nodes.values()
    ]
    edges = [
        ProvEdge(e.src, e.dst, TRACE_TO_PROV[e.label], e.interval) for e in trace.edges
    ]
    return ProvenanceGraph(nodes, edges, trace_digest=trace.digest())


def _strip_version(path: str) -> tuple[str, int | None]:
    base, sep, suffix = path.partition("#v")
    if sep and suffix.isdigit():
        return base, int(suffix)
    return path, None


def earliest_reach(graph: ProvenanceGraph, source: str) -> dict[str, int | float]:
    """Earliest feasible arrival time at every node causally reachable from source.

    The source itself is reachable at -inf (its state exists before anything
    runs).  Cached on the graph per source id.
    """
    cached = graph.reach_cache.get(source)
    if cached is not None:
        return cached
    graph.node(source)
    best: dict[str, int | float] = {source: _NEG_INF}
    heap: list[tuple[int | float, str]] = [(_NEG_INF, source)]
    while heap:
        t, node = heapq.heappop(heap)
        if t > best.get(node, float("inf")):
            continue
        for edge in graph.out_edges(node):
            if edge.interval is None:
                arrival: int | float = t
            else:
                if t > edge.interval.end:
                    continue
                arrival = max(t, edge.interval.begin)
            if arrival < best.get(edge.dst, float("inf")):
                best[edge.dst] = arrival
                heapq.heappush(heap, (arrival, edge.dst))
    graph.reach_cache[source] = best
    return best


def depends(graph: ProvenanceGraph, target: str, source: str) -> bool:
    """True when target's state causally depends on source's state."""
    if target == source:
        return False
    return target in earliest_reach(graph, source)


def find_witness(graph: ProvenanceGraph, source: str, target: str) -> CausalPathWitness | None:
    """Reconstruct a feasible path with explicit crossing times, if one exists."""
    graph.node(source)
    best: dict[str, int | float] = {source: _NEG_INF}
    parent: dict[str, ProvEdge] = {}
    heap: list[tuple[int | float, str]] = [(_NEG_INF, source)]
    while heap:
        t, node = heapq.heappop(heap)
        if t > best.get(node, float("inf")):
            continue
        for edge in graph.out_edges(node):
            if edge.interval is None:
                arrival: int | float = t
            else:
                if t > edge.interval.end:
                    continue
                arrival = max(t, edge.interval.begin)
            if arrival < best.get(edge.dst, float("inf")):
                best[edge.dst] = arrival
                parent[edge.dst] = edge
                heapq.heappush(heap, (arrival, edge.dst))
    if target not in best or target == source:
        return None
    path: list[ProvEdge] = []
    node = target
    while node != source:
        edge = parent[node]
        path.append(edge)
        node = edge.src
    path.reverse()
    times: list[int] = []
    current: int | float = _NEG_INF
    for edge in path:
        if edge.interval is not None:
            current = max(current, edge.interval.begin)
        elif current is _NEG_INF:
            current = 0
        times.append(int(current))
    return CausalPathWitness(tuple(path), tuple(times))


def downstream_activities(graph: ProvenanceGraph, sources: set[str]) -> set[str]:
    """Activities causally reachable from any of the given entity ids."""
    procs: set[str] = set()
    for source in sources:
        for node_id in earliest_reach(graph, source):
            if node_id != source and graph.node(node_id).kind is NodeKind.ACTIVITY:
                procs.add(node_id)
    return procs


def _war_edges(graph: ProvenanceGraph) -> list[tuple[str, str]]:
    """Anti-dependency constraints: reader must run before a later writer.

    When a single entity version is both read and written, and the read began
    before the write finished, replaying the writer first would feed the reader
    the wrong bytes.  The constraint is an implied reader -> writer ordering
    edge used only for cycle detection.
    """
    extra: list[tuple[str, str]] = []
    for entity in graph.entities():
        writes = graph.in_edges(entity.id, ProvLabel.WAS_GENERATED_BY)
        reads = graph.out_edges(entity.id, ProvLabel.USED)
        for write in writes:
            for read in reads:
                if write.src == read.dst:
                    continue
                if write.interval is None or read.interval is None:
                    continue
                if read.interval.begin < write.interval.end:
                    extra.append((read.dst, write.src))
    return extra


def detect_cycles(graph: ProvenanceGraph) -> CycleReport:
    """Enumerate elementary cycles in the dependency graph.

    The dependency graph is the provenance graph plus implied reader-before-
    writer ordering constraints for entities whose single version was both
    read and overwritten; a repeat cannot honor any cycle among them.
    """
    digraph = nx.DiGraph()
    digraph.add_nodes_from(graph.nodes)
    for edge in graph.edges:
        digraph.add_edge(edge.src, edge.dst)
    for src, dst in _war_edges(graph):
        digraph.add_edge(src, dst)
    cycles = sorted(
        tuple(_rotate_min(cycle)) for cycle in nx.simple_cycles(digraph) if len(cycle) >= 2
    )
    affected = frozenset(
        node_id
        for cycle in cycles
        for node_id in cycle
        if graph.node(node_id).kind is NodeKind.ENTITY
    )
    return CycleReport(cycles=tuple(cycles), affected_entities=affected)


def _rotate_min(cycle: list[str]) -> list[str]:
    pivot = cycle.index(min(cycle))
    return cycle[pivot:] + cycle[:pivot]


@dataclass
class _EntityEpisodes:
    writes: list[TraceEdge] = field(default_factory=list)
    reads: list[TraceEdge] = field(default_factory=list)


def version_entities(trace: ExecutionTrace) -> ExecutionTrace:
    """Split entities into versions so repeat ordering is unambiguous.

    Writes are sorted by interval end; write i produces version i+1 and every
    read attaches to the version current at its start.  An entity is left
    untouched when all its reads already see the final version and it has at
    most one write.  Reads straddling a write interval are attached to the
    earlier version and flagged under ``meta['ambiguous_reads']``.  A final
    pass converts reads that still sit on dependency cycles into generator-less
    snapshot versions (flagged under ``meta['snapshot_reads']``), which makes
    the inferred graph acyclic whenever spawn edges form no cycle themselves.
    """
    problems = validate_trace(trace)
    if problems:
        raise ValueError(f"trace is not well-formed: {problems[0].message} ({problems[0].subject})")

    episodes: dict[str, _EntityEpisodes] = {}
    for edge in trace.edges:
        if edge.label is TraceLabel.HAS_WRITTEN:
            episodes.setdefault(edge.dst, _EntityEpisodes()).writes.append(edge)
        elif edge.label is TraceLabel.READ_FROM:
            episodes.setdefault(edge.src, _EntityEpisodes()).reads.append(edge)

    ambiguous: list[str] = []
    # entity id -> list of (boundary time, version tag); version 1 is implicit.
    split_plan: dict[str, list[int]] = {}
    for entity_id, eps in episodes.items():
        if not eps.writes:
            continue
        boundaries = sorted(w.interval.end for w in eps.writes)
        if len(eps.writes) == 1 and all(
            r.interval.begin >= boundaries[0] for r in eps.reads
        ):
            continue  # every read sees the single final version
        split_plan[entity_id] = boundaries
        for read in eps.reads:
            for write in eps.writes:
                if read.interval.begin < write.interval.end <= read.interval.end:
                    ambiguous.append(
                        f"{read.src} read by {read.dst} straddles write by {write.src}"
                    )

    def version_of(entity_id: str, t: int) -> int:
        passed = sum(1 for boundary in split_plan[entity_id] if boundary <= t)
        return passed + 1

    nodes: dict[str, TraceNode] = {}
    edges: list[TraceEdge] = []

    def versioned_node(base: TraceNode, version: int | None) -> str:
        if version is None:
            nodes.setdefault(base.id, base)
            return base.id
        vid = f"{base.id}#v{version}"
        nodes.setdefault(
            vid, TraceNode(id=vid, kind=NodeKind.ENTITY, label=vid, path=vid)
        )
        return vid

    for node in trace.nodes.values():
        if node.id not in split_plan:
            nodes.setdefault(node.id, node)
    for entity_id in split_plan:
        base = trace.nodes[entity_id]
        for version in range(1, len(split_plan[entity_id]) + 2):
            versioned_node(base, version)

    write_order = {
        entity_id: sorted(eps.writes, key=lambda e: (e.interval.end, e.interval.begin, e.src))
        for entity_id, eps in episodes.items()
        if entity_id in split_plan
    }
    for edge in trace.edges:
        src, dst = edge.src, edge.dst
        if edge.label is TraceLabel.HAS_WRITTEN and dst in split_plan:
            index = write_order[dst].index(edge)
            dst = versioned_node(trace.nodes[dst], index + 2)
        elif edge.label is TraceLabel.READ_FROM and src in split_plan:
            src = versioned_node(trace.nodes[src], version_of(src, edge.interval.begin))
        edges.append(TraceEdge(src, dst, edge.label, edge.interval))

    meta = dict(trace.meta)
    if split_plan:
        meta["versioned_entities"] = sorted(split_plan)
    if ambiguous:
        meta["ambiguous_reads"] = sorted(ambiguous)

    result = ExecutionTrace(nodes=nodes, edges=tuple(sorted(edges)), meta=meta)
    return _snapshot_cycle_reads(result)


def _snapshot_cycle_reads(trace: ExecutionTrace) -> ExecutionTrace:
    """Detach reads that still close dependency cycles onto snapshot versions."""
    snapshots: list[str] = []
    nodes = dict(trace.nodes)
    edges = list(trace.edges)
    serial = 0
    while True:
        current = ExecutionTrace(nodes=nodes, edges=tuple(sorted(edges)), meta={})
        report = detect_cycles(infer_provenance(current))
        if report.is_acyclic:
            break
        cycle = report.cycles[0]
        read_edge = _cycle_read_edge(current, cycle)
        if read_edge is None:
            break  # cycle without any read edge (e.g. spawn loop); unfixable here
        serial += 1
        snap_id = f"{read_edge.src}#s{serial}"
        nodes[snap_id] = TraceNode(id=snap_id, kind=NodeKind.ENTITY, label=snap_id, path=snap_id)
        edges.remove(read_edge)
        edges.append(TraceEdge(snap_id, read_edge.dst, read_edge.label, read_edge.interval))
        snapshots.append(f"{read_edge.src} as read by {read_edge.dst}")
    meta = dict(trace.meta)
    if snapshots:
        meta["snapshot_reads"] = sorted(snapshots)
    return ExecutionTrace(nodes=nodes, edges=tuple(sorted(edges)), meta=meta)


def _cycle_read_edge(trace: ExecutionTrace, cycle: tuple[str, ...]) -> TraceEdge | None:
    members = set(cycle)
    for edge in trace.edges:
        if edge.label is TraceLabel.READ_FROM and edge.src in members and edge.dst in members:
            return edge
    # The cycle may ride on an implied reader-before-writer constraint between
    # two activities on it; detaching the read that induced it breaks the loop.
    reads = [e for e in trace.edges if e.label is TraceLabel.READ_FROM and e.dst in members]
    writes = [e for e in trace.edges if e.label is TraceLabel.HAS_WRITTEN and e.src in members]
    for read in reads:
        for write in writes:
            if read.src == write.dst and read.interval.begin < write.interval.end:
                return read
    return None

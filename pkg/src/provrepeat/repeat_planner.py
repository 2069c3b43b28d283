"""Plan partial and modified re-executions from a container's provenance graph.

A partial repeat re-runs a chosen set of processes inside a sub-container that
stages exactly the files those processes read; their outputs are regenerated
by the replay rather than shipped.  A modified repeat substitutes one or more
external inputs and re-runs only the processes causally downstream of the
change, reusing every other recorded output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dependency_inference import downstream_activities
from .prov_graph import (
    ProvenanceGraph,
    ProvLabel,
    export_prov_json,
    import_prov_json,
)
from .store import ChunkStore, ContainerManifest, StoreError, container_rel_path
from .trace_model import NodeKind


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class SubContainerPlan:
    required_procs: tuple[str, ...]
    required_files: tuple[str, ...]
    reused_outputs: tuple[str, ...]

    def as_dict(self) -> dict[str, list[str]]:
        return {
            "required_procs": list(self.required_procs),
            "required_files": list(self.required_files),
            "reused_outputs": list(self.reused_outputs),
        }


@dataclass(frozen=True)
class RerunSet:
    changed_inputs: tuple[str, ...]
    procs_to_rerun: tuple[str, ...]
    entities_reused: tuple[str, ...]

    def as_dict(self) -> dict[str, list[str]]:
        return {
            "changed_inputs": list(self.changed_inputs),
            "procs_to_rerun": list(self.procs_to_rerun),
            "entities_reused": list(self.entities_reused),
        }


@dataclass
class ReplayReport:
    """Outcome of re-walking the recorded run restricted to a plan."""

    order: list[str] = field(default_factory=list)
    reads: dict[str, list[str]] = field(default_factory=dict)
    writes: dict[str, list[str]] = field(default_factory=dict)
    missing_inputs: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing_inputs

    def files_read(self) -> set[str]:
        return {f for files in self.reads.values() for f in files}

    def files_written(self) -> set[str]:
        return {f for files in self.writes.values() for f in files}


def _check_activities(graph: ProvenanceGraph, ids: set[str], role: str) -> None:
    for node_id in sorted(ids):
        node = graph.node(node_id)
        if node.kind is not NodeKind.ACTIVITY:
            raise PlanError(f"{role} id {node_id!r} is not an activity")


def get_procs(selected: set[str], graph: ProvenanceGraph, mode: str = "direct") -> set[str]:
    """Close a process selection over its descendants.

    A direct descendant of p is a child spawned by p, or a process that reads
    a file p generated.  Mode ``direct`` adds one step from the selection;
    mode ``all`` closes transitively.
    """
    _check_activities(graph, selected, "selected")
    if mode not in ("direct", "all"):
        raise PlanError(f"unknown descendant mode {mode!r}")

    def descendants(proc: str) -> set[str]:
        found = set(graph.neighbors(proc, "out", ProvLabel.WAS_INFORMED_BY))
        for output in graph.neighbors(proc, "out", ProvLabel.WAS_GENERATED_BY):
            found.update(graph.readers_of(output))
        return found

    result = set(selected)
    frontier = set(selected)
    while frontier:
        step = set()
        for proc in frontier:
            step |= descendants(proc)
        step -= result
        result |= step
        if mode == "direct":
            break
        frontier = step
    return result


def get_deps(procs: set[str], graph: ProvenanceGraph) -> set[str]:
    """Every entity a process in the set touched: inputs read plus outputs written."""
    _check_activities(graph, procs, "process")
    deps: set[str] = set()
    for proc in procs:
        deps.update(graph.neighbors(proc, "in", ProvLabel.USED))
        deps.update(graph.neighbors(proc, "out", ProvLabel.WAS_GENERATED_BY))
    return deps


def plan_partial_repeat(
    selected: set[str], graph: ProvenanceGraph, mode: str = "direct"
) -> SubContainerPlan:
    """Compute the process closure and the files to stage for it.

    Staged files are exactly what the closed process set reads; outputs of the
    closure are regenerated on replay and not staged.  Files read by the
    closure but generated outside it are recorded pre-computed results.
    """
    if not selected:
        raise PlanError("selection must name at least one process")
    required_procs = get_procs(selected, graph, mode)
    required_files: set[str] = set()
    for proc in required_procs:
        required_files.update(graph.neighbors(proc, "in", ProvLabel.USED))
    reused = {
        entity
        for entity in required_files
        if graph.generators_of(entity) and not set(graph.generators_of(entity)) & required_procs
    }
    return SubContainerPlan(
        required_procs=tuple(sorted(required_procs)),
        required_files=tuple(sorted(required_files)),
        reused_outputs=tuple(sorted(reused)),
    )


def build_sub_container(
    selected: set[str],
    manifest: ContainerManifest,
    store: ChunkStore,
    mode: str = "direct",
) -> tuple[SubContainerPlan, ContainerManifest]:
    """Plan a partial repeat and derive the sub-container manifest for it.

    The new manifest holds exactly the staged files at their original
    container-relative locations plus the provenance subgraph induced by the
    planned processes and every entity they touched.  Chunk payloads are shared
    with the parent container, never copied.
    """
    graph = import_prov_json(json.dumps(manifest.provenance))
    plan = plan_partial_repeat(selected, graph, mode=mode)

    files = {}
    missing_payloads: list[str] = []
    for entity in plan.required_files:
        rel = container_rel_path(entity)
        entry = manifest.files.get(rel)
        if entry is None:
            missing_payloads.append(entity)
            continue
        for chunk_hash in entry.chunks:
            if not store.has(chunk_hash):
                raise StoreError(
                    f"chunk {chunk_hash} for {rel} is missing from the store"
                )
        files[rel] = entry

    keep = set(plan.required_procs) | get_deps(set(plan.required_procs), graph)
    sub_nodes = [graph.node(nid) for nid in sorted(keep)]
    sub_edges = [e for e in graph.edges if e.src in keep and e.dst in keep]
    subgraph = ProvenanceGraph(sub_nodes, sub_edges, trace_digest=graph.trace_digest)

    sub_manifest = ContainerManifest(
        sciunit=manifest.sciunit,
        seq=manifest.seq,
        created=manifest.created,
        command=manifest.command,
        files=files,
        provenance=json.loads(export_prov_json(subgraph)),
        parent_seq=manifest.seq,
        meta={"partial": plan.as_dict()},
    )
    if missing_payloads:
        sub_manifest.meta["metadata_only_entities"] = sorted(missing_payloads)
    return plan, sub_manifest


def plan_modified_repeat(changed: set[str], graph: ProvenanceGraph) -> RerunSet:
    """Determine what must re-run after substituting the given input entities."""
    for entity_id in sorted(changed):
        node = graph.node(entity_id)
        if node.kind is not NodeKind.ENTITY:
            raise PlanError(f"changed id {entity_id!r} is not an entity")
        generators = graph.generators_of(entity_id)
        if generators:
            raise PlanError(
                f"{entity_id!r} is generated by {generators}; only external inputs "
                "can be substituted"
            )
    rerun = downstream_activities(graph, set(changed))
    reused: set[str] = set()
    for node in graph.activities():
        if node.id not in rerun:
            reused.update(graph.neighbors(node.id, "out", ProvLabel.WAS_GENERATED_BY))
    return RerunSet(
        changed_inputs=tuple(sorted(changed)),
        procs_to_rerun=tuple(sorted(rerun)),
        entities_reused=tuple(sorted(reused)),
    )


def spawn_order(graph: ProvenanceGraph, procs: set[str]) -> list[str]:
    """Recorded execution order: parents before spawned children, then by time."""
    _check_activities(graph, procs, "process")

    def start_time(proc: str) -> tuple:
        times = [
            e.interval.begin
            for e in list(graph.in_edges(proc)) + list(graph.out_edges(proc))
            if e.interval is not None
        ]
        return (min(times) if times else 0, proc)

    ordered: list[str] = []
    placed: set[str] = set()
    for proc in sorted(procs, key=start_time):
        stack = [proc]
        chain: list[str] = []
        while stack:
            current = stack.pop()
            parents = [
                p
                for p in graph.neighbors(current, "in", ProvLabel.WAS_INFORMED_BY)
                if p in procs and p not in placed
            ]
            chain.append(current)
            stack.extend(parents)
        for node_id in reversed(chain):
            if node_id not in placed:
                placed.add(node_id)
                ordered.append(node_id)
    return ordered


def simulated_rerun_graph(
    graph: ProvenanceGraph, pid_offset: int = 1000, time_offset: int = 1_000_000_000
) -> ProvenanceGraph:
    """Provenance a faithful re-execution would audit: same structure, fresh
    pids and timestamps."""
    from .prov_graph import ProvEdge, make_node
    from .trace_model import TimeInterval, activity_id

    mapping: dict[str, str] = {}
    nodes = []
    for node in graph.nodes.values():
        if node.kind is NodeKind.ACTIVITY:
            pid = node.attr("pid")
            new_pid = (pid + pid_offset) if isinstance(pid, int) else pid_offset
            new_id = activity_id(new_pid)
            mapping[node.id] = new_id
            attrs = dict(node.attrs)
            attrs["pid"] = new_pid
            nodes.append(make_node(new_id, node.kind, node.label, **attrs))
        else:
            mapping[node.id] = node.id
            nodes.append(node)
    edges = []
    for edge in graph.edges:
        interval = edge.interval
        if interval is not None:
            interval = TimeInterval(interval.begin + time_offset, interval.end + time_offset)
        edges.append(ProvEdge(mapping[edge.src], mapping[edge.dst], edge.label, interval))
    return ProvenanceGraph(nodes, edges, trace_digest=graph.trace_digest)


def simulate_replay(plan: SubContainerPlan, graph: ProvenanceGraph) -> ReplayReport:
    """Re-walk the recorded run for the planned processes against staged files.

    Each process reads the entities it read originally; a read is satisfied by
    a staged file or by an output some earlier planned process regenerated.
    """
    report = ReplayReport()
    available = set(plan.required_files)
    for proc in spawn_order(graph, set(plan.required_procs)):
        report.order.append(proc)
        reads = graph.neighbors(proc, "in", ProvLabel.USED)
        writes = graph.neighbors(proc, "out", ProvLabel.WAS_GENERATED_BY)
        report.reads[proc] = reads
        report.writes[proc] = writes
        for entity in reads:
            if entity not in available:
                report.missing_inputs.append(f"{proc} needs {entity}")
        available.update(writes)
    return report

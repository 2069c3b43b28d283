"""Labeled provenance graph shared by verification, planning, and summarization.

Nodes are activities (processes) or entities (files / file versions).  Edges
carry W3C PROV relation names and are stored in dataflow direction: an entity
points into the activity that read it (``used``), an activity points at the
entity it produced (``wasGeneratedBy``), and a parent activity points at the
child it spawned (``wasInformedBy``).  Serialization to PROV-JSON is
role-based, so the wire format is orientation-neutral.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .trace_model import NodeKind, TimeInterval


class ProvLabel(str, Enum):
    USED = "used"
    WAS_GENERATED_BY = "wasGeneratedBy"
    WAS_INFORMED_BY = "wasInformedBy"


# Dataflow typing: (src kind, dst kind) per label.
PROV_EDGE_TYPING: dict[ProvLabel, tuple[NodeKind, NodeKind]] = {
    ProvLabel.USED: (NodeKind.ENTITY, NodeKind.ACTIVITY),
    ProvLabel.WAS_GENERATED_BY: (NodeKind.ACTIVITY, NodeKind.ENTITY),
    ProvLabel.WAS_INFORMED_BY: (NodeKind.ACTIVITY, NodeKind.ACTIVITY),
}

# PROV-JSON role keys per label, in (src role, dst role) order.
_PROV_ROLES: dict[ProvLabel, tuple[str, str]] = {
    ProvLabel.USED: ("prov:entity", "prov:activity"),
    ProvLabel.WAS_GENERATED_BY: ("prov:activity", "prov:entity"),
    ProvLabel.WAS_INFORMED_BY: ("prov:informant", "prov:informed"),
}


class GraphFormatError(ValueError):
    """Malformed serialized graph; message points at the offending key."""


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class ProvNode:
    id: str
    kind: NodeKind
    label: str
    attrs: tuple[tuple[str, object], ...] = ()

    def attr(self, name: str, default: object = None) -> object:
        for key, value in self.attrs:
            if key == name:
                return value
        return default


@dataclass(frozen=True, order=True)
class ProvEdge:
    src: str
    dst: str
    label: ProvLabel
    interval: TimeInterval | None = None


def make_node(
    id: str,
    kind: NodeKind,
    label: str | None = None,
    **attrs: object,
) -> ProvNode:
    """Convenience constructor; attrs are stored sorted for stable equality."""
    items = tuple(sorted((k, v) for k, v in attrs.items() if v is not None))
    return ProvNode(id=id, kind=kind, label=label if label is not None else id, attrs=items)


class ProvenanceGraph:
    """Immutable typed digraph with per-source dependency caching.

    Construction validates id uniqueness, endpoint existence, and edge typing.
    Equality ignores node/edge insertion order and the dependency cache.
    """

    def __init__(
        self,
        nodes: Iterable[ProvNode],
        edges: Iterable[ProvEdge],
        trace_digest: str | None = None,
    ):
        node_map: dict[str, ProvNode] = {}
        for node in nodes:
            if node.id in node_map:
                raise ValueError(f"duplicate node id {node.id!r}")
            node_map[node.id] = node
        edge_list: list[ProvEdge] = []
        seen: set[tuple[str, str, ProvLabel]] = set()
        for edge in edges:
            for endpoint in (edge.src, edge.dst):
                if endpoint not in node_map:
                    raise ValueError(f"edge endpoint {endpoint!r} is not a node")
            want_src, want_dst = PROV_EDGE_TYPING[edge.label]
            if node_map[edge.src].kind is not want_src or node_map[edge.dst].kind is not want_dst:
                raise ValueError(
                    f"{edge.label.value} edge {edge.src!r}->{edge.dst!r} violates "
                    f"{want_src.value}->{want_dst.value} typing"
                )
            key = (edge.src, edge.dst, edge.label)
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            edge_list.append(edge)

        self._nodes = dict(sorted(node_map.items()))
        self._edges = tuple(sorted(edge_list))
        self.trace_digest = trace_digest
        self._out: dict[str, list[ProvEdge]] = {nid: [] for nid in self._nodes}
        self._in: dict[str, list[ProvEdge]] = {nid: [] for nid in self._nodes}
        for edge in self._edges:
            self._out[edge.src].append(edge)
            self._in[edge.dst].append(edge)
        # Lazily filled by dependency_inference: source entity -> {node: time}.
        self.reach_cache: dict[str, dict[str, int]] = {}

    @property
    def nodes(self) -> Mapping[str, ProvNode]:
        return self._nodes

    @property
    def edges(self) -> tuple[ProvEdge, ...]:
        return self._edges

    def node(self, node_id: str) -> ProvNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProvenanceGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((tuple(self._nodes.items()), self._edges))

    def activities(self) -> list[ProvNode]:
        return [n for n in self._nodes.values() if n.kind is NodeKind.ACTIVITY]

    def entities(self) -> list[ProvNode]:
        return [n for n in self._nodes.values() if n.kind is NodeKind.ENTITY]

    def out_edges(self, node_id: str, label: ProvLabel | None = None) -> list[ProvEdge]:
        self.node(node_id)
        edges = self._out[node_id]
        return [e for e in edges if label is None or e.label is label]

    def in_edges(self, node_id: str, label: ProvLabel | None = None) -> list[ProvEdge]:
        self.node(node_id)
        edges = self._in[node_id]
        return [e for e in edges if label is None or e.label is label]

    def neighbors(
        self, node_id: str, direction: str, label: ProvLabel | None = None
    ) -> list[str]:
        """Adjacent node ids, sorted; ``direction`` is ``"in"`` or ``"out"``."""
        if direction == "in":
            found = {e.src for e in self.in_edges(node_id, label)}
        elif direction == "out":
            found = {e.dst for e in self.out_edges(node_id, label)}
        else:
            raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
        return sorted(found)

    def inputs(self) -> list[str]:
        """Entity ids that no activity generated (external inputs)."""
        return sorted(
            n.id
            for n in self.entities()
            if not self._in[n.id]  # only wasGeneratedBy edges can enter an entity
        )

    def generators_of(self, entity_id: str) -> list[str]:
        return self.neighbors(entity_id, "in", ProvLabel.WAS_GENERATED_BY)

    def readers_of(self, entity_id: str) -> list[str]:
        return self.neighbors(entity_id, "out", ProvLabel.USED)

    def digest(self) -> str:
        return hashlib.sha256(export_prov_json(self)).hexdigest()


def _interval_pair(interval: TimeInterval | None) -> list[int] | None:
    return None if interval is None else [interval.begin, interval.end]


def export_prov_json(graph: ProvenanceGraph) -> bytes:
    """Serialize to the PROV-JSON layout; byte-identical for equal graphs."""
    doc: dict[str, dict] = {"activity": {}, "entity": {}}
    for node in graph.nodes.values():
        section = "activity" if node.kind is NodeKind.ACTIVITY else "entity"
        record: dict[str, object] = {"prov:label": node.label}
        record.update({k: v for k, v in node.attrs})
        doc[section][node.id] = record
    for label in ProvLabel:
        doc[label.value] = {}
    for index, edge in enumerate(graph.edges):
        src_role, dst_role = _PROV_ROLES[edge.label]
        record = {src_role: edge.src, dst_role: edge.dst}
        pair = _interval_pair(edge.interval)
        if pair is not None:
            record["prov:time"] = pair
        doc[edge.label.value][f"_:{label_short(edge.label)}{index}"] = record
    if graph.trace_digest:
        doc["prefix"] = {"trace_digest": graph.trace_digest}
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def label_short(label: ProvLabel) -> str:
    return {"used": "u", "wasGeneratedBy": "g", "wasInformedBy": "i"}[label.value]


def import_prov_json(data: bytes | str) -> ProvenanceGraph:
    """Parse a PROV-JSON document produced by :func:`export_prov_json`."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise GraphFormatError("top level must be an object")

    nodes: list[ProvNode] = []
    for section, kind in (("activity", NodeKind.ACTIVITY), ("entity", NodeKind.ENTITY)):
        table = doc.get(section, {})
        if not isinstance(table, dict):
            raise GraphFormatError(f"section {section!r} must be an object")
        for node_id, record in table.items():
            if not isinstance(record, dict):
                raise GraphFormatError(f"{section}/{node_id}: record must be an object")
            label = record.get("prov:label", node_id)
            attrs = {k: v for k, v in record.items() if k != "prov:label"}
            nodes.append(make_node(node_id, kind, label, **attrs))

    edges: list[ProvEdge] = []
    for label in ProvLabel:
        table = doc.get(label.value, {})
        if not isinstance(table, dict):
            raise GraphFormatError(f"section {label.value!r} must be an object")
        src_role, dst_role = _PROV_ROLES[label]
        for rel_id, record in table.items():
            if not isinstance(record, dict):
                raise GraphFormatError(f"{label.value}/{rel_id}: record must be an object")
            try:
                src, dst = record[src_role], record[dst_role]
            except KeyError as exc:
                raise GraphFormatError(f"{label.value}/{rel_id}: missing role {exc}") from None
            interval = None
            if "prov:time" in record:
                pair = record["prov:time"]
                if (
                    not isinstance(pair, list)
                    or len(pair) != 2
                    or not all(isinstance(t, int) for t in pair)
                ):
                    raise GraphFormatError(f"{label.value}/{rel_id}: prov:time must be [begin, end]")
                interval = TimeInterval(*pair)
            edges.append(ProvEdge(src, dst, label, interval))

    digest = None
    prefix = doc.get("prefix")
    if isinstance(prefix, dict):
        digest = prefix.get("trace_digest")
    try:
        return ProvenanceGraph(nodes, edges, trace_digest=digest)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: ProvenanceGraph) -> str:
    """Render for graphviz: activities as boxes, entities as ellipses."""
    lines = ["digraph provenance {"]
    for node in graph.nodes.values():
        shape = "box" if node.kind is NodeKind.ACTIVITY else "ellipse"
        lines.append(
            f"  {_dot_quote(node.id)} [shape={shape}, label={_dot_quote(node.label)}];"
        )
    for edge in graph.edges:
        lines.append(
            f"  {_dot_quote(edge.src)} -> {_dot_quote(edge.dst)} "
            f"[label={_dot_quote(edge.label.value)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass
class GraphBuilder:
    """Single-threaded accumulator for hand-assembled graphs (mostly tests)."""

    nodes: list[ProvNode] = field(default_factory=list)
    edges: list[ProvEdge] = field(default_factory=list)

    def activity(self, id: str, label: str | None = None, **attrs: object) -> "GraphBuilder":
        self.nodes.append(make_node(id, NodeKind.ACTIVITY, label, **attrs))
        return self

    def entity(self, id: str, label: str | None = None, **attrs: object) -> "GraphBuilder":
        self.nodes.append(make_node(id, NodeKind.ENTITY, label, **attrs))
        return self

    def edge(
        self,
        src: str,
        dst: str,
        label: ProvLabel,
        interval: tuple[int, int] | TimeInterval | None = None,
    ) -> "GraphBuilder":
        if isinstance(interval, tuple):
            interval = TimeInterval(*interval)
        self.edges.append(ProvEdge(src, dst, label, interval))
        return self

    def build(self, trace_digest: str | None = None) -> ProvenanceGraph:
        return ProvenanceGraph(self.nodes, self.edges, trace_digest=trace_digest)

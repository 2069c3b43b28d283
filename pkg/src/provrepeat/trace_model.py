"""Execution-trace data model and the newline-delimited JSON trace-log format.

A trace is the raw, temporally annotated record of which processes touched
which files.  Connectivity in a trace does not imply dependency; that
distinction is drawn later by :mod:`provrepeat.dependency_inference`.
"""

from __future__ import annotations

import hashlib
import json
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping


class NodeKind(str, Enum):
    ACTIVITY = "activity"
    ENTITY = "entity"


class TraceLabel(str, Enum):
    READ_FROM = "readFrom"
    HAS_WRITTEN = "hasWritten"
    EXECUTED = "executed"


# (src kind, dst kind) required by each trace label.  readFrom points from the
# file into the process that read it; hasWritten from the writer to the file;
# executed from parent process to spawned child.
EDGE_TYPING: dict[TraceLabel, tuple[NodeKind, NodeKind]] = {
    TraceLabel.READ_FROM: (NodeKind.ENTITY, NodeKind.ACTIVITY),
    TraceLabel.HAS_WRITTEN: (NodeKind.ACTIVITY, NodeKind.ENTITY),
    TraceLabel.EXECUTED: (NodeKind.ACTIVITY, NodeKind.ACTIVITY),
}


class TraceParseError(ValueError):
    """Malformed trace log.  Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class TimeInterval:
    """Interval in integer nanoseconds; begin == end encodes an instant.

    ``begin > end`` is constructible so validators can report it as data; the
    parser rejects such records outright.
    """

    begin: int
    end: int

    def is_ordered(self) -> bool:
        return self.begin <= self.end

    def overlaps(self, other: "TimeInterval") -> bool:
        return self.begin <= other.end and other.begin <= self.end

    def hull(self, other: "TimeInterval") -> "TimeInterval":
        return TimeInterval(min(self.begin, other.begin), max(self.end, other.end))


@dataclass(frozen=True)
class TraceNode:
    id: str
    kind: NodeKind
    label: str
    pid: int | None = None
    path: str | None = None


@dataclass(frozen=True, order=True)
class TraceEdge:
    src: str
    dst: str
    label: TraceLabel
    interval: TimeInterval


@dataclass(frozen=True)
class Violation:
    """A well-formedness defect found by :func:`validate_trace`.

    Violations are data, not exceptions: a trace assembled programmatically may
    carry several and callers decide what to do.
    """

    code: str
    message: str
    subject: str  # node id or "src -label-> dst" edge key


def edge_key(src: str, label: TraceLabel, dst: str) -> str:
    return f"{src} -{label.value}-> {dst}"


def canonical_path(path: str) -> str:
    """Normalize an entity path, preserving any ``#vN`` version suffix."""
    base, sep, version = path.partition("#")
    norm = posixpath.normpath(base) if base else base
    return norm + sep + version


def activity_id(pid: int) -> str:
    return f"p:{pid}"


@dataclass
class ExecutionTrace:
    """An immutable-by-convention bag of trace nodes and merged edges.

    Equality considers nodes and edges only; ``meta`` carries free-form
    annotations (command line, record counts, audit notes) that do not affect
    identity.
    """

    nodes: dict[str, TraceNode]
    edges: tuple[TraceEdge, ...]
    meta: dict[str, object] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExecutionTrace):
            return NotImplemented
        return self.nodes == other.nodes and set(self.edges) == set(other.edges)

    def __hash__(self) -> int:  # pragma: no cover - traces rarely hashed
        return hash((frozenset(self.nodes), frozenset(self.edges)))

    @property
    def activities(self) -> list[TraceNode]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.ACTIVITY]

    @property
    def entities(self) -> list[TraceNode]:
        return [n for n in self.nodes.values() if n.kind is NodeKind.ENTITY]

    def digest(self) -> str:
        return hashlib.sha256(serialize_trace(self)).hexdigest()


def _node_from_descriptor(desc: object, line: int) -> TraceNode:
    if not isinstance(desc, dict):
        raise TraceParseError(f"node descriptor must be an object, got {type(desc).__name__}", line)
    kind = desc.get("kind")
    if kind == "activity":
        pid = desc.get("pid")
        label = desc.get("label")
        if not isinstance(pid, int) or isinstance(pid, bool):
            raise TraceParseError("activity descriptor needs an integer 'pid'", line)
        if not isinstance(label, str) or not label:
            raise TraceParseError("activity descriptor needs a non-empty 'label'", line)
        return TraceNode(id=activity_id(pid), kind=NodeKind.ACTIVITY, label=label, pid=pid)
    if kind == "entity":
        path = desc.get("path")
        if not isinstance(path, str) or not path:
            raise TraceParseError("entity descriptor needs a non-empty 'path'", line)
        path = canonical_path(path)
        return TraceNode(id=path, kind=NodeKind.ENTITY, label=path, path=path)
    raise TraceParseError(f"unknown node kind {kind!r}", line)


def _parse_record(record: object, line: int) -> tuple[TraceNode, TraceNode, TraceLabel, TimeInterval]:
    if not isinstance(record, dict):
        raise TraceParseError("record must be a JSON object", line)
    op = record.get("op")
    try:
        label = TraceLabel(op)
    except ValueError:
        raise TraceParseError(f"unknown op {op!r}", line) from None
    subject = _node_from_descriptor(record.get("subject"), line)
    obj = _node_from_descriptor(record.get("object"), line)
    want_src, want_dst = EDGE_TYPING[label]
    if subject.kind is not want_src or obj.kind is not want_dst:
        raise TraceParseError(
            f"op {label.value!r} requires {want_src.value} subject and "
            f"{want_dst.value} object, got {subject.kind.value}/{obj.kind.value}",
            line,
        )
    t_begin, t_end = record.get("t_begin"), record.get("t_end")
    for name, value in (("t_begin", t_begin), ("t_end", t_end)):
        if not isinstance(value, int) or isinstance(value, bool):
            raise TraceParseError(f"{name} must be an integer timestamp", line)
    if t_begin > t_end:
        raise TraceParseError(f"interval [{t_begin}, {t_end}] has begin > end", line)
    return subject, obj, label, TimeInterval(t_begin, t_end)


def parse_trace_log(data: bytes | str | IO[bytes]) -> ExecutionTrace:
    """Parse a newline-delimited JSON trace log into an :class:`ExecutionTrace`.

    Records sharing (src, dst, label) merge into one edge spanning the interval
    hull; the per-pair record count is kept in ``meta['record_counts']`` for
    pairs seen more than once.  Raises :class:`TraceParseError` with the
    offending line number on any malformed input.
    """
    if hasattr(data, "read"):
        data = data.read()  # type: ignore[union-attr]
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceParseError(f"input is not valid UTF-8: {exc}") from None
    else:
        text = data

    nodes: dict[str, TraceNode] = {}
    merged: dict[tuple[str, str, TraceLabel], TimeInterval] = {}
    counts: dict[tuple[str, str, TraceLabel], int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON ({exc.msg})", lineno) from None
        src, dst, label, interval = _parse_record(record, lineno)
        for node in (src, dst):
            known = nodes.get(node.id)
            if known is None:
                nodes[node.id] = node
            elif known.kind is not node.kind:
                raise TraceParseError(
                    f"node {node.id!r} already seen with kind {known.kind.value}", lineno
                )
            # First-seen label wins for activities (e.g. pre-exec name).
        key = (src.id, dst.id, label)
        merged[key] = interval if key not in merged else merged[key].hull(interval)
        counts[key] = counts.get(key, 0) + 1

    edges = tuple(
        sorted(TraceEdge(src, dst, label, iv) for (src, dst, label), iv in merged.items())
    )
    meta: dict[str, object] = {}
    repeated = {
        edge_key(src, label, dst): n for (src, dst, label), n in counts.items() if n > 1
    }
    if repeated:
        meta["record_counts"] = repeated
    return ExecutionTrace(nodes=nodes, edges=edges, meta=meta)


def trace_records(trace: ExecutionTrace) -> Iterator[dict]:
    """Yield one JSON-ready record per edge, in canonical (sorted) order."""
    for edge in sorted(trace.edges):
        subject = _descriptor(trace.nodes[edge.src])
        obj = _descriptor(trace.nodes[edge.dst])
        yield {
            "op": edge.label.value,
            "subject": subject,
            "object": obj,
            "t_begin": edge.interval.begin,
            "t_end": edge.interval.end,
        }


def _descriptor(node: TraceNode) -> dict:
    if node.kind is NodeKind.ACTIVITY:
        return {"kind": "activity", "pid": node.pid, "label": node.label}
    return {"kind": "entity", "path": node.path}


def serialize_trace(trace: ExecutionTrace) -> bytes:
    """Render the trace back to its log format (one record per merged edge).

    Nodes that touch no edge are not representable in the record format and are
    dropped; traces produced by :func:`parse_trace_log` never contain them.
    """
    lines = [json.dumps(rec, sort_keys=True) for rec in trace_records(trace)]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def validate_trace(trace: ExecutionTrace) -> list[Violation]:
    """Check every structural invariant; an empty result means well-formed."""
    violations: list[Violation] = []
    for node in trace.nodes.values():
        if node.kind is NodeKind.ACTIVITY and node.pid is None:
            violations.append(Violation("activity-pid", "activity node lacks a pid", node.id))
        if node.kind is NodeKind.ACTIVITY and node.path is not None:
            violations.append(Violation("activity-path", "activity node carries a path", node.id))
        if node.kind is NodeKind.ENTITY and node.path is None:
            violations.append(Violation("entity-path", "entity node lacks a path", node.id))
        if node.kind is NodeKind.ENTITY and node.pid is not None:
            violations.append(Violation("entity-pid", "entity node carries a pid", node.id))

    seen: set[tuple[str, str, TraceLabel]] = set()
    for edge in trace.edges:
        key = edge_key(edge.src, edge.label, edge.dst)
        missing = [n for n in (edge.src, edge.dst) if n not in trace.nodes]
        if missing:
            violations.append(
                Violation("dangling-edge", f"edge references unknown node(s) {missing}", key)
            )
            continue
        want_src, want_dst = EDGE_TYPING[edge.label]
        src_kind = trace.nodes[edge.src].kind
        dst_kind = trace.nodes[edge.dst].kind
        if src_kind is not want_src or dst_kind is not want_dst:
            violations.append(
                Violation(
                    "edge-typing",
                    f"{edge.label.value} requires {want_src.value}->{want_dst.value}, "
                    f"got {src_kind.value}->{dst_kind.value}",
                    key,
                )
            )
        if not edge.interval.is_ordered():
            violations.append(Violation("interval-order", "interval begin > end", key))
        if (edge.src, edge.dst, edge.label) in seen:
            violations.append(Violation("duplicate-edge", "duplicate (src, dst, label)", key))
        seen.add((edge.src, edge.dst, edge.label))
    return violations


def build_trace(
    records: Iterable[tuple[str, str, TraceLabel, TimeInterval]],
    nodes: Iterable[TraceNode],
    meta: Mapping[str, object] | None = None,
) -> ExecutionTrace:
    """Assemble a trace from pre-built nodes and (src, dst, label, interval) tuples."""
    node_map = {n.id: n for n in nodes}
    merged: dict[tuple[str, str, TraceLabel], TimeInterval] = {}
    for src, dst, label, interval in records:
        key = (src, dst, label)
        merged[key] = interval if key not in merged else merged[key].hull(interval)
    edges = tuple(sorted(TraceEdge(s, d, l, iv) for (s, d, l), iv in merged.items()))
    return ExecutionTrace(nodes=node_map, edges=edges, meta=dict(meta or {}))

"""Human-scale summaries of replete provenance graphs.

Two complementary reductions are provided:

* a collapse pipeline that merges structurally interchangeable nodes
  (similarity), folds single-use files and leaf processes into their parents
  (packability), and finally replaces widely shared files with annotations on
  the processes that touch them;
* ancestry-degree grouping, a partition of the nodes in which group members
  share node kind, ancestor groups per relation label, and per-label in/out
  degree toward every other group.

Summaries are lossless: the original graph is kept alongside a containment
tree, and the visible view is recomputed from it, so expanding everything
always reproduces the replete graph exactly.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from .prov_graph import ProvenanceGraph, ProvLabel
from .trace_model import NodeKind

START_NODE = "__start__"
START_LABEL = "start"


class SummaryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Collapse pipeline (similarity / packability / annotation)
# ---------------------------------------------------------------------------


class SummaryGraph:
    """A view over an untouched original graph plus a containment tree.

    Tree nodes are original node ids or synthetic merge ids.  ``merged``
    parents dissolve when expanded; children packed under a host appear next
    to it.  Files removed into annotations are tracked separately and restored
    by :meth:`expand_all`.
    """

    def __init__(self, graph: ProvenanceGraph):
        self.original = graph
        self.parent: dict[str, tuple[str, str]] = {}  # child -> (parent, "merged"|"packed")
        self.children: dict[str, list[str]] = {}
        self.kind_of: dict[str, NodeKind] = {nid: n.kind for nid, n in graph.nodes.items()}
        self.label_of: dict[str, str] = {nid: n.label for nid, n in graph.nodes.items()}
        self.visible: set[str] = set(graph.nodes)
        self.annotated: set[str] = set()
        self.annotations: dict[str, list[str]] = {}
        self.passes: list[str] = []
        self._merge_serial = 0

    # -- construction helpers -------------------------------------------------

    def copy(self) -> "SummaryGraph":
        dup = SummaryGraph(self.original)
        dup.parent = dict(self.parent)
        dup.children = {k: list(v) for k, v in self.children.items()}
        dup.kind_of = dict(self.kind_of)
        dup.label_of = dict(self.label_of)
        dup.visible = set(self.visible)
        dup.annotated = set(self.annotated)
        dup.annotations = {k: list(v) for k, v in self.annotations.items()}
        dup.passes = list(self.passes)
        dup._merge_serial = self._merge_serial
        return dup

    def _new_merge_node(self, members: list[str], kind: NodeKind) -> str:
        self._merge_serial += 1
        node_id = f"grp:{self._merge_serial}"
        labels = sorted({self.label_of[m] for m in members})
        noun = "files" if kind is NodeKind.ENTITY else "processes"
        label = labels[0] if len(labels) == 1 else f"{self._member_count_of(members)} {noun}"
        self.kind_of[node_id] = kind
        self.label_of[node_id] = label
        self.children[node_id] = sorted(members)
        for member in members:
            self.parent[member] = (node_id, "merged")
            self._move_annotations(member, node_id)
        self.visible.difference_update(members)
        self.visible.add(node_id)
        return node_id

    def _member_count_of(self, members: list[str]) -> int:
        return sum(self.member_count(m) for m in members)

    def _pack(self, child: str, host: str) -> None:
        self.parent[child] = (host, "packed")
        self.children.setdefault(host, []).append(child)
        self.children[host].sort()
        self.visible.discard(child)
        self._move_annotations(child, host)

    def _move_annotations(self, source: str, target: str) -> None:
        carried = self.annotations.pop(source, None)
        if carried:
            self.annotations.setdefault(target, []).extend(carried)

    # -- view -----------------------------------------------------------------

    def rep(self, original_id: str) -> str | None:
        """Visible supernode covering an original node, or None if annotated away."""
        node = original_id
        while node not in self.visible:
            if node in self.annotated:
                return None
            link = self.parent.get(node)
            if link is None:
                return None
            node = link[0]
        return node

    def member_count(self, supernode: str) -> int:
        if supernode in self.original.nodes:
            own = 1
        else:
            own = 0
        return own + sum(self.member_count(c) for c in self.children.get(supernode, ()))

    def leaves(self, supernode: str) -> list[str]:
        found = [supernode] if supernode in self.original.nodes else []
        for child in self.children.get(supernode, ()):
            found.extend(self.leaves(child))
        return sorted(found)

    def view_edges(self) -> Counter[tuple[str, str, ProvLabel]]:
        """Superedges with multiplicity, hiding intra-supernode edges."""
        counts: Counter[tuple[str, str, ProvLabel]] = Counter()
        for edge in self.original.edges:
            src, dst = self.rep(edge.src), self.rep(edge.dst)
            if src is None or dst is None or src == dst:
                continue
            counts[(src, dst, edge.label)] += 1
        return counts

    def supernodes(self) -> list[str]:
        return sorted(self.visible)

    def node_counts(self) -> dict[str, int]:
        files = sum(1 for n in self.visible if self.kind_of[n] is NodeKind.ENTITY)
        procs = sum(1 for n in self.visible if self.kind_of[n] is NodeKind.ACTIVITY)
        return {"files": files, "processes": procs, "edges": len(self.view_edges())}

    # -- expansion ------------------------------------------------------------

    def expand(self, supernode: str) -> "SummaryGraph":
        """Reveal one level under a supernode (merge parents dissolve)."""
        if supernode not in self.visible:
            raise SummaryError(f"unknown or hidden supernode {supernode!r}")
        kids = self.children.get(supernode, [])
        revealed = [k for k in kids if k not in self.visible]
        self.visible.update(revealed)
        if supernode not in self.original.nodes:
            # merge node: dissolves entirely
            self.visible.discard(supernode)
            for child in kids:
                self.parent.pop(child, None)
            self.children.pop(supernode, None)
        else:
            for child in revealed:
                self.parent.pop(child, None)
            self.children[supernode] = []
        return self

    def expand_all(self) -> "SummaryGraph":
        self.visible = set(self.original.nodes)
        self.parent.clear()
        self.children.clear()
        self.annotated.clear()
        self.annotations.clear()
        return self

    def depth_of(self, original_id: str) -> int:
        """Expansions needed to reveal an original node (annotation restore counts as one)."""
        if original_id in self.visible:
            return 0
        node = original_id
        clicks = 0
        while node not in self.visible:
            if node in self.annotated:
                return clicks + 1
            link = self.parent.get(node)
            if link is None:
                return clicks
            node = link[0]
            clicks += 1
        return clicks

    def max_depth(self) -> int:
        return max((self.depth_of(nid) for nid in self.original.nodes), default=0)

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> dict:
        edges = [
            {"src": s, "dst": d, "label": lbl.value, "multiplicity": n}
            for (s, d, lbl), n in sorted(self.view_edges().items())
        ]
        expansion = {
            nid: self.children.get(nid, [])
            for nid in sorted(self.visible)
            if self.children.get(nid)
        }
        return {
            "mode": "collapse",
            "groups": {
                nid: {
                    "kind": self.kind_of[nid].value,
                    "label": self.label_of[nid],
                    "members": self.member_count(nid),
                }
                for nid in self.supernodes()
            },
            "group_edges": edges,
            "annotations": {k: sorted(v) for k, v in sorted(self.annotations.items())},
            "expansion_map": expansion,
        }

    def to_dot(self) -> str:
        lines = ["digraph summary {"]
        for nid in self.supernodes():
            shape = "box" if self.kind_of[nid] is NodeKind.ACTIVITY else "ellipse"
            count = self.member_count(nid)
            label = self.label_of[nid] + (f" (x{count})" if count > 1 else "")
            tooltip = ""
            if self.annotations.get(nid):
                tooltip = f', tooltip="{", ".join(sorted(self.annotations[nid]))}"'
            lines.append(f'  "{_esc(nid)}" [shape={shape}, label="{_esc(label)}"{tooltip}];')
        for (src, dst, lbl), n in sorted(self.view_edges().items()):
            mult = f" (x{n})" if n > 1 else ""
            lines.append(f'  "{_esc(src)}" -> "{_esc(dst)}" [label="{_esc(lbl.value + mult)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _esc(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _as_summary(graph_or_summary: ProvenanceGraph | SummaryGraph) -> SummaryGraph:
    if isinstance(graph_or_summary, SummaryGraph):
        return graph_or_summary
    return SummaryGraph(graph_or_summary)


def collapse_similarity(graph_or_summary: ProvenanceGraph | SummaryGraph) -> SummaryGraph:
    """Merge supernodes of equal kind with identical connection sets.

    Connection sets are compared as sets of (label, direction, neighbor group)
    with neighbor groups refined to a fixpoint, so interchangeable nodes merge
    even though their literal neighbor ids differ.  Annotations already
    attached to a supernode are part of its identity and must match too.
    """
    summary = _as_summary(graph_or_summary)
    nodes = summary.supernodes()
    edges = summary.view_edges()

    incident: dict[str, set[tuple[ProvLabel, str, str]]] = {n: set() for n in nodes}
    for (src, dst, label), _ in edges.items():
        incident[src].add((label, "out", dst))
        incident[dst].add((label, "in", src))
    notes = {n: tuple(sorted(summary.annotations.get(n, ()))) for n in nodes}

    group: dict[str, int] = {n: (0 if summary.kind_of[n] is NodeKind.ENTITY else 1) for n in nodes}
    while True:
        signatures = {
            n: (
                group[n],
                notes[n],
                frozenset((lbl.value, d, group[other]) for lbl, d, other in incident[n]),
            )
            for n in nodes
        }
        fresh: dict[tuple, int] = {}
        regrouped = {}
        for n in nodes:
            key = signatures[n]
            if key not in fresh:
                fresh[key] = len(fresh)
            regrouped[n] = fresh[key]
        if regrouped == group:
            break
        group = regrouped

    clusters: dict[int, list[str]] = {}
    for n in nodes:
        clusters.setdefault(group[n], []).append(n)
    merged = False
    for members in sorted(clusters.values(), key=lambda ms: min(ms)):
        if len(members) > 1:
            summary._new_merge_node(sorted(members), summary.kind_of[members[0]])
            merged = True
    if merged:
        summary.passes.append("similarity")
    return summary


def collapse_packability(graph_or_summary: ProvenanceGraph | SummaryGraph) -> SummaryGraph:
    """Fold hub-adjacent supernodes into their parent processes, to a fixpoint.

    Packs: files with a single incident edge; processes whose only dependency
    edge is the spawn from their parent; and files written by one process and
    read by exactly one other, which become a process-to-process edge.
    """
    summary = _as_summary(graph_or_summary)
    packed_any = False
    while True:
        edges = summary.view_edges()
        incident: dict[str, list[tuple[str, str, ProvLabel]]] = {
            n: [] for n in summary.visible
        }
        for (src, dst, label), _ in edges.items():
            incident[src].append((src, dst, label))
            incident[dst].append((src, dst, label))

        moves: list[tuple[str, str]] = []  # (child, host)
        for node in summary.supernodes():
            kind = summary.kind_of[node]
            around = incident[node]
            if kind is NodeKind.ENTITY and len(around) == 1:
                src, dst, _ = around[0]
                host = dst if src == node else src
                if summary.kind_of[host] is NodeKind.ACTIVITY:
                    moves.append((node, host))
            elif kind is NodeKind.ACTIVITY:
                inbound = [e for e in around if e[1] == node]
                if len(inbound) == 1 and inbound[0][2] is ProvLabel.WAS_INFORMED_BY:
                    moves.append((node, inbound[0][0]))
            elif kind is NodeKind.ENTITY and len(around) == 2:
                writers = [e[0] for e in around if e[1] == node and e[2] is ProvLabel.WAS_GENERATED_BY]
                readers = [e[1] for e in around if e[0] == node and e[2] is ProvLabel.USED]
                if len(writers) == 1 and len(readers) == 1 and writers[0] != readers[0]:
                    moves.append((node, writers[0]))

        applied = False
        moving = {child for child, _ in moves}
        for child, host in moves:
            # defer packs whose host is itself being packed away this round
            if host in moving or child not in summary.visible or host not in summary.visible:
                continue
            summary._pack(child, host)
            applied = True
        if not applied:
            break
        packed_any = True
    if packed_any:
        summary.passes.append("packability")
    return summary


def annotate_shared_files(summary: SummaryGraph) -> SummaryGraph:
    """Replace file supernodes with two or more process edges by annotations."""
    edges = summary.view_edges()
    incident: dict[str, list[tuple[str, str, ProvLabel]]] = {n: [] for n in summary.visible}
    for (src, dst, label), _ in edges.items():
        incident[src].append((src, dst, label))
        incident[dst].append((src, dst, label))

    annotated = False
    for node in summary.supernodes():
        if summary.kind_of[node] is not NodeKind.ENTITY:
            continue
        around = incident[node]
        targets = []
        for src, dst, _ in around:
            other = dst if src == node else src
            if summary.kind_of[other] is NodeKind.ACTIVITY:
                targets.append(other)
        if len(targets) >= 2 and len(around) == len(targets):
            summary.visible.discard(node)
            summary.annotated.add(node)
            for proc in targets:
                summary.annotations.setdefault(proc, []).append(summary.label_of[node])
            annotated = True
    if annotated:
        summary.passes.append("annotation")
    return summary


def summarize_collapse(graph: ProvenanceGraph, max_rounds: int = 10) -> SummaryGraph:
    """Run similarity, packability, and annotation to a joint fixpoint."""
    summary = SummaryGraph(graph)
    for _ in range(max_rounds):
        before = (set(summary.visible), len(summary.annotated))
        collapse_similarity(summary)
        collapse_packability(summary)
        annotate_shared_files(summary)
        if (set(summary.visible), len(summary.annotated)) == before:
            break
    return summary


def expand(summary: SummaryGraph, supernode: str) -> SummaryGraph:
    return summary.expand(supernode)


def expand_all(summary: SummaryGraph) -> SummaryGraph:
    return summary.expand_all()


def expanded_graph(summary: SummaryGraph) -> ProvenanceGraph:
    """Reconstruct the graph a fully expanded summary shows.

    Built from the expanded view rather than returned verbatim, so tests can
    assert the view machinery loses nothing: every original node must be
    visible again and every edge must appear exactly once.
    """
    probe = summary.copy().expand_all()
    if probe.visible != set(summary.original.nodes):
        raise SummaryError("expansion failed to restore all nodes")
    view = probe.view_edges()
    edges = [
        edge
        for edge in summary.original.edges
        if view.get((edge.src, edge.dst, edge.label)) == 1
    ]
    return ProvenanceGraph(
        list(summary.original.nodes.values()),
        edges,
        trace_digest=summary.original.trace_digest,
    )


# ---------------------------------------------------------------------------
# Ancestry / ancestry-degree grouping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grouping:
    """A kind-homogeneous partition of graph nodes with inter-group edges."""

    groups: tuple[tuple[str, ...], ...]
    group_edges: tuple[tuple[int, int, str, int], ...]  # (src idx, dst idx, label, multiplicity)
    mode: str

    def group_of(self, node_id: str) -> int:
        for index, members in enumerate(self.groups):
            if node_id in members:
                return index
        raise KeyError(node_id)

    def as_sets(self) -> set[frozenset[str]]:
        return {frozenset(g) for g in self.groups}

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "groups": {f"g{i}": list(members) for i, members in enumerate(self.groups)},
            "group_edges": [
                {"src": f"g{s}", "dst": f"g{d}", "label": lbl, "multiplicity": n}
                for s, d, lbl, n in self.group_edges
            ],
            "annotations": {},
            "expansion_map": {f"g{i}": list(members) for i, members in enumerate(self.groups)},
        }

    def to_dot(self, graph: ProvenanceGraph) -> str:
        lines = ["digraph grouping {"]
        for index, members in enumerate(self.groups):
            kind = graph.node(members[0]).kind
            shape = "box" if kind is NodeKind.ACTIVITY else "ellipse"
            label = graph.node(members[0]).label
            if len(members) > 1:
                label = f"{label} (+{len(members) - 1})"
            lines.append(f'  "g{index}" [shape={shape}, label="{_esc(label)}"];')
        for src, dst, lbl, n in self.group_edges:
            mult = f" (x{n})" if n > 1 else ""
            lines.append(f'  "g{src}" -> "g{dst}" [label="{_esc(lbl + mult)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _is_acyclic(graph: ProvenanceGraph) -> bool:
    indegree = {nid: len(graph.in_edges(nid)) for nid in graph.nodes}
    queue = [nid for nid, deg in indegree.items() if deg == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for edge in graph.out_edges(node):
            indegree[edge.dst] -= 1
            if indegree[edge.dst] == 0:
                queue.append(edge.dst)
    return seen == len(graph.nodes)


def ancestry_degree_grouping(graph: ProvenanceGraph, degree: bool = True) -> Grouping:
    """Coarsest partition stable under ancestry (and optionally degree) splitting.

    Nodes start grouped by kind, with a virtual start node standing in as the
    ancestor of every source node.  Groups are then repeatedly split: in degree
    mode by per-label in/out edge counts toward the group under inspection; in
    ancestry mode by the presence of in-edges from it per label.  The worklist
    is a stack of group ids, popped deterministically.
    """
    if not _is_acyclic(graph):
        raise SummaryError("grouping requires an acyclic graph; resolve cycles first")

    # adjacency including the virtual start node
    out_adj: dict[str, list[tuple[str, str]]] = {nid: [] for nid in graph.nodes}
    in_adj: dict[str, list[tuple[str, str]]] = {nid: [] for nid in graph.nodes}
    out_adj[START_NODE] = []
    in_adj[START_NODE] = []
    for edge in graph.edges:
        out_adj[edge.src].append((edge.dst, edge.label.value))
        in_adj[edge.dst].append((edge.src, edge.label.value))
    for nid in graph.nodes:
        if not in_adj[nid]:
            out_adj[START_NODE].append((nid, START_LABEL))
            in_adj[nid].append((START_NODE, START_LABEL))

    labels = [lbl.value for lbl in ProvLabel] + [START_LABEL]
    groups: dict[int, set[str]] = {}
    node_group: dict[str, int] = {}

    def new_group(members: set[str]) -> int:
        gid = len(groups)
        groups[gid] = members
        for member in members:
            node_group[member] = gid
        return gid

    activities = {n.id for n in graph.activities()}
    entities = {n.id for n in graph.entities()}
    stack: list[int] = []
    for members in (entities, activities, {START_NODE}):
        if members:
            stack.append(new_group(set(members)))

    while stack:
        gid = stack.pop()
        inspected = sorted(groups[gid])
        if not inspected:
            continue
        member_set = set(inspected)
        for direction in ("to", "from"):
            adj = in_adj if direction == "to" else out_adj
            for label in labels:
                touched: dict[int, dict[str, int]] = {}
                for node in list(node_group):
                    count = sum(
                        1 for other, lbl in adj[node] if lbl == label and other in member_set
                    )
                    if count:
                        touched.setdefault(node_group[node], {})[node] = count
                for other_gid, degrees in sorted(touched.items()):
                    members = groups[other_gid]
                    if not degree and direction == "to":
                        partition_key = lambda n: 1 if degrees.get(n, 0) else 0
                    elif not degree:
                        continue  # ancestry mode splits on in-edges only
                    else:
                        partition_key = lambda n: degrees.get(n, 0)
                    buckets: dict[int, set[str]] = {}
                    for node in members:
                        buckets.setdefault(partition_key(node), set()).add(node)
                    if len(buckets) <= 1:
                        continue
                    first = True
                    for _, subset in sorted(buckets.items()):
                        if first:
                            groups[other_gid] = subset
                            for node in subset:
                                node_group[node] = other_gid
                            if other_gid not in stack:
                                stack.append(other_gid)
                            first = False
                        else:
                            sub_gid = new_group(subset)
                            stack.append(sub_gid)
                    if other_gid == gid:
                        member_set &= groups[gid]

    final: list[tuple[str, ...]] = []
    for gid, members in groups.items():
        members = members - {START_NODE}
        if members:
            final.append(tuple(sorted(members)))
    final.sort(key=lambda g: g[0])
    index_of = {member: i for i, group in enumerate(final) for member in group}

    edge_counts: Counter[tuple[int, int, str]] = Counter()
    for edge in graph.edges:
        edge_counts[(index_of[edge.src], index_of[edge.dst], edge.label.value)] += 1
    group_edges = tuple(
        (s, d, lbl, n) for (s, d, lbl), n in sorted(edge_counts.items())
    )
    return Grouping(
        groups=tuple(final),
        group_edges=group_edges,
        mode="ancestry-degree" if degree else "ancestry",
    )


# ---------------------------------------------------------------------------
# Reduction statistics
# ---------------------------------------------------------------------------


def _graph_counts(graph: ProvenanceGraph) -> dict[str, int]:
    return {
        "files": len(graph.entities()),
        "processes": len(graph.activities()),
        "edges": len(graph.edges),
    }


def _grouping_counts(graph: ProvenanceGraph, grouping: Grouping) -> dict[str, int]:
    files = sum(1 for g in grouping.groups if graph.node(g[0]).kind is NodeKind.ENTITY)
    procs = sum(1 for g in grouping.groups if graph.node(g[0]).kind is NodeKind.ACTIVITY)
    return {"files": files, "processes": procs, "edges": len(grouping.group_edges)}


def summary_stats(
    original: ProvenanceGraph, summary: SummaryGraph | Grouping
) -> dict[str, float]:
    """Node and edge reduction percentages of a summary against its source."""
    base = _graph_counts(original)
    if isinstance(summary, SummaryGraph):
        now = summary.node_counts()
    else:
        now = _grouping_counts(original, summary)

    def reduction(category: str) -> float:
        if base[category] == 0:
            return 0.0
        return 100.0 * (1.0 - now[category] / base[category])

    combined_base = base["files"] + base["processes"] + base["edges"]
    combined_now = now["files"] + now["processes"] + now["edges"]
    combined = 0.0 if combined_base == 0 else 100.0 * (1.0 - combined_now / combined_base)
    return {
        "file_node_reduction": reduction("files"),
        "process_node_reduction": reduction("processes"),
        "edge_reduction": reduction("edges"),
        "combined_reduction": combined,
    }


def summary_json_bytes(summary: SummaryGraph | Grouping) -> bytes:
    return (json.dumps(summary.to_json(), sort_keys=True, indent=2) + "\n").encode()

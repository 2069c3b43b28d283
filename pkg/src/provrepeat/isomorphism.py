"""Provenance-graph isomorphism for exact-repeat verification.

Two runs match when a kind-preserving bijection maps one graph onto the other
so that every edge corresponds with the same relation label and every node's
normalized display label is preserved.  Volatile label parts (bare pids,
temp-file basenames) are normalized away first, since they legitimately differ
between a reference run and its repeat.

The search prunes with per-node signatures: the multiset of (edge label,
direction, normalized neighbor label) triples around a node.  Nodes can only
pair when kinds match and signatures are equal; a backtracking search over the
rarest signature classes then extends the pairing, and any returned mapping is
re-verified edge by edge.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from .prov_graph import ProvenanceGraph, ProvLabel
from .trace_model import NodeKind

# Applied in order to every node label before comparison.
DEFAULT_NORMALIZATION_RULES: tuple[tuple[str, str], ...] = (
    (r"/tmp/[^\s/]+", "/tmp/<volatile>"),
    (r"\b[0-9]+\b", "<n>"),
)


class LabelNormalizer:
    """Rewrites volatile label fragments via an ordered regex list."""

    def __init__(self, rules: tuple[tuple[str, str], ...] = DEFAULT_NORMALIZATION_RULES):
        self._rules = [(re.compile(pattern), replacement) for pattern, replacement in rules]

    def __call__(self, label: str) -> str:
        for pattern, replacement in self._rules:
            label = pattern.sub(replacement, label)
        return label


@dataclass(frozen=True)
class NodeSignature:
    """Id-independent neighborhood fingerprint of one node."""

    node_id: str
    kind: NodeKind
    values: tuple[tuple[tuple[str, str, str], int], ...]  # sorted multiset items

    @property
    def key(self) -> tuple:
        return (self.kind, self.values)


@dataclass(frozen=True)
class Bijection:
    pairs: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)


@dataclass
class RepeatVerdict:
    isomorphic: bool
    bijection: Bijection | None
    mismatch_summary: dict[str, object] = field(default_factory=dict)


def build_hash_values(
    graph: ProvenanceGraph, normalizer: LabelNormalizer | None = None
) -> dict[str, NodeSignature]:
    """Signature per node: own kind plus the multiset of incident-edge triples."""
    normalizer = normalizer or LabelNormalizer()
    labels = {nid: normalizer(node.label) for nid, node in graph.nodes.items()}
    signatures: dict[str, NodeSignature] = {}
    for node_id, node in graph.nodes.items():
        triples: Counter[tuple[str, str, str]] = Counter()
        for edge in graph.out_edges(node_id):
            triples[(edge.label.value, "out", labels[edge.dst])] += 1
        for edge in graph.in_edges(node_id):
            triples[(edge.label.value, "in", labels[edge.src])] += 1
        signatures[node_id] = NodeSignature(
            node_id=node_id, kind=node.kind, values=tuple(sorted(triples.items()))
        )
    return signatures


def _edge_index(graph: ProvenanceGraph) -> dict[tuple[str, str], frozenset[ProvLabel]]:
    index: dict[tuple[str, str], set[ProvLabel]] = {}
    for edge in graph.edges:
        index.setdefault((edge.src, edge.dst), set()).add(edge.label)
    return {pair: frozenset(lbls) for pair, lbls in index.items()}


def verify_bijection(
    g1: ProvenanceGraph,
    g2: ProvenanceGraph,
    mapping: dict[str, str],
    normalizer: LabelNormalizer | None = None,
) -> bool:
    """Full edge-by-edge check of a candidate mapping from g1 onto g2."""
    normalizer = normalizer or LabelNormalizer()
    if len(mapping) != len(g1.nodes) or len(set(mapping.values())) != len(g2.nodes):
        return False
    for src, dst in mapping.items():
        n1, n2 = g1.node(src), g2.node(dst)
        if n1.kind is not n2.kind or normalizer(n1.label) != normalizer(n2.label):
            return False
    index2 = _edge_index(g2)
    seen = 0
    for edge in g1.edges:
        labels = index2.get((mapping[edge.src], mapping[edge.dst]), frozenset())
        if edge.label not in labels:
            return False
        seen += 1
    return seen == len(g2.edges)


def find_bijection(
    g1: ProvenanceGraph,
    g2: ProvenanceGraph,
    normalizer: LabelNormalizer | None = None,
) -> Bijection | None:
    """Search for a label- and kind-preserving bijection between two graphs.

    Returns None when node counts, signature multisets, or the backtracking
    search preclude a mapping; otherwise the verified bijection.
    """
    normalizer = normalizer or LabelNormalizer()
    if len(g1.nodes) != len(g2.nodes) or len(g1.edges) != len(g2.edges):
        return None
    if not g1.nodes:
        return Bijection(pairs=())

    sig1 = build_hash_values(g1, normalizer)
    sig2 = build_hash_values(g2, normalizer)
    # Candidate classes pair on signature plus the node's own normalized label,
    # so any assignment the search completes is already label-preserving.
    key1 = {nid: (sig1[nid].key, normalizer(g1.node(nid).label)) for nid in g1.nodes}
    key2 = {nid: (sig2[nid].key, normalizer(g2.node(nid).label)) for nid in g2.nodes}
    by_key2: dict[tuple, list[str]] = {}
    for node_id, key in key2.items():
        by_key2.setdefault(key, []).append(node_id)
    key_counts1 = Counter(key1.values())
    key_counts2 = Counter(key2.values())
    if key_counts1 != key_counts2:
        return None

    # Rarest signature classes first: fewest candidates, fastest pruning.
    order = sorted(g1.nodes, key=lambda nid: (key_counts1[key1[nid]], nid))
    out1 = {nid: {(e.dst, e.label) for e in g1.out_edges(nid)} for nid in g1.nodes}
    in1 = {nid: {(e.src, e.label) for e in g1.in_edges(nid)} for nid in g1.nodes}
    index2 = _edge_index(g2)

    mapping: dict[str, str] = {}
    used2: set[str] = set()

    def consistent(u1: str, u2: str) -> bool:
        for v1, label in out1[u1]:
            v2 = mapping.get(v1)
            if v2 is not None and label not in index2.get((u2, v2), frozenset()):
                return False
        for v1, label in in1[u1]:
            v2 = mapping.get(v1)
            if v2 is not None and label not in index2.get((v2, u2), frozenset()):
                return False
        return True

    def extend(position: int) -> bool:
        if position == len(order):
            return True
        u1 = order[position]
        for u2 in by_key2[key1[u1]]:
            if u2 in used2 or not consistent(u1, u2):
                continue
            mapping[u1] = u2
            used2.add(u2)
            if extend(position + 1):
                return True
            del mapping[u1]
            used2.remove(u2)
        return False

    if not extend(0):
        return None
    if not verify_bijection(g1, g2, mapping, normalizer):
        return None
    return Bijection(pairs=tuple(sorted(mapping.items())))


def verify_exact_repeat(
    reference: ProvenanceGraph,
    rerun: ProvenanceGraph,
    normalizer: LabelNormalizer | None = None,
) -> RepeatVerdict:
    """Decide whether a rerun reproduced the reference execution exactly."""
    normalizer = normalizer or LabelNormalizer()
    bijection = find_bijection(reference, rerun, normalizer)
    if bijection is not None:
        return RepeatVerdict(isomorphic=True, bijection=bijection)

    summary: dict[str, object] = {}
    for kind in NodeKind:
        ref = sum(1 for n in reference.nodes.values() if n.kind is kind)
        new = sum(1 for n in rerun.nodes.values() if n.kind is kind)
        summary[f"{kind.value}_count_delta"] = new - ref
    summary["edge_count_delta"] = len(rerun.edges) - len(reference.edges)
    sig_ref = Counter(s.key for s in build_hash_values(reference, normalizer).values())
    sig_new = Counter(s.key for s in build_hash_values(rerun, normalizer).values())
    summary["unmatched_signatures"] = {
        "reference_only": sorted(_describe(k) for k in (sig_ref - sig_new)),
        "rerun_only": sorted(_describe(k) for k in (sig_new - sig_ref)),
    }
    return RepeatVerdict(isomorphic=False, bijection=None, mismatch_summary=summary)


def _describe(key: tuple) -> str:
    kind, values = key
    triples = ", ".join(f"{label}/{direction}/{neighbor}x{n}" for (label, direction, neighbor), n in values)
    return f"{kind.value}[{triples}]"


def verdict_json(verdict: RepeatVerdict) -> dict[str, object]:
    return {
        "isomorphic": verdict.isomorphic,
        "bijection": verdict.bijection.as_dict() if verdict.bijection else None,
        "mismatch_summary": verdict.mismatch_summary,
    }

from __future__ import annotations

import json
import random

import pytest

from provrepeat.prov_graph import GraphBuilder, ProvLabel


def prefix_records(records: list[dict], root: str) -> list[dict]:
    """Rewrite fixture record paths to live under a real directory."""
    rewritten = []
    for record in records:
        record = json.loads(json.dumps(record))
        for side in ("subject", "object"):
            node = record[side]
            if node["kind"] == "entity":
                node["path"] = root.rstrip("/") + node["path"]
        rewritten.append(record)
    return rewritten


def records_to_log(records: list[dict]) -> bytes:
    return ("\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n").encode()


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


@pytest.fixture
def pipeline():
    from provrepeat.synth import pipeline_graph

    return pipeline_graph()


def chain_graph(intervals: list[tuple[int, int]]) -> "GraphBuilder":
    """Alternating entity/activity chain with the given edge intervals."""
    b = GraphBuilder()
    b.entity("e0", "e0")
    labels = []
    for i in range(len(intervals)):
        if i % 2 == 0:
            b.activity(f"a{i // 2}", f"a{i // 2}", pid=i)
            labels.append((f"e{i // 2}", f"a{i // 2}", ProvLabel.USED))
        else:
            b.entity(f"e{i // 2 + 1}", f"e{i // 2 + 1}")
            labels.append((f"a{i // 2}", f"e{i // 2 + 1}", ProvLabel.WAS_GENERATED_BY))
    for (src, dst, label), iv in zip(labels, intervals):
        b.edge(src, dst, label, iv)
    return b

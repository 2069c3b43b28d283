#!/usr/bin/env python3
"""Time isomorphism verification across provenance-graph sizes.

Each row verifies a random typed DAG against an id-permuted copy (positive
case) and against a single-edge mutation (negative case).
"""

from __future__ import annotations

import argparse
import random
import time

from provrepeat.isomorphism import verify_exact_repeat
from provrepeat.prov_graph import ProvenanceGraph
from provrepeat.synth import permute_ids, sized_prov_graph


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--sizes",
        default="30:60,75:160,150:320,300:640,600:1280",
        help="comma-separated nodes:edges pairs",
    )
    args = parser.parse_args()
    rng = random.Random(args.seed)

    print(f"{'nodes':>6}{'edges':>7}{'isomorphic ms':>15}{'mutated ms':>12}")
    for pair in args.sizes.split(","):
        nodes, edges = (int(x) for x in pair.split(":"))
        acts = nodes // 3
        graph = sized_prov_graph(rng, n_activities=acts, n_entities=nodes - acts, n_edges=edges)
        twin = permute_ids(graph, rng)
        start = time.perf_counter()
        verdict = verify_exact_repeat(graph, twin)
        positive_ms = (time.perf_counter() - start) * 1000
        assert verdict.isomorphic

        mutated_edges = list(graph.edges)
        mutated_edges.pop(rng.randrange(len(mutated_edges)))
        mutated = ProvenanceGraph(list(graph.nodes.values()), mutated_edges)
        start = time.perf_counter()
        verdict = verify_exact_repeat(graph, mutated)
        negative_ms = (time.perf_counter() - start) * 1000
        assert not verdict.isomorphic

        print(f"{len(graph.nodes):>6}{len(graph.edges):>7}{positive_ms:>15.1f}{negative_ms:>12.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Measure store growth while re-storing increasingly mutated copies of a tree.

Simulates a series of executions that each touch a fraction of the previous
container's bytes, then reports the cumulative store size against the naive
sum of container sizes.
"""

from __future__ import annotations

import argparse
import random
import tempfile
from pathlib import Path

from provrepeat.store import ChunkStore, put_container
from provrepeat.synth import random_file_tree


def mutate_tree(rng: random.Random, root: Path, fraction: float) -> None:
    files = sorted(p for p in root.rglob("*") if p.is_file())
    for path in files:
        if rng.random() < 0.5:
            continue
        data = bytearray(path.read_bytes())
        span = int(len(data) * fraction)
        if span == 0:
            continue
        offset = rng.randrange(max(1, len(data) - span))
        data[offset : offset + span] = rng.randbytes(span)
        path.write_bytes(bytes(data))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--executions", type=int, default=5)
    parser.add_argument("--files", type=int, default=10)
    parser.add_argument("--mutation", type=float, default=0.10, help="byte fraction rewritten")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    with tempfile.TemporaryDirectory() as scratch:
        scratch = Path(scratch)
        tree = scratch / "tree"
        random_file_tree(rng, tree, n_files=args.files, min_size=256 * 1024, max_size=1024 * 1024)
        store = ChunkStore(scratch / "store")

        naive_total = 0
        print(f"{'run':>4}{'tree bytes':>12}{'new bytes':>12}{'store bytes':>13}{'naive sum':>12}")
        for seq in range(1, args.executions + 1):
            manifest, report = put_container(store, tree, provenance={}, sciunit="exp", seq=seq)
            naive_total += manifest.total_size()
            print(
                f"{seq:>4}{manifest.total_size():>12}{report.new_bytes:>12}"
                f"{store.total_bytes():>13}{naive_total:>12}"
            )
            mutate_tree(rng, tree, args.mutation)
        saved = 1 - store.total_bytes() / naive_total
        print(f"deduplication saved {saved:.1%} versus storing each container whole")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Reference fixtures and randomized generators for traces, graphs, and trees.

The fixed fixtures encode three tiny canonical runs used across the test
suite and the demos:

* a stale-read pipeline where a path exists but temporal order forbids the
  dependency (two processes sharing an intermediate file);
* a two-stage pipeline P -> Q with inputs A and C, intermediate B, output D;
* a fan-in workload of three processes reading private files plus one shared
  dependency.

The randomized generators produce validator-clean traces, provenance DAGs at
arbitrary scale, replete workflow-shaped graphs with heavy shared-library
fan-in, and on-disk file trees for the chunk store.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .prov_graph import GraphBuilder, ProvenanceGraph, ProvLabel, make_node
from .trace_model import NodeKind, TimeInterval


def _record(op: str, subject: dict, obj: dict, begin: int, end: int) -> dict:
    return {"op": op, "subject": subject, "object": obj, "t_begin": begin, "t_end": end}


def _proc(pid: int, label: str) -> dict:
    return {"kind": "activity", "pid": pid, "label": label}


def _file(path: str) -> dict:
    return {"kind": "entity", "path": path}


def stale_read_records(overlap: bool = False) -> list[dict]:
    """Two processes sharing file B, with the read finishing before the write.

    P1 reads A and writes B; P2 read B earlier (and writes C).  With
    ``overlap`` the read is stretched so it overlaps the write and the
    dependency of C on A becomes temporally feasible.
    """
    read_b = (3, 6) if overlap else (3, 4)
    return [
        _record("readFrom", _file("/in/A"), _proc(1, "stage-one"), 1, 2),
        _record("hasWritten", _proc(1, "stage-one"), _file("/data/B"), 5, 6),
        _record("readFrom", _file("/data/B"), _proc(2, "stage-two"), *read_b),
        _record("hasWritten", _proc(2, "stage-two"), _file("/out/C"), 7, 8),
    ]


def stale_read_log(overlap: bool = False) -> bytes:
    return _to_log(stale_read_records(overlap))


def pipeline_records(with_executables: bool = False) -> list[dict]:
    """Two-stage pipeline: P reads A, writes B, spawns Q; Q reads B and C, writes D."""
    p = _proc(11, "stage-p")
    q = _proc(12, "stage-q")
    records = [
        _record("readFrom", _file("/in/A"), p, 1, 2),
        _record("hasWritten", p, _file("/work/B"), 3, 4),
        _record("executed", p, q, 3, 3),
        _record("readFrom", _file("/work/B"), q, 5, 6),
        _record("readFrom", _file("/in/C"), q, 5, 6),
        _record("hasWritten", q, _file("/out/D"), 7, 8),
    ]
    if with_executables:
        records.insert(0, _record("readFrom", _file("/apps/p-exe"), p, 1, 1))
        records.insert(1, _record("readFrom", _file("/apps/q-exe"), q, 4, 4))
    return records


def pipeline_log(with_executables: bool = False) -> bytes:
    return _to_log(pipeline_records(with_executables))


def pipeline_graph() -> ProvenanceGraph:
    """The two-stage pipeline as a provenance graph (6 nodes, 6 edges)."""
    b = GraphBuilder()
    b.entity("/in/A", "A").entity("/work/B", "B").entity("/in/C", "C").entity("/out/D", "D")
    b.activity("p:11", "stage-p", pid=11).activity("p:12", "stage-q", pid=12)
    b.edge("/in/A", "p:11", ProvLabel.USED, (1, 2))
    b.edge("p:11", "/work/B", ProvLabel.WAS_GENERATED_BY, (3, 4))
    b.edge("p:11", "p:12", ProvLabel.WAS_INFORMED_BY, (3, 3))
    b.edge("/work/B", "p:12", ProvLabel.USED, (5, 6))
    b.edge("/in/C", "p:12", ProvLabel.USED, (5, 6))
    b.edge("p:12", "/out/D", ProvLabel.WAS_GENERATED_BY, (7, 8))
    return b.build()


def fan_in_graph() -> ProvenanceGraph:
    """Three processes, each reading a private file plus one shared file."""
    b = GraphBuilder()
    for i in (1, 2, 3):
        b.activity(f"p:{i}", f"worker-{i}", pid=i)
        b.entity(f"/in/F{i}", f"F{i}")
        b.edge(f"/in/F{i}", f"p:{i}", ProvLabel.USED, (i, i + 1))
    b.entity("/lib/F4", "F4")
    for i in (1, 2, 3):
        b.edge("/lib/F4", f"p:{i}", ProvLabel.USED, (i, i + 1))
    return b.build()


def _to_log(records: list[dict]) -> bytes:
    return ("\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n").encode()


# ---------------------------------------------------------------------------
# Randomized generators
# ---------------------------------------------------------------------------


def random_trace_records(
    rng: random.Random,
    n_procs: int = 4,
    n_files: int = 6,
    n_events: int = 12,
    time_range: int = 40,
    allow_conflicts: bool = True,
    n_tmp_files: int = 0,
) -> list[dict]:
    """A validator-clean trace: spawn forest plus random read/write events."""
    procs = [_proc(100 + i, f"job-{i}") for i in range(n_procs)]
    files = [f"/data/f{i}" for i in range(n_files)]
    files += [f"/tmp/scratch-{rng.randrange(10**6)}" for _ in range(n_tmp_files)]
    records: list[dict] = []
    for i in range(1, n_procs):
        parent = procs[rng.randrange(i)]
        t = rng.randrange(time_range)
        records.append(_record("executed", parent, procs[i], t, t))
    written: set[str] = set()
    for _ in range(n_events):
        proc = rng.choice(procs)
        path = rng.choice(files)
        begin = rng.randrange(time_range)
        end = begin + rng.randrange(1, 6)
        if rng.random() < 0.5:
            records.append(_record("readFrom", _file(path), proc, begin, end))
        else:
            if not allow_conflicts and path in written:
                continue
            records.append(_record("hasWritten", proc, _file(path), begin, end))
            written.add(path)
    return records


def random_trace_log(rng: random.Random, **kwargs) -> bytes:
    return _to_log(random_trace_records(rng, **kwargs))


_ACTIVITY_LABELS = ["compute", "render", "fetch", "merge", "report"]
_ENTITY_LABELS = ["table.csv", "model.bin", "notes.txt", "plot.png", "series.dat"]


def random_prov_graph(
    rng: random.Random,
    n_activities: int = 3,
    n_entities: int = 4,
    edge_prob: float = 0.4,
    label_pool: int = 3,
    distinct_labels: bool = False,
) -> ProvenanceGraph:
    """Random typed provenance DAG; edges only run forward along a random order."""
    nodes = []
    for i in range(n_activities):
        label = f"act-{i}" if distinct_labels else rng.choice(_ACTIVITY_LABELS[:label_pool])
        nodes.append(make_node(f"a{i}", NodeKind.ACTIVITY, label, pid=500 + i))
    for i in range(n_entities):
        label = f"ent-{i}" if distinct_labels else rng.choice(_ENTITY_LABELS[:label_pool])
        nodes.append(make_node(f"e{i}", NodeKind.ENTITY, label, path=f"/d/{label}-{i}"))
    order = list(nodes)
    rng.shuffle(order)
    edges = []
    seen = set()
    for i, src in enumerate(order):
        for dst in order[i + 1 :]:
            if rng.random() >= edge_prob:
                continue
            label = _edge_label_for(src.kind, dst.kind)
            if label is None or (src.id, dst.id, label) in seen:
                continue
            seen.add((src.id, dst.id, label))
            begin = rng.randrange(50)
            edges.append(
                (src.id, dst.id, label, TimeInterval(begin, begin + rng.randrange(1, 8)))
            )
    b = GraphBuilder()
    b.nodes = nodes
    for src, dst, label, interval in edges:
        b.edge(src, dst, label, interval)
    return b.build()


def _edge_label_for(src: NodeKind, dst: NodeKind) -> ProvLabel | None:
    if src is NodeKind.ENTITY and dst is NodeKind.ACTIVITY:
        return ProvLabel.USED
    if src is NodeKind.ACTIVITY and dst is NodeKind.ENTITY:
        return ProvLabel.WAS_GENERATED_BY
    if src is NodeKind.ACTIVITY and dst is NodeKind.ACTIVITY:
        return ProvLabel.WAS_INFORMED_BY
    return None


def sized_prov_graph(
    rng: random.Random, n_activities: int, n_entities: int, n_edges: int
) -> ProvenanceGraph:
    """Random typed DAG with exact node and edge counts (labels from pools)."""
    nodes = []
    for i in range(n_activities):
        nodes.append(make_node(f"a{i}", NodeKind.ACTIVITY, rng.choice(_ACTIVITY_LABELS), pid=500 + i))
    for i in range(n_entities):
        nodes.append(make_node(f"e{i}", NodeKind.ENTITY, rng.choice(_ENTITY_LABELS), path=f"/d/{i}"))
    order = list(nodes)
    rng.shuffle(order)
    position = {n.id: i for i, n in enumerate(order)}
    b = GraphBuilder()
    b.nodes = nodes
    seen: set[tuple[str, str]] = set()
    guard = 0
    while len(seen) < n_edges and guard < n_edges * 200:
        guard += 1
        src, dst = rng.sample(nodes, 2)
        if position[src.id] > position[dst.id]:
            src, dst = dst, src
        label = _edge_label_for(src.kind, dst.kind)
        if label is None or (src.id, dst.id) in seen:
            continue
        seen.add((src.id, dst.id))
        begin = rng.randrange(100)
        b.edge(src.id, dst.id, label, TimeInterval(begin, begin + rng.randrange(1, 10)))
    return b.build()


def permute_ids(graph: ProvenanceGraph, rng: random.Random) -> ProvenanceGraph:
    """Same graph with every node id replaced; labels and structure unchanged."""
    ids = list(graph.nodes)
    fresh = [f"n{i}" for i in range(len(ids))]
    rng.shuffle(fresh)
    mapping = dict(zip(ids, fresh))
    nodes = [
        make_node(mapping[n.id], n.kind, n.label, **dict(n.attrs)) for n in graph.nodes.values()
    ]
    edges = [
        (mapping[e.src], mapping[e.dst], e.label, e.interval) for e in graph.edges
    ]
    b = GraphBuilder()
    b.nodes = nodes
    for src, dst, label, interval in edges:
        b.edge(src, dst, label, interval)
    return b.build()


def replete_workflow_graph(
    rng: random.Random,
    n_phases: int = 6,
    n_lanes: int = 2,
) -> ProvenanceGraph:
    """A replete run of a phased two-lane workflow with shared-library fan-in.

    A shell spawns two workers per phase (one per lane); each worker reads its
    script, a batch of raw inputs, its lane predecessor's output, and a block
    of shared libraries, then writes the next intermediate in its lane.
    Lane-specific config files shared along each lane give the two lanes
    distinct identities while phases stay structurally parallel.  Defaults
    land near 146 nodes and 321 edges, the scale at which raw renderings of
    real runs stop being readable.
    """
    b = GraphBuilder()
    t = 0

    def tick(width: int = 2) -> TimeInterval:
        nonlocal t
        t += 2
        return TimeInterval(t, t + width)

    def entity(path: str) -> str:
        b.entity(path, path.rsplit("/", 1)[1])
        return path

    b.activity("p:1", "run-all.sh", pid=1)
    b.edge(entity("/apps/run-all.sh"), "p:1", ProvLabel.USED, tick())

    lanes = "abcd"[:n_lanes]
    pid = 10
    phases: list[list[str]] = []
    lane_head: dict[str, str] = {}
    for phase in range(n_phases):
        members: list[str] = []
        raw_count = 3 + (phase * 2 + rng.randrange(2)) % 4
        for lane in lanes:
            pid += 1
            wid = f"p:{pid}"
            members.append(wid)
            b.activity(wid, f"phase{phase}{lane}.R", pid=pid)
            b.edge("p:1", wid, ProvLabel.WAS_INFORMED_BY, tick(0))
            b.edge(entity(f"/apps/phase{phase}{lane}.R"), wid, ProvLabel.USED, tick())
            for j in range(raw_count):
                b.edge(entity(f"/in/p{phase}{lane}-{j}.csv"), wid, ProvLabel.USED, tick())
            if lane in lane_head:
                b.edge(lane_head[lane], wid, ProvLabel.USED, tick())
            out = entity(f"/work/p{phase}{lane}.rds")
            b.edge(wid, out, ProvLabel.WAS_GENERATED_BY, tick())
            lane_head[lane] = out
        phases.append(members)

    workers = [wid for members in phases for wid in members]
    all_procs = ["p:1"] + workers

    # lane-specific configs shared by consecutive phases of one lane
    for start in range(0, n_phases - 1, 2):
        for index, lane in enumerate(lanes):
            config = entity(f"/etc/lane-{lane}-{start}.cfg")
            for phase in (start, start + 1):
                b.edge(config, phases[phase][index], ProvLabel.USED, tick())

    # pre-existing fetcher daemons (not spawned by the shell) seed alternate phases
    for phase in range(0, n_phases, 2):
        pid += 1
        fid = f"p:{pid}"
        b.activity(fid, f"fetch-{phase}d", pid=pid)
        for j in range(2):
            b.edge(entity(f"/cache/feed-{phase}-{j}.json"), fid, ProvLabel.USED, tick())
        for index, lane in enumerate(lanes):
            seed = entity(f"/cache/seed-{phase}{lane}.rds")
            b.edge(fid, seed, ProvLabel.WAS_GENERATED_BY, tick())
            b.edge(seed, phases[phase][index], ProvLabel.USED, tick())
        all_procs.append(fid)

    lib_serial = 0

    def lib_block(count: int, readers: list[str]) -> None:
        nonlocal lib_serial
        for _ in range(count):
            lib_serial += 1
            path = entity(f"/lib/dep-{lib_serial}.so")
            for reader in readers:
                b.edge(path, reader, ProvLabel.USED, tick())

    lib_block(4 + rng.randrange(2), all_procs)
    lib_block(6 + rng.randrange(2), workers)
    for phase in range(n_phases):
        lib_block(2, phases[phase])
    for wid in workers:
        lib_block(1, [wid])  # one private helper library each
    return b.build()


def random_file_tree(
    rng: random.Random,
    root: Path,
    n_files: int = 6,
    min_size: int = 1024,
    max_size: int = 512 * 1024,
) -> dict[str, bytes]:
    """Write a randomized tree of binary files; returns path -> content."""
    root.mkdir(parents=True, exist_ok=True)
    contents: dict[str, bytes] = {}
    for i in range(n_files):
        sub = root / (f"d{i % 3}" if i % 2 else ".")
        sub.mkdir(exist_ok=True)
        path = sub / f"file-{i}.bin"
        size = rng.randrange(min_size, max_size)
        data = rng.randbytes(size)
        path.write_bytes(data)
        contents[path.relative_to(root).as_posix()] = data
    return contents


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Emit built-in fixture trace logs")
    parser.add_argument(
        "fixture",
        choices=["stale-read", "stale-read-overlap", "pipeline", "pipeline-exes"],
    )
    args = parser.parse_args(argv)
    log = {
        "stale-read": stale_read_log(),
        "stale-read-overlap": stale_read_log(overlap=True),
        "pipeline": pipeline_log(),
        "pipeline-exes": pipeline_log(with_executables=True),
    }[args.fixture]
    sys.stdout.buffer.write(log)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

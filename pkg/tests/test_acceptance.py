"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Everything here relies on
synthetic generators and the built-in fixtures; the whole module finishes in
well under two minutes on a laptop.
"""

from __future__ import annotations

import json
import random
import time

import pytest

from provrepeat.cli import main as cli_main
from provrepeat.dependency_inference import depends, infer_provenance
from provrepeat.isomorphism import verify_exact_repeat, find_bijection
from provrepeat.prov_graph import ProvenanceGraph, ProvEdge, ProvLabel
from provrepeat.repeat_planner import plan_partial_repeat, plan_modified_repeat, simulate_replay
from provrepeat.store import ChunkStore, chunk_stream, materialize, put_container
from provrepeat.summarizer import (
    ancestry_degree_grouping,
    expanded_graph,
    summarize_collapse,
    summary_stats,
)
from provrepeat.synth import (
    permute_ids,
    pipeline_log,
    pipeline_records,
    random_file_tree,
    random_prov_graph,
    random_trace_log,
    random_trace_records,
    replete_workflow_graph,
    sized_prov_graph,
    stale_read_records,
)
from provrepeat.trace_model import parse_trace_log

from conftest import prefix_records, records_to_log
from oracles import (
    check_ancestry_degree,
    coarsest_valid_partition,
    depends_bruteforce,
    is_isomorphic_oracle,
    is_rigid,
)


def _ok(name: str) -> None:
    print(f"PASS {name}")


# -- 1. isomorphism agrees with the exhaustive oracle -------------------------


def test_criterion_1_isomorphism_oracle_agreement():
    rng = random.Random(1001)
    checked = 0
    while checked < 500:
        g1 = random_prov_graph(
            rng,
            n_activities=rng.randint(1, 4),
            n_entities=rng.randint(1, 3),
            edge_prob=rng.uniform(0.2, 0.7),
            label_pool=rng.randint(1, 3),
        )
        style = checked % 3
        if style == 0:
            g2 = permute_ids(g1, rng)
        elif style == 1:
            g2 = random_prov_graph(
                rng,
                n_activities=rng.randint(1, 4),
                n_entities=rng.randint(1, 3),
                edge_prob=rng.uniform(0.2, 0.7),
                label_pool=rng.randint(1, 3),
            )
        else:
            edges = list(g1.edges)
            if edges:
                edges.pop(rng.randrange(len(edges)))
            g2 = permute_ids(ProvenanceGraph(list(g1.nodes.values()), edges), rng)
        expected = is_isomorphic_oracle(g1, g2)
        actual = find_bijection(g1, g2) is not None
        assert actual == expected, f"disagreement on pair {checked}"
        checked += 1
    _ok("criterion 1: 500/500 oracle agreement on graphs with <= 7 nodes")


# -- 2. isomorphism performance at the 150-node scale --------------------------


def test_criterion_2_isomorphism_performance():
    rng = random.Random(2002)
    graph = sized_prov_graph(rng, n_activities=50, n_entities=100, n_edges=320)
    assert len(graph.nodes) == 150 and len(graph.edges) == 320
    twin = permute_ids(graph, rng)
    start = time.perf_counter()
    verdict = verify_exact_repeat(graph, twin)
    elapsed = time.perf_counter() - start
    assert verdict.isomorphic
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    _ok(f"criterion 2: 150 nodes / 320 edges verified isomorphic in {elapsed * 1000:.0f} ms")


# -- 3. exact-repeat robustness -------------------------------------------------


def test_criterion_3_exact_repeat_robustness():
    rng = random.Random(3003)
    for trial in range(25):
        records = random_trace_records(
            rng, n_procs=3, n_files=4, n_events=10, n_tmp_files=2
        )
        reference = infer_provenance(parse_trace_log(records_to_log(records)))

        permuted = permute_ids(reference, rng)
        assert verify_exact_repeat(reference, permuted).isomorphic

        renamed_records = json.loads(json.dumps(records))
        mapping = {}
        for record in renamed_records:
            for side in ("subject", "object"):
                node = record[side]
                if node["kind"] == "entity" and node["path"].startswith("/tmp/"):
                    fresh = mapping.setdefault(
                        node["path"], f"/tmp/renamed-{len(mapping)}-{rng.randrange(999)}"
                    )
                    node["path"] = fresh
        renamed = infer_provenance(parse_trace_log(records_to_log(renamed_records)))
        assert verify_exact_repeat(reference, renamed).isomorphic

        shuffled = list(records)
        rng.shuffle(shuffled)
        reordered = infer_provenance(parse_trace_log(records_to_log(shuffled)))
        assert verify_exact_repeat(reference, reordered).isomorphic

    mutated_checked = 0
    while mutated_checked < 10:
        graph = random_prov_graph(
            rng, n_activities=2, n_entities=3, edge_prob=0.6, distinct_labels=True
        )
        if not graph.edges or not is_rigid(graph):
            continue
        mutated_checked += 1
        index = rng.randrange(len(graph.edges))
        edges = list(graph.edges)
        victim = edges.pop(index)
        flipped = _flip_label(victim)
        if flipped is not None and not any(
            e.src == flipped.src and e.dst == flipped.dst and e.label == flipped.label
            for e in edges
        ):
            edges.append(flipped)
        mutated = ProvenanceGraph(list(graph.nodes.values()), edges)
        assert not verify_exact_repeat(graph, mutated).isomorphic
    _ok("criterion 3: id/temp-name/order robustness and edge-label sensitivity")


def _flip_label(edge: ProvEdge) -> ProvEdge | None:
    # the only typing-preserving relabel reverses the edge between a file and
    # a process (a read becomes a write and vice versa)
    if edge.label is ProvLabel.USED:
        return ProvEdge(edge.dst, edge.src, ProvLabel.WAS_GENERATED_BY, edge.interval)
    if edge.label is ProvLabel.WAS_GENERATED_BY:
        return ProvEdge(edge.dst, edge.src, ProvLabel.USED, edge.interval)
    return None  # spawn edges are dropped instead


# -- 4. temporal causality -------------------------------------------------------


def test_criterion_4_temporal_causality():
    blocked = infer_provenance(parse_trace_log(records_to_log(stale_read_records())))
    assert depends(blocked, "/out/C", "/in/A") is False
    overlap = infer_provenance(parse_trace_log(records_to_log(stale_read_records(overlap=True))))
    assert depends(overlap, "/out/C", "/in/A") is True

    rng = random.Random(4004)
    for _ in range(60):
        trace = parse_trace_log(
            random_trace_log(rng, n_procs=3, n_files=4, n_events=8, time_range=9)
        )
        graph = infer_provenance(trace)
        entities = sorted(n.id for n in graph.entities())
        for source in entities:
            for target in entities:
                if source == target:
                    continue
                assert depends(graph, target, source) == depends_bruteforce(
                    graph, target, source
                )
    _ok("criterion 4: causality fixture verdicts and greedy == brute force on 60 traces")


# -- 5. partial repeat ------------------------------------------------------------


def test_criterion_5_partial_repeat():
    graph = infer_provenance(parse_trace_log(pipeline_log(with_executables=True)))
    plan = plan_partial_repeat({"p:12"}, graph)
    assert plan.required_procs == ("p:12",)
    assert set(plan.required_files) == {"/work/B", "/in/C", "/apps/q-exe"}

    rng = random.Random(5005)
    for _ in range(100):
        candidate = random_prov_graph(rng, n_activities=4, n_entities=6, edge_prob=0.4)
        procs = sorted(a.id for a in candidate.activities())
        selected = set(rng.sample(procs, k=rng.randint(1, len(procs))))
        random_plan = plan_partial_repeat(selected, candidate, mode=rng.choice(["direct", "all"]))
        report = simulate_replay(random_plan, candidate)
        assert report.ok, "replay needed a file outside the plan"
        # no file ships unused: every staged file is read during replay
        assert set(random_plan.required_files) == report.files_read()
    _ok("criterion 5: pipeline plan exact and 100/100 plans with zero unused files")


# -- 6. modified repeat ------------------------------------------------------------


def test_criterion_6_modified_repeat():
    graph = infer_provenance(parse_trace_log(pipeline_log()))
    changed_c = plan_modified_repeat({"/in/C"}, graph)
    assert changed_c.procs_to_rerun == ("p:12",)
    assert "/work/B" in changed_c.entities_reused
    changed_a = plan_modified_repeat({"/in/A"}, graph)
    assert changed_a.procs_to_rerun == ("p:11", "p:12")
    _ok("criterion 6: changed C reruns only Q reusing B; changed A reruns P and Q")


# -- 7. summarization reduction ------------------------------------------------------


def test_criterion_7_summarization_reduction_band():
    collapse_scores, grouping_scores, nodes, edges = [], [], [], []
    for seed in range(20):
        rng = random.Random(7000 + seed)
        graph = replete_workflow_graph(rng)
        nodes.append(len(graph.nodes))
        edges.append(len(graph.edges))
        collapse_scores.append(
            summary_stats(graph, summarize_collapse(graph))["combined_reduction"]
        )
        grouping_scores.append(
            summary_stats(graph, ancestry_degree_grouping(graph))["combined_reduction"]
        )
    mean_nodes = sum(nodes) / len(nodes)
    mean_edges = sum(edges) / len(edges)
    assert 120 <= mean_nodes <= 170 and 270 <= mean_edges <= 370
    collapse_avg = sum(collapse_scores) / len(collapse_scores)
    grouping_avg = sum(grouping_scores) / len(grouping_scores)
    assert 75.0 <= collapse_avg <= 96.0, f"collapse average {collapse_avg:.1f}"
    assert 75.0 <= grouping_avg <= 96.0, f"grouping average {grouping_avg:.1f}"
    _ok(
        "criterion 7: reduction averages in band "
        f"(collapse {collapse_avg:.1f}%, grouping {grouping_avg:.1f}% "
        f"on ~{mean_nodes:.0f}n/{mean_edges:.0f}e graphs)"
    )


# -- 8. grouping soundness --------------------------------------------------------------


def test_criterion_8_grouping_soundness():
    rng = random.Random(8008)
    for _ in range(1000):
        graph = random_prov_graph(
            rng,
            n_activities=rng.randint(1, 5),
            n_entities=rng.randint(1, 6),
            edge_prob=rng.uniform(0.15, 0.5),
        )
        grouping = ancestry_degree_grouping(graph)
        assert check_ancestry_degree(graph, [set(g) for g in grouping.groups])

    for seed in range(12):
        grg = random.Random(8100 + seed)
        graph = random_prov_graph(
            grg,
            n_activities=grg.randint(4, 6),
            n_entities=6,
            edge_prob=grg.uniform(0.25, 0.45),
        )
        assert len(graph.nodes) <= 12
        grouping = ancestry_degree_grouping(graph)
        best = coarsest_valid_partition(graph)
        assert grouping.as_sets() == {frozenset(g) for g in best}

    from provrepeat.synth import fan_in_graph

    fixture = ancestry_degree_grouping(fan_in_graph())
    assert fixture.as_sets() == {
        frozenset({"p:1", "p:2", "p:3"}),
        frozenset({"/in/F1", "/in/F2", "/in/F3"}),
        frozenset({"/lib/F4"}),
    }
    _ok("criterion 8: definitions verified on 1000 DAGs, coarsest on 12 small DAGs, fixture exact")


# -- 9. losslessness ---------------------------------------------------------------------


def test_criterion_9_losslessness_and_depth():
    rng = random.Random(9009)
    for _ in range(1000):
        graph = random_prov_graph(
            rng,
            n_activities=rng.randint(1, 4),
            n_entities=rng.randint(1, 6),
            edge_prob=rng.uniform(0.2, 0.5),
        )
        summary = summarize_collapse(graph)
        assert expanded_graph(summary) == graph

    for seed in range(5):
        graph = replete_workflow_graph(random.Random(9100 + seed))
        summary = summarize_collapse(graph)
        assert expanded_graph(summary) == graph
        assert summary.max_depth() <= 4
    _ok("criterion 9: 1000/1000 graphs reconstruct exactly; workflow depth <= 4")


# -- 10. store ------------------------------------------------------------------------------


def test_criterion_10_store_round_trip_and_dedup(tmp_path):
    rng = random.Random(1010)
    store = ChunkStore(tmp_path / "store")

    src = tmp_path / "tree"
    contents = random_file_tree(rng, src, n_files=8, min_size=64 * 1024, max_size=384 * 1024)
    manifest, first = put_container(store, src, provenance={}, sciunit="acc", seq=1)
    dest = tmp_path / "back"
    materialize(store, manifest, dest)
    for rel, data in contents.items():
        assert (dest / rel).read_bytes() == data

    _, again = put_container(store, src, provenance={}, sciunit="acc", seq=2)
    assert again.new_bytes == 0

    twin = tmp_path / "twin"
    twin.mkdir()
    total = 0
    for rel, data in sorted(contents.items()):
        target = twin / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        total += len(data)
    victim = max(contents, key=lambda r: len(contents[r]))
    blob = bytearray((twin / victim).read_bytes())
    churn = min(len(blob), total // 10)
    blob[-churn:] = rng.randbytes(churn)
    (twin / victim).write_bytes(bytes(blob))
    _, overlap = put_container(store, twin, provenance={}, sciunit="acc", seq=3)
    ratio = (first.new_bytes + overlap.new_bytes) / first.new_bytes
    assert ratio <= 1.15, f"storage ratio {ratio:.3f}"

    base = rng.randbytes(10 * 1024 * 1024)
    chunks_a = {c.hash for c in chunk_stream(base)}
    chunks_b = {c.hash for c in chunk_stream(b"\x01" + base)}
    shared = len(chunks_a & chunks_b) / len(chunks_a)
    assert shared >= 0.8, f"only {shared:.0%} shared after prepend"
    _ok(
        f"criterion 10: byte-identical round trip, re-store +0B, overlap ratio {ratio:.3f}, "
        f"{shared:.0%} chunk reuse after 1-byte prepend"
    )


# -- 11. end-to-end CLI -----------------------------------------------------------------------


@pytest.mark.parametrize("fixture", ["stale-read", "pipeline"])
def test_criterion_11_end_to_end_cli(tmp_path, monkeypatch, capsys, fixture):
    monkeypatch.setenv("PROVREPEAT_HOME", str(tmp_path / "home"))
    data_root = tmp_path / "data"
    records = stale_read_records() if fixture == "stale-read" else pipeline_records(True)
    records = prefix_records(records, str(data_root))
    for record in records:
        for side in ("subject", "object"):
            node = record[side]
            if node["kind"] == "entity":
                target = data_root / node["path"].replace(str(data_root) + "/", "")
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(f"payload {node['path']}".encode())
    log = tmp_path / "trace.jsonl"
    log.write_bytes(records_to_log(records))

    assert cli_main(["create", "RUN"]) == 0
    assert cli_main(["exec", str(log), "--command", "demo"]) == 0
    assert cli_main(["repeat", "1", "--execute"]) == 0
    assert cli_main(["verify", "1", "2"]) == 0
    out = capsys.readouterr().out
    assert '"isomorphic": true' in out
    _ok(f"criterion 11: exec -> repeat --execute -> verify isomorphic on {fixture} fixture")

from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provrepeat.dependency_inference import infer_provenance
from provrepeat.prov_graph import GraphBuilder, ProvLabel, export_prov_json
from provrepeat.repeat_planner import (
    PlanError,
    build_sub_container,
    get_deps,
    get_procs,
    plan_modified_repeat,
    plan_partial_repeat,
    simulate_replay,
    simulated_rerun_graph,
    spawn_order,
)
from provrepeat.isomorphism import verify_exact_repeat
from provrepeat.store import ChunkStore, ContainerManifest, StoreError, put_files
from provrepeat.synth import pipeline_log, random_prov_graph
from provrepeat.trace_model import parse_trace_log


def pipeline_with_exes():
    return infer_provenance(parse_trace_log(pipeline_log(with_executables=True)))


def test_direct_descendants_include_spawned_children(pipeline):
    assert get_procs({"p:11"}, pipeline) == {"p:11", "p:12"}


def test_sink_process_has_no_descendants(pipeline):
    assert get_procs({"p:12"}, pipeline) == {"p:12"}


def test_direct_vs_full_closure_on_spawn_chain():
    b = GraphBuilder()
    for i in (1, 2, 3):
        b.activity(f"p:{i}", f"job{i}", pid=i)
    b.edge("p:1", "p:2", ProvLabel.WAS_INFORMED_BY, (1, 1))
    b.edge("p:2", "p:3", ProvLabel.WAS_INFORMED_BY, (2, 2))
    graph = b.build()
    assert get_procs({"p:1"}, graph, mode="direct") == {"p:1", "p:2"}
    assert get_procs({"p:1"}, graph, mode="all") == {"p:1", "p:2", "p:3"}


def test_dataflow_consumers_are_direct_descendants(pipeline):
    # Q consumes B generated by P, in addition to being spawned by it
    assert "p:12" in get_procs({"p:11"}, pipeline)


def test_get_deps_covers_reads_and_writes(pipeline):
    assert get_deps({"p:12"}, pipeline) == {"/in/C", "/out/D", "/work/B"}
    assert get_deps(set(), pipeline) == set()


def test_get_deps_rejects_entity_ids(pipeline):
    with pytest.raises(PlanError):
        get_deps({"/in/A"}, pipeline)


def test_partial_plan_for_sink_process():
    graph = pipeline_with_exes()
    plan = plan_partial_repeat({"p:12"}, graph)
    assert plan.required_procs == ("p:12",)
    assert plan.required_files == ("/apps/q-exe", "/in/C", "/work/B")
    assert plan.reused_outputs == ("/work/B",)


def test_partial_plan_requires_selection(pipeline):
    with pytest.raises(PlanError):
        plan_partial_repeat(set(), pipeline)


def test_intermediate_output_is_pulled_without_rerunning_producer():
    # selecting only the consumer stages an output produced by an unselected one
    graph = pipeline_with_exes()
    plan = plan_partial_repeat({"p:12"}, graph)
    assert "/work/B" in plan.required_files
    assert "p:11" not in plan.required_procs


def _container(tmp_path, graph):
    store = ChunkStore(tmp_path / "store")
    payload_dir = tmp_path / "payloads"
    sources = {}
    for entity in graph.entities():
        rel = entity.id.lstrip("/")
        target = payload_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(f"content of {entity.id}".encode())
        sources[rel] = target
    entries, _ = put_files(store, sources)
    manifest = ContainerManifest(
        sciunit="t", seq=1, created="now", command="run",
        files=entries, provenance=json.loads(export_prov_json(graph)),
    )
    return store, manifest


def test_build_sub_container_stages_only_required_files(tmp_path):
    graph = pipeline_with_exes()
    store, manifest = _container(tmp_path, graph)
    plan, sub = build_sub_container({"p:12"}, manifest, store)
    assert sorted(sub.files) == ["apps/q-exe", "in/C", "work/B"]
    assert "in/A" not in sub.files
    assert sub.parent_seq == manifest.seq
    # induced provenance covers the regenerated output D as a node
    assert "/out/D" in sub.provenance["entity"]


def test_select_all_equals_used_content(tmp_path):
    graph = pipeline_with_exes()
    store, manifest = _container(tmp_path, graph)
    selected = {a.id for a in graph.activities()}
    plan, sub = build_sub_container(selected, manifest, store)
    used_content = {e.id.lstrip("/") for e in graph.entities() if graph.readers_of(e.id)}
    assert set(sub.files) == used_content


def test_build_sub_container_flags_missing_chunks(tmp_path):
    graph = pipeline_with_exes()
    store, manifest = _container(tmp_path, graph)
    victim = manifest.files["work/B"].chunks[0]
    store.delete(victim)
    with pytest.raises(StoreError, match="missing from the store"):
        build_sub_container({"p:12"}, manifest, store)


def test_modified_repeat_single_input(pipeline):
    rerun = plan_modified_repeat({"/in/C"}, pipeline)
    assert rerun.procs_to_rerun == ("p:12",)
    assert "/work/B" in rerun.entities_reused


def test_modified_repeat_root_input_reruns_everything(pipeline):
    rerun = plan_modified_repeat({"/in/A"}, pipeline)
    assert rerun.procs_to_rerun == ("p:11", "p:12")
    assert rerun.entities_reused == ()


def test_modified_repeat_empty_change(pipeline):
    rerun = plan_modified_repeat(set(), pipeline)
    assert rerun.procs_to_rerun == ()
    assert set(rerun.entities_reused) == {"/out/D", "/work/B"}


def test_modified_repeat_rejects_generated_entities(pipeline):
    with pytest.raises(PlanError, match="generated by"):
        plan_modified_repeat({"/work/B"}, pipeline)


def test_spawn_order_prefers_parents(pipeline):
    assert spawn_order(pipeline, {"p:11", "p:12"}) == ["p:11", "p:12"]
    assert spawn_order(pipeline, {"p:12"}) == ["p:12"]


def test_simulated_replay_covers_all_reads(pipeline):
    plan = plan_partial_repeat({"p:11", "p:12"}, pipeline)
    report = simulate_replay(plan, pipeline)
    assert report.ok
    assert report.order == ["p:11", "p:12"]
    assert report.files_read() <= set(plan.required_files) | report.files_written()


def test_replay_detects_missing_inputs(pipeline):
    plan = plan_partial_repeat({"p:12"}, pipeline)
    starved = plan.__class__(
        required_procs=plan.required_procs, required_files=(), reused_outputs=()
    )
    report = simulate_replay(starved, pipeline)
    assert not report.ok
    assert any("/work/B" in p for p in report.missing_inputs)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_plan_monotonicity(seed):
    rng = random.Random(seed)
    graph = random_prov_graph(rng, n_activities=4, n_entities=6, edge_prob=0.4)
    procs = sorted(a.id for a in graph.activities())
    small = set(rng.sample(procs, k=rng.randint(1, len(procs) - 1)))
    extra = rng.choice([p for p in procs if p not in small])
    plan_small = plan_partial_repeat(small, graph)
    plan_large = plan_partial_repeat(small | {extra}, graph)
    assert set(plan_small.required_files) <= set(plan_large.required_files)
    assert set(plan_small.required_procs) <= set(plan_large.required_procs)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_closure_soundness_under_replay(seed):
    rng = random.Random(seed)
    graph = random_prov_graph(rng, n_activities=4, n_entities=6, edge_prob=0.4)
    procs = sorted(a.id for a in graph.activities())
    selected = set(rng.sample(procs, k=rng.randint(1, len(procs))))
    plan = plan_partial_repeat(selected, graph, mode=rng.choice(["direct", "all"]))
    report = simulate_replay(plan, graph)
    assert report.ok
    assert report.files_read() <= set(plan.required_files) | report.files_written()
    # every staged file is read by some planned process
    assert set(plan.required_files) == report.files_read()


def test_minimality_on_trees():
    # chain A -> P -> B -> Q -> C is a tree; staged files are exactly the reads
    b = GraphBuilder()
    b.entity("A", "A").entity("B", "B").entity("C", "C")
    b.activity("P", "P", pid=1).activity("Q", "Q", pid=2)
    b.edge("A", "P", ProvLabel.USED, (1, 2))
    b.edge("P", "B", ProvLabel.WAS_GENERATED_BY, (3, 4))
    b.edge("B", "Q", ProvLabel.USED, (5, 6))
    b.edge("Q", "C", ProvLabel.WAS_GENERATED_BY, (7, 8))
    graph = b.build()
    plan = plan_partial_repeat({"Q"}, graph)
    assert set(plan.required_files) == {"B"}
    plan = plan_partial_repeat({"P", "Q"}, graph)
    assert set(plan.required_files) == {"A", "B"}


def test_simulated_rerun_is_isomorphic_but_not_identical(pipeline):
    rerun = simulated_rerun_graph(pipeline)
    assert rerun != pipeline
    assert verify_exact_repeat(pipeline, rerun).isomorphic

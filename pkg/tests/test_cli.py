from __future__ import annotations

import json

import pytest

from provrepeat.cli import main
from provrepeat.synth import pipeline_records, stale_read_log
from provrepeat.workspace import Workspace

from conftest import prefix_records, records_to_log


@pytest.fixture
def home(tmp_path, monkeypatch):
    root = tmp_path / "wshome"
    monkeypatch.setenv("PROVREPEAT_HOME", str(root))
    return root


@pytest.fixture
def payload_pipeline(tmp_path):
    """Pipeline trace whose entity paths point at real files."""
    root = tmp_path / "data"
    records = prefix_records(pipeline_records(with_executables=True), str(root))
    for record in records:
        for side in ("subject", "object"):
            node = record[side]
            if node["kind"] == "entity":
                target = root / node["path"].replace(str(root) + "/", "")
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(f"bytes of {node['path']}".encode())
    log = tmp_path / "pipeline.jsonl"
    log.write_bytes(records_to_log(records))
    return log, root


def run(*argv) -> int:
    return main([str(a) for a in argv])


def test_create_and_duplicate(home, capsys):
    assert run("create", "FIE") == 0
    assert run("create", "FIE") == 3
    assert "already exists" in capsys.readouterr().err


def test_list_empty_after_create(home, capsys):
    run("create", "FIE")
    assert run("list") == 0
    out = capsys.readouterr().out
    assert "0 container(s)" in out


def test_exec_list_show(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    assert run("exec", log, "--command", "bash run.sh") == 0
    assert run("exec", log) == 0
    capsys.readouterr()
    assert run("list", "--json") == 0
    listing = json.loads(capsys.readouterr().out)
    assert [row["seq"] for row in listing["containers"]] == [1, 2]
    assert run("show", "--json") == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["seq"] == 2  # default: latest
    assert shown["provenance"]["activities"] == 2


def test_exec_twice_deduplicates(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    capsys.readouterr()
    assert run("exec", log, "--json") == 0
    first = json.loads(capsys.readouterr().out)
    assert run("exec", log, "--json") == 0
    second = json.loads(capsys.readouterr().out)
    assert first["new_bytes"] > 0
    assert second["new_bytes"] == 0


def test_exec_rejects_malformed_trace(home, tmp_path, capsys):
    run("create", "FIE")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"op": "readFrom"}\nnot json\n')
    assert run("exec", bad) == 3
    assert "line 1" in capsys.readouterr().err


def test_show_without_containers(home, capsys):
    run("create", "FIE")
    assert run("show") == 3
    assert "no containers" in capsys.readouterr().err


def test_repeat_plan_only_does_not_touch_store(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    ws = Workspace()
    before = set(ws.store.iter_hashes())
    assert run("repeat", "1", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["plan"]["required_procs"] == ["p:11", "p:12"]
    assert set(ws.store.iter_hashes()) == before
    assert ws.container_seqs("FIE") == [1]


def test_partial_repeat_materializes_inputs(home, payload_pipeline, tmp_path, capsys):
    log, root = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    workdir = tmp_path / "stage"
    assert run("repeat", "1", "--procs", "p:12", "--workdir", workdir, "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    staged = {p.name for p in workdir.rglob("*") if p.is_file()}
    assert staged == {"B", "C", "q-exe"}
    assert payload["plan"]["reused_outputs"] != []


def test_repeat_execute_verifies_isomorphic(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    assert run("repeat", "1", "--execute", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["verdict"]["isomorphic"] is True
    assert payload["rerun_seq"] == 2
    assert run("verify", "1", "2") == 0


def test_verify_self_is_isomorphic(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    assert run("verify", "1", "1") == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["isomorphic"] is True


def test_verify_distinct_runs_nonisomorphic(home, payload_pipeline, tmp_path, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    other = tmp_path / "other.jsonl"
    other.write_bytes(stale_read_log())
    run("exec", other)
    capsys.readouterr()
    assert run("verify", "1", "2") == 1


def test_repeat_given_plans_rerun(home, payload_pipeline, tmp_path, capsys):
    log, root = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    replacement = tmp_path / "newC"
    replacement.write_bytes(b"fresh input")
    target = str(root) + "/in/C"
    assert run("repeat", "1", "--given", f"{target}={replacement}", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rerun"]["procs_to_rerun"] == ["p:12"]
    reused = payload["rerun"]["entities_reused"]
    assert any(e.endswith("/work/B") for e in reused)
    # replacement staged at the entity's container-relative location
    workdir = payload["workdir"]
    staged = tmp_path.glob("**/in/C")
    assert any(p.read_bytes() == b"fresh input" for p in staged if str(p).startswith(workdir))


def test_repeat_given_rejects_generated_entity(home, payload_pipeline, tmp_path, capsys):
    log, root = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    target = str(root) + "/work/B"
    assert run("repeat", "1", "--given", f"{target}=/tmp/x") == 3
    assert "generated by" in capsys.readouterr().err


def test_summarize_formats(home, payload_pipeline, tmp_path, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    assert run("summarize", "1", "--mode", "collapse", "--format", "dot") == 0
    assert capsys.readouterr().out.startswith("digraph")
    assert run("summarize", "1", "--mode", "ancestry", "--format", "json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["mode"] == "ancestry-degree"
    out_file = tmp_path / "summary.dot"
    assert run("summarize", "1", "-o", out_file) == 0
    assert out_file.read_text().startswith("digraph")


def test_stats_reports_both_modes(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    capsys.readouterr()
    assert run("stats", "1", "--json") == 0
    stats = json.loads(capsys.readouterr().out)
    assert set(stats) == {"collapse", "ancestry"}
    for block in stats.values():
        assert set(block) == {
            "file_node_reduction",
            "process_node_reduction",
            "edge_reduction",
            "combined_reduction",
        }


def test_export_import_round_trip(home, payload_pipeline, tmp_path, monkeypatch, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    archive = tmp_path / "fie.tar"
    assert run("export", "-o", archive) == 0
    capsys.readouterr()

    other_home = tmp_path / "other-home"
    monkeypatch.setenv("PROVREPEAT_HOME", str(other_home))
    assert run("import", archive) == 0
    capsys.readouterr()
    assert run("list", "--json") == 0
    listing = json.loads(capsys.readouterr().out)
    assert listing["sciunit"] == "FIE"
    assert len(listing["containers"]) == 1
    assert run("verify", "1", "1") == 0


def test_gc_drops_unreferenced_chunks(home, payload_pipeline, capsys):
    log, _ = payload_pipeline
    run("create", "FIE")
    run("exec", log)
    ws = Workspace()
    ws.store.put(b"orphan bytes" * 1000)
    capsys.readouterr()
    assert run("gc", "--json") == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["removed_chunks"] == 1
    assert payload["corrupt_chunks"] == []


def test_usage_error_exit_code(home):
    with pytest.raises(SystemExit) as err:
        main(["repeat", "--bogus-flag"])
    assert err.value.code == 2

"""Git-like command line front end.

Commands mirror the library: ``create`` a sciunit, ``exec`` a trace into a
container, ``repeat`` containers fully, partially, or with substituted
inputs, ``verify`` two runs for provenance isomorphism, ``summarize`` and
``stats`` for graph views, plus ``export``/``import``/``gc`` for payload
management.  Exit codes: 0 success or isomorphic, 1 verified non-isomorphic,
2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import shutil
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

from . import ingest_strace
from .dependency_inference import detect_cycles, infer_provenance, version_entities
from .isomorphism import verdict_json, verify_exact_repeat
from .prov_graph import (
    GraphFormatError,
    ProvenanceGraph,
    ProvLabel,
    UnknownNodeError,
    export_prov_json,
    import_prov_json,
)
from .repeat_planner import (
    PlanError,
    SubContainerPlan,
    build_sub_container,
    plan_modified_repeat,
    simulate_replay,
    simulated_rerun_graph,
)
from .store import (
    ContainerManifest,
    StoreError,
    container_rel_path,
    gc as store_gc,
    materialize,
    put_files,
)
from .summarizer import (
    SummaryError,
    ancestry_degree_grouping,
    summarize_collapse,
    summary_json_bytes,
    summary_stats,
)
from .trace_model import TraceParseError, activity_id, parse_trace_log, validate_trace
from .workspace import Workspace, WorkspaceError, now_iso

_DATA_ERRORS = (
    WorkspaceError,
    StoreError,
    TraceParseError,
    PlanError,
    GraphFormatError,
    SummaryError,
    UnknownNodeError,
)


def _print_json(payload: object) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _graph_of(manifest: ContainerManifest) -> ProvenanceGraph:
    return import_prov_json(json.dumps(manifest.provenance))


def _resolve_seq(ws: Workspace, name: str, seq: int | None) -> int:
    seqs = ws.container_seqs(name)
    if not seqs:
        raise WorkspaceError(f"sciunit {name!r} has no containers yet")
    if seq is None:
        return seqs[-1]
    if seq not in seqs:
        raise WorkspaceError(f"sciunit {name!r} has no container {seq}")
    return seq


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_create(ws: Workspace, args: argparse.Namespace) -> int:
    with ws.lock():
        ws.create(args.name)
    print(f"created sciunit {args.name!r} (now current)")
    return 0


def cmd_list(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    rows = []
    for seq in ws.container_seqs(name):
        manifest = ws.load_manifest(name, seq)
        rows.append(
            {
                "seq": seq,
                "created": manifest.created,
                "command": manifest.command or "",
                "files": len(manifest.files),
                "bytes": manifest.total_size(),
            }
        )
    if args.json:
        _print_json({"sciunit": name, "containers": rows})
        return 0
    print(f"sciunit {name}: {len(rows)} container(s)")
    if rows:
        print(f"{'seq':>4}  {'created':<25} {'files':>5} {'bytes':>10}  command")
        for row in rows:
            print(
                f"{row['seq']:>4}  {row['created']:<25} {row['files']:>5} "
                f"{row['bytes']:>10}  {row['command']}"
            )
    return 0


def cmd_show(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    seq = _resolve_seq(ws, name, args.seq)
    manifest = ws.load_manifest(name, seq)
    graph = _graph_of(manifest)
    info = {
        "sciunit": name,
        "seq": seq,
        "created": manifest.created,
        "command": manifest.command,
        "files": len(manifest.files),
        "bytes": manifest.total_size(),
        "provenance": {
            "activities": len(graph.activities()),
            "entities": len(graph.entities()),
            "edges": len(graph.edges),
        },
        "meta": manifest.meta,
    }
    if args.json:
        _print_json(info)
        return 0
    print(f"container {name}/{seq}  (created {manifest.created})")
    print(f"  command: {manifest.command or '-'}")
    print(f"  files: {info['files']}  bytes: {info['bytes']}")
    prov = info["provenance"]
    print(
        f"  provenance: {prov['activities']} processes, {prov['entities']} files, "
        f"{prov['edges']} edges"
    )
    for key, value in sorted(manifest.meta.items()):
        print(f"  {key}: {value}")
    return 0


def _capture_trace(command: list[str]) -> bytes:
    strace = shutil.which("strace")
    if strace is None:
        raise WorkspaceError("--capture needs the strace tool on PATH (Linux only)")
    with tempfile.NamedTemporaryFile(suffix=".strace", delete=False) as handle:
        out = handle.name
    proc = subprocess.run(
        [strace, "-f", "-ttt", "-e", "trace=open,openat,close,fork,clone,execve", "-o", out]
        + command,
        capture_output=True,
    )
    if proc.returncode != 0:
        raise WorkspaceError(f"captured command failed with exit code {proc.returncode}")
    return ingest_strace.strace_to_log(Path(out).read_text())


def cmd_exec(ws: Workspace, args: argparse.Namespace) -> int:
    if args.capture:
        raw = _capture_trace(args.capture)
        command = " ".join(args.capture)
    else:
        if not args.trace:
            raise WorkspaceError("give a trace log file or --capture <command>")
        raw = Path(args.trace).read_bytes()
        command = args.command or f"exec {args.trace}"

    trace = parse_trace_log(raw)
    violations = validate_trace(trace)
    if violations:
        for v in violations:
            print(f"invalid trace: {v.message} ({v.subject})", file=sys.stderr)
        return 3
    if args.version_files:
        trace = version_entities(trace)
    graph = infer_provenance(trace)
    report = detect_cycles(graph)
    if not report.is_acyclic:
        print(
            f"warning: {len(report.cycles)} dependency cycle(s); repeat may re-run "
            "extra processes (consider --version-files)",
            file=sys.stderr,
        )

    sources: dict[str, Path] = {}
    missing: list[str] = []
    for entity in graph.entities():
        rel = container_rel_path(entity.id)
        path = Path("/" + rel)
        if rel not in sources and path.is_file():
            sources[rel] = path
        elif not path.is_file():
            missing.append(entity.id)
    missing = sorted(set(missing) - {e for e in missing if container_rel_path(e) in sources})

    with ws.lock():
        name = ws.current()
        seq = ws.next_seq(name)
        entries, put_report = put_files(ws.store, sources)
        meta: dict[str, object] = {"trace_digest": trace.digest()}
        if missing:
            meta["metadata_only_entities"] = missing
            for entity_id in missing:
                print(f"warning: no payload on disk for {entity_id}", file=sys.stderr)
        if not report.is_acyclic:
            meta["dependency_cycles"] = len(report.cycles)
        manifest = ContainerManifest(
            sciunit=name,
            seq=seq,
            created=now_iso(),
            command=command,
            files=entries,
            provenance=json.loads(export_prov_json(graph)),
            meta=meta,
        )
        ws.save_manifest(manifest)
    if args.json:
        _print_json(
            {
                "sciunit": name,
                "seq": seq,
                "new_chunks": put_report.new_chunks,
                "new_bytes": put_report.new_bytes,
                "metadata_only": missing,
            }
        )
    else:
        print(f"container {seq} registered in sciunit {name!r}")
    return 0


def _resolve_proc_ids(graph: ProvenanceGraph, tokens: list[str]) -> set[str]:
    resolved = set()
    for token in tokens:
        candidates = [token, activity_id(int(token)) if token.isdigit() else None]
        for candidate in candidates:
            if candidate and candidate in graph:
                resolved.add(candidate)
                break
        else:
            by_label = [a.id for a in graph.activities() if a.label == token]
            if len(by_label) == 1:
                resolved.add(by_label[0])
            else:
                raise PlanError(f"cannot resolve process id {token!r}")
    return resolved


def _resolve_entity(graph: ProvenanceGraph, path: str) -> str:
    if path in graph:
        return path
    matches = [e.id for e in graph.entities() if container_rel_path(e.id) == path.lstrip("/")]
    if len(matches) == 1:
        return matches[0]
    raise PlanError(f"cannot resolve input entity {path!r}")


def _workdir(ws: Workspace, args: argparse.Namespace, name: str, seq: int) -> Path:
    if args.workdir:
        return Path(args.workdir)
    return ws.root / "work" / f"{name}-{seq}"


def cmd_repeat(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    seq = _resolve_seq(ws, name, args.seq)
    manifest = ws.load_manifest(name, seq)
    graph = _graph_of(manifest)
    workdir = _workdir(ws, args, name, seq)

    if args.given:
        return _repeat_given(ws, args, manifest, graph, workdir)

    if args.procs:
        selected = _resolve_proc_ids(graph, [t for t in args.procs.split(",") if t])
    else:
        selected = {a.id for a in graph.activities()}
    plan, sub_manifest = build_sub_container(selected, manifest, ws.store, mode=args.descendants)
    materialize(ws.store, sub_manifest, workdir)

    payload: dict[str, object] = {
        "plan": plan.as_dict(),
        "workdir": str(workdir),
        "staged_files": sorted(sub_manifest.files),
    }

    if not args.execute:
        if args.json:
            _print_json(payload)
        else:
            _print_plan(plan, workdir)
        return 0

    replay = simulate_replay(plan, graph)
    if not replay.ok:
        for problem in replay.missing_inputs:
            print(f"replay failed: {problem}", file=sys.stderr)
        return 3
    reference = _graph_of(sub_manifest)
    rerun = simulated_rerun_graph(reference)
    verdict = verify_exact_repeat(reference, rerun)

    with ws.lock():
        rerun_seq = ws.next_seq(name)
        rerun_files = dict(sub_manifest.files)
        for proc in plan.required_procs:
            for output in graph.neighbors(proc, "out", ProvLabel.WAS_GENERATED_BY):
                rel = container_rel_path(output)
                if rel in manifest.files:
                    rerun_files[rel] = manifest.files[rel]
        rerun_manifest = ContainerManifest(
            sciunit=name,
            seq=rerun_seq,
            created=now_iso(),
            command=f"repeat {seq}",
            files=rerun_files,
            provenance=json.loads(export_prov_json(rerun)),
            parent_seq=seq,
            meta={"replayed_procs": list(plan.required_procs)},
        )
        ws.save_manifest(rerun_manifest)

    payload.update(
        {
            "rerun_seq": rerun_seq,
            "verdict": verdict_json(verdict),
            "replay_order": replay.order,
        }
    )
    if args.json:
        _print_json(payload)
    else:
        _print_plan(plan, workdir)
        print(f"replayed {len(replay.order)} process(es); rerun registered as container {rerun_seq}")
        print(f"verdict: {'isomorphic' if verdict.isomorphic else 'NOT isomorphic'}")
    return 0 if verdict.isomorphic else 1


def _print_plan(plan: SubContainerPlan, workdir: Path) -> None:
    print(f"processes to run: {', '.join(plan.required_procs)}")
    print(f"files staged:     {', '.join(plan.required_files) or '-'}")
    if plan.reused_outputs:
        print(f"reused outputs:   {', '.join(plan.reused_outputs)}")
    print(f"workdir:          {workdir}")


def _repeat_given(
    ws: Workspace,
    args: argparse.Namespace,
    manifest: ContainerManifest,
    graph: ProvenanceGraph,
    workdir: Path,
) -> int:
    replacements: dict[str, str] = {}
    for pair in args.given:
        target, sep, source = pair.partition("=")
        if not sep:
            raise PlanError(f"--given expects path=replacement, got {pair!r}")
        replacements[_resolve_entity(graph, target)] = source
    rerun_set = plan_modified_repeat(set(replacements), graph)

    stale = {
        output
        for proc in rerun_set.procs_to_rerun
        for output in graph.neighbors(proc, "out", ProvLabel.WAS_GENERATED_BY)
    }
    keep = {
        container_rel_path(e.id)
        for e in graph.entities()
        if e.id not in stale and e.id not in replacements
    }
    materialize(ws.store, manifest, workdir, only_paths=keep & set(manifest.files))
    copied = []
    for entity_id, source in replacements.items():
        source_path = Path(source)
        if source_path.is_file():
            dest = workdir / container_rel_path(entity_id)
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(source_path, dest)
            copied.append(entity_id)

    payload: dict[str, object] = {
        "rerun": rerun_set.as_dict(),
        "workdir": str(workdir),
        "replacements_staged": sorted(copied),
    }
    if args.execute:
        required_files = set()
        for proc in rerun_set.procs_to_rerun:
            required_files.update(graph.neighbors(proc, "in", ProvLabel.USED))
        plan = SubContainerPlan(
            required_procs=rerun_set.procs_to_rerun,
            required_files=tuple(sorted(required_files)),
            reused_outputs=rerun_set.entities_reused,
        )
        replay = simulate_replay(plan, graph)
        if not replay.ok:
            for problem in replay.missing_inputs:
                print(f"replay failed: {problem}", file=sys.stderr)
            return 3
        payload["replay_order"] = replay.order
    if args.json:
        _print_json(payload)
    else:
        print(f"processes to re-run: {', '.join(rerun_set.procs_to_rerun) or '-'}")
        print(f"outputs reused:      {', '.join(rerun_set.entities_reused) or '-'}")
        print(f"workdir:             {workdir}")
    return 0


def cmd_verify(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    ref = _graph_of(ws.load_manifest(name, _resolve_seq(ws, name, args.seq_a)))
    new = _graph_of(ws.load_manifest(name, _resolve_seq(ws, name, args.seq_b)))
    verdict = verify_exact_repeat(ref, new)
    _print_json(verdict_json(verdict))
    return 0 if verdict.isomorphic else 1


def cmd_summarize(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    seq = _resolve_seq(ws, name, args.seq)
    graph = _graph_of(ws.load_manifest(name, seq))
    if args.mode == "collapse":
        summary = summarize_collapse(graph)
        output = summary.to_dot() if args.format == "dot" else summary_json_bytes(summary).decode()
    else:
        grouping = ancestry_degree_grouping(graph)
        output = (
            grouping.to_dot(graph) if args.format == "dot" else summary_json_bytes(grouping).decode()
        )
    if args.output:
        Path(args.output).write_text(output)
        print(f"wrote {args.output}")
    else:
        print(output, end="")
    return 0


def cmd_stats(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    seq = _resolve_seq(ws, name, args.seq)
    graph = _graph_of(ws.load_manifest(name, seq))
    collapse = summary_stats(graph, summarize_collapse(graph))
    grouping = summary_stats(graph, ancestry_degree_grouping(graph))
    if args.json:
        _print_json({"collapse": collapse, "ancestry": grouping})
        return 0
    print(f"reduction for container {name}/{seq} (percent):")
    print(f"{'':<12}{'files':>8}{'processes':>11}{'edges':>8}{'combined':>10}")
    for title, stats in (("collapse", collapse), ("ancestry", grouping)):
        print(
            f"{title:<12}{stats['file_node_reduction']:>8.1f}"
            f"{stats['process_node_reduction']:>11.1f}"
            f"{stats['edge_reduction']:>8.1f}{stats['combined_reduction']:>10.1f}"
        )
    return 0


def cmd_export(ws: Workspace, args: argparse.Namespace) -> int:
    name = args.sciunit or ws.current()
    seqs = ws.container_seqs(name)
    chunks: set[str] = set()
    for seq in seqs:
        chunks |= ws.load_manifest(name, seq).chunk_hashes()
    with tarfile.open(args.output, "w") as tar:
        tar.add(ws.sciunits_dir / name, arcname=f"sciunits/{name}")
        for chunk_hash in sorted(chunks):
            source = ws.store.path_for(chunk_hash)
            tar.add(source, arcname=f"objects/{chunk_hash[:2]}/{chunk_hash[2:4]}/{chunk_hash}")
    print(f"exported sciunit {name!r} ({len(seqs)} containers, {len(chunks)} chunks) to {args.output}")
    return 0


def cmd_import(ws: Workspace, args: argparse.Namespace) -> int:
    ws.ensure()
    imported = []
    with ws.lock(), tarfile.open(args.archive) as tar:
        for member in tar.getmembers():
            parts = Path(member.name).parts
            if ".." in parts or Path(member.name).is_absolute():
                raise WorkspaceError(f"archive member {member.name!r} is unsafe")
            if parts[0] == "sciunits" and len(parts) >= 2:
                if (ws.sciunits_dir / parts[1]).exists() and parts[1] not in imported:
                    raise WorkspaceError(f"sciunit {parts[1]!r} already exists")
                if parts[1] not in imported:
                    imported.append(parts[1])
                tar.extract(member, ws.root)
            elif parts[0] == "objects":
                target = ws.store.root / member.name
                if not target.exists():
                    tar.extract(member, ws.store.root)
    for name in imported:
        ws.select(name)
    print(f"imported sciunit(s): {', '.join(imported) or 'none'}")
    return 0


def cmd_gc(ws: Workspace, args: argparse.Namespace) -> int:
    with ws.lock():
        removed = store_gc(ws.store, ws.all_manifests())
        corrupt = ws.store.scrub()
    if args.json:
        _print_json({"removed_chunks": len(removed), "corrupt_chunks": corrupt})
    else:
        print(f"removed {len(removed)} unreferenced chunk(s)")
        if corrupt:
            print(f"WARNING: {len(corrupt)} corrupt chunk(s): {', '.join(corrupt)}")
    return 0 if not corrupt else 3


def cmd_ingest_strace(ws: Workspace, args: argparse.Namespace) -> int:
    text = Path(args.input).read_text() if args.input else sys.stdin.read()
    log = ingest_strace.strace_to_log(text)
    if args.output:
        Path(args.output).write_bytes(log)
        print(f"wrote {args.output}")
    else:
        sys.stdout.buffer.write(log)
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provrepeat",
        description="Provenance-driven audit, repeat, and summarization of runs",
    )
    parser.add_argument("--home", help="workspace root (default $PROVREPEAT_HOME or ~/.provrepeat)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("create", help="create a sciunit namespace and select it")
    p.add_argument("name")
    p.set_defaults(func=cmd_create)

    p = sub.add_parser("list", help="list containers of the current sciunit")
    p.add_argument("--sciunit")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("show", help="show one container (default: latest)")
    p.add_argument("seq", nargs="?", type=int)
    p.add_argument("--sciunit")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_show)

    p = sub.add_parser("exec", help="ingest a trace log (or capture one) into a container")
    p.add_argument("trace", nargs="?", help="trace log file")
    p.add_argument("--capture", nargs=argparse.REMAINDER, help="run a command under strace")
    p.add_argument("--command", help="display label for the run")
    p.add_argument("--version-files", action="store_true", help="split conflicting file versions")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("ingest-strace", help="convert strace output to a trace log")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ingest_strace)

    p = sub.add_parser("repeat", help="plan/stage a repeat; --execute replays and verifies")
    p.add_argument("seq", nargs="?", type=int)
    p.add_argument("--sciunit")
    p.add_argument("--procs", help="comma-separated process ids for a partial repeat")
    p.add_argument("--given", action="append", default=[], metavar="PATH=REPLACEMENT",
                   help="substitute an input entity (repeatable)")
    p.add_argument("--descendants", choices=["direct", "all"], default="direct")
    p.add_argument("--execute", action="store_true", help="simulated replay plus verification")
    p.add_argument("--workdir")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("verify", help="check two containers for provenance isomorphism")
    p.add_argument("seq_a", type=int)
    p.add_argument("seq_b", type=int)
    p.add_argument("--sciunit")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("summarize", help="emit a summary graph")
    p.add_argument("seq", nargs="?", type=int)
    p.add_argument("--sciunit")
    p.add_argument("--mode", choices=["collapse", "ancestry"], default="collapse")
    p.add_argument("--format", choices=["dot", "json"], default="dot")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("stats", help="node/edge reduction of both summary modes")
    p.add_argument("seq", nargs="?", type=int)
    p.add_argument("--sciunit")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="write a sciunit plus its chunks to a tar archive")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sciunit")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", help="load an exported sciunit archive")
    p.add_argument("archive")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("gc", help="drop unreferenced chunks and scrub the store")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gc)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ws = Workspace(args.home)
    try:
        return args.func(ws, args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())

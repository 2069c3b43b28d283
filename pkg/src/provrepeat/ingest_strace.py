"""Best-effort adapter from strace output to the trace-log record format.

Expects strace invoked as::

    strace -f -ttt -e trace=open,openat,close,fork,clone,execve -o out.txt CMD

Coverage notes: open/openat intervals run from the open to the matching close
(or to the last event seen for fds left open); O_RDONLY maps to a read record,
any writable flag set to a write record, O_RDWR to both; fork/clone emit spawn
records; execve sets the process label and reads the executable.  Interrupted
syscalls (``<unfinished ...>`` / ``resumed``) and fd inheritance across forks
are not reconstructed.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass

_LINE_RE = re.compile(
    r"^(?:\[pid\s+(?P<bpid>\d+)\]\s+|(?P<pid>\d+)\s+)?"
    r"(?P<ts>\d+\.\d+)\s+(?P<call>\w+)\((?P<args>.*)\)\s*=\s*(?P<ret>-?\d+|\?)"
)
_PATH_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')

_WRITE_FLAGS = ("O_WRONLY", "O_RDWR", "O_APPEND", "O_CREAT", "O_TRUNC")


@dataclass
class _OpenFd:
    path: str
    writable: bool
    readable: bool
    opened_at: int


def _ns(ts: str) -> int:
    seconds, _, frac = ts.partition(".")
    frac = (frac + "000000000")[:9]
    return int(seconds) * 1_000_000_000 + int(frac)


def parse_strace(text: str) -> list[dict]:
    """Convert strace text into trace-log records (dicts, one per event)."""
    labels: dict[int, str] = {}
    open_fds: dict[tuple[int, int], _OpenFd] = {}
    last_seen: dict[tuple[int, int], int] = {}
    records: list[dict] = []
    final_ts = 0
    default_pid: int | None = None

    def proc(pid: int) -> dict:
        return {"kind": "activity", "pid": pid, "label": labels.get(pid, f"pid-{pid}")}

    def emit_file_ops(pid: int, fd: int, closed_at: int) -> None:
        state = open_fds.pop((pid, fd), None)
        if state is None:
            return
        begin = state.opened_at
        end = max(begin, closed_at)
        entity = {"kind": "entity", "path": state.path}
        if state.readable:
            records.append(
                {"op": "readFrom", "subject": entity, "object": proc(pid),
                 "t_begin": begin, "t_end": end}
            )
        if state.writable:
            records.append(
                {"op": "hasWritten", "subject": proc(pid), "object": entity,
                 "t_begin": begin, "t_end": end}
            )

    for raw in text.splitlines():
        match = _LINE_RE.match(raw.strip())
        if not match:
            continue
        pid_text = match.group("pid") or match.group("bpid")
        ts = _ns(match.group("ts"))
        final_ts = max(final_ts, ts)
        call = match.group("call")
        args = match.group("args")
        ret = match.group("ret")
        if pid_text is None:
            if default_pid is None:
                default_pid = 1
            pid = default_pid
        else:
            pid = int(pid_text)
            if default_pid is None:
                default_pid = pid
        if call in ("open", "openat"):
            if ret in ("?",) or int(ret) < 0:
                continue
            paths = _PATH_RE.findall(args)
            if not paths:
                continue
            path = paths[-1] if call == "openat" and len(paths) > 1 else paths[0]
            writable = any(flag in args for flag in _WRITE_FLAGS)
            readable = "O_WRONLY" not in args
            key = (pid, int(ret))
            open_fds[key] = _OpenFd(path=path, writable=writable, readable=readable, opened_at=ts)
            last_seen[key] = ts
        elif call == "close":
            fd_text = args.split(",")[0].strip()
            if fd_text.isdigit():
                emit_file_ops(pid, int(fd_text), ts)
        elif call in ("fork", "clone", "vfork"):
            if ret in ("?",) or int(ret) <= 0:
                continue
            child = int(ret)
            records.append(
                {"op": "executed", "subject": proc(pid),
                 "object": {"kind": "activity", "pid": child, "label": labels.get(child, f"pid-{child}")},
                 "t_begin": ts, "t_end": ts}
            )
        elif call == "execve":
            if ret not in ("0",):
                continue
            paths = _PATH_RE.findall(args)
            if paths:
                labels[pid] = " ".join(paths[:2]) if len(paths) > 1 else paths[0]
                records.append(
                    {"op": "readFrom", "subject": {"kind": "entity", "path": paths[0]},
                     "object": proc(pid), "t_begin": ts, "t_end": ts}
                )

    for (pid, fd) in sorted(open_fds):
        emit_file_ops(pid, fd, final_ts)

    # Labels learned late (execve after fork) must back-propagate into records.
    for record in records:
        for side in ("subject", "object"):
            node = record[side]
            if node["kind"] == "activity" and node["pid"] in labels:
                node["label"] = labels[node["pid"]]
    return records


def strace_to_log(text: str) -> bytes:
    lines = [json.dumps(r, sort_keys=True) for r in parse_strace(text)]
    return ("\n".join(lines) + ("\n" if lines else "")).encode()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Convert strace output to a trace log")
    parser.add_argument("input", nargs="?", help="strace output file (default stdin)")
    parser.add_argument("-o", "--output", help="trace log destination (default stdout)")
    args = parser.parse_args(argv)
    text = open(args.input).read() if args.input else sys.stdin.read()
    log = strace_to_log(text)
    if args.output:
        with open(args.output, "wb") as handle:
            handle.write(log)
    else:
        sys.stdout.buffer.write(log)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

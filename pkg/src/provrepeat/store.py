"""Content-defined-chunking object store for container payloads.

Files are split at content-determined boundaries found by a 48-byte rolling
hash, so shared runs of bytes deduplicate across files, containers, and
executions.  Chunks are addressed by their SHA-256 and live under a fan-out
directory; container manifests map container-relative paths to chunk-hash
sequences and embed the run's provenance document.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import stat
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_CHUNK = 16 * 1024
AVG_CHUNK = 64 * 1024
MAX_CHUNK = 256 * 1024

_WINDOW = 48
_MASK = np.uint64(AVG_CHUNK - 1)  # 16 mask bits for a 64 KiB average
_MAGIC = np.uint64(0)

_rng = random.Random(0x70726F76)
_TABLE = np.array([_rng.getrandbits(64) for _ in range(256)], dtype=np.uint64)
del _rng


class StoreError(RuntimeError):
    pass


@dataclass(frozen=True)
class Chunk:
    hash: str
    length: int


def _boundary_candidates(data: bytes) -> np.ndarray:
    """Positions i where the rolling hash of data[i-47..i] hits the magic value.

    The hash of a window is independent of its absolute position, so inserting
    bytes shifts only nearby boundaries.
    """
    n = len(data)
    if n < _WINDOW:
        return np.empty(0, dtype=np.int64)
    raw = np.frombuffer(data, dtype=np.uint8)
    values = _TABLE[raw]
    rot = (np.arange(n, dtype=np.uint64)) % np.uint64(64)
    spun = (values >> rot) | (values << ((np.uint64(64) - rot) % np.uint64(64)))
    del values
    prefix = np.bitwise_xor.accumulate(spun)
    del spun
    window = prefix.copy()
    window[_WINDOW:] = prefix[_WINDOW:] ^ prefix[:-_WINDOW]
    del prefix
    back = rot
    hashes = (window << back) | (window >> ((np.uint64(64) - back) % np.uint64(64)))
    del window
    hits = (hashes & _MASK) == _MAGIC
    hits[: _WINDOW - 1] = False
    return np.nonzero(hits)[0]


def chunk_boundaries(data: bytes) -> list[int]:
    """Chunk end offsets (exclusive) covering the whole buffer."""
    n = len(data)
    if n == 0:
        return []
    ends: list[int] = []
    start = 0
    for i in map(int, _boundary_candidates(data)):
        length = i - start + 1
        if length < MIN_CHUNK:
            continue
        while length > MAX_CHUNK:
            start += MAX_CHUNK
            ends.append(start)
            length = i - start + 1
        if length >= MIN_CHUNK:
            ends.append(i + 1)
            start = i + 1
    while n - start > MAX_CHUNK:
        start += MAX_CHUNK
        ends.append(start)
    if start < n:
        ends.append(n)
    return ends


def chunk_stream(data: bytes) -> list[Chunk]:
    """Split a byte stream into content-defined chunks (16/64/256 KiB min/avg/max)."""
    chunks: list[Chunk] = []
    start = 0
    for end in chunk_boundaries(data):
        piece = data[start:end]
        chunks.append(Chunk(hash=hashlib.sha256(piece).hexdigest(), length=len(piece)))
        start = end
    return chunks


class ChunkStore:
    """Content-addressed chunk files under ``objects/aa/bb/<hash>``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.objects.mkdir(parents=True, exist_ok=True)

    def path_for(self, chunk_hash: str) -> Path:
        return self.objects / chunk_hash[:2] / chunk_hash[2:4] / chunk_hash

    def has(self, chunk_hash: str) -> bool:
        return self.path_for(chunk_hash).exists()

    def put(self, piece: bytes) -> tuple[Chunk, bool]:
        """Store one chunk; returns (chunk, newly_written)."""
        digest = hashlib.sha256(piece).hexdigest()
        target = self.path_for(digest)
        if target.exists():
            return Chunk(digest, len(piece)), False
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + f".tmp{os.getpid()}")
        tmp.write_bytes(piece)
        os.replace(tmp, target)  # atomic on POSIX
        return Chunk(digest, len(piece)), True

    def get(self, chunk_hash: str, context: str = "") -> bytes:
        target = self.path_for(chunk_hash)
        if not target.exists():
            raise StoreError(f"missing chunk {chunk_hash}{_ctx(context)}")
        piece = target.read_bytes()
        if hashlib.sha256(piece).hexdigest() != chunk_hash:
            raise StoreError(f"chunk {chunk_hash} failed its digest check{_ctx(context)}")
        return piece

    def iter_hashes(self) -> list[str]:
        return sorted(p.name for p in self.objects.glob("??/??/*") if not p.name.endswith("tmp"))

    def total_bytes(self) -> int:
        return sum(self.path_for(h).stat().st_size for h in self.iter_hashes())

    def scrub(self) -> list[str]:
        """Re-hash every chunk; returns the hashes that no longer match."""
        bad: list[str] = []
        for chunk_hash in self.iter_hashes():
            piece = self.path_for(chunk_hash).read_bytes()
            if hashlib.sha256(piece).hexdigest() != chunk_hash:
                bad.append(chunk_hash)
        return bad

    def delete(self, chunk_hash: str) -> None:
        self.path_for(chunk_hash).unlink(missing_ok=True)


def _ctx(context: str) -> str:
    return f" ({context})" if context else ""


@dataclass
class FileEntry:
    chunks: list[str]
    size: int
    mode: int
    link_target: str | None = None

    def to_json(self) -> dict:
        record: dict[str, object] = {"chunks": self.chunks, "size": self.size, "mode": self.mode}
        if self.link_target is not None:
            record["link_target"] = self.link_target
        return record

    @staticmethod
    def from_json(record: dict) -> "FileEntry":
        return FileEntry(
            chunks=list(record["chunks"]),
            size=int(record["size"]),
            mode=int(record["mode"]),
            link_target=record.get("link_target"),
        )


@dataclass
class ContainerManifest:
    sciunit: str
    seq: int
    created: str
    command: str | None
    files: dict[str, FileEntry]
    provenance: dict
    parent_seq: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def container_id(self) -> str:
        return f"{self.sciunit}/{self.seq}"

    def to_json(self) -> dict:
        return {
            "sciunit": self.sciunit,
            "seq": self.seq,
            "created": self.created,
            "command": self.command,
            "files": {path: entry.to_json() for path, entry in sorted(self.files.items())},
            "provenance": self.provenance,
            "parent_seq": self.parent_seq,
            "meta": self.meta,
        }

    @staticmethod
    def from_json(doc: dict) -> "ContainerManifest":
        return ContainerManifest(
            sciunit=doc["sciunit"],
            seq=int(doc["seq"]),
            created=doc["created"],
            command=doc.get("command"),
            files={p: FileEntry.from_json(e) for p, e in doc.get("files", {}).items()},
            provenance=doc.get("provenance", {}),
            parent_seq=doc.get("parent_seq"),
            meta=doc.get("meta", {}),
        )

    def dumps(self) -> bytes:
        return (json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n").encode()

    @staticmethod
    def loads(data: bytes | str) -> "ContainerManifest":
        return ContainerManifest.from_json(json.loads(data))

    def chunk_hashes(self) -> set[str]:
        return {h for entry in self.files.values() for h in entry.chunks}

    def total_size(self) -> int:
        return sum(entry.size for entry in self.files.values())


def container_rel_path(entity_path: str) -> str:
    """Container-relative location of an entity: its path minus root and version."""
    base = entity_path.split("#", 1)[0]
    return base.lstrip("/")


@dataclass
class PutReport:
    new_chunks: int = 0
    new_bytes: int = 0
    total_chunks: int = 0
    skipped: list[str] = field(default_factory=list)


def _store_one(
    store: ChunkStore, rel: str, path: Path, report: PutReport, on_unreadable: str
) -> FileEntry | None:
    info = path.lstat()
    if stat.S_ISLNK(info.st_mode):
        return FileEntry(chunks=[], size=0, mode=info.st_mode, link_target=os.readlink(path))
    if not stat.S_ISREG(info.st_mode):
        raise StoreError(f"{rel}: special files are not supported")
    try:
        data = path.read_bytes()
    except OSError as exc:
        if on_unreadable == "warn":
            report.skipped.append(rel)
            return None
        raise StoreError(f"cannot read {rel}: {exc}") from exc
    hashes: list[str] = []
    start = 0
    for end in chunk_boundaries(data):
        chunk, created = store.put(data[start:end])
        hashes.append(chunk.hash)
        report.total_chunks += 1
        if created:
            report.new_chunks += 1
            report.new_bytes += chunk.length
        start = end
    return FileEntry(chunks=hashes, size=len(data), mode=info.st_mode)


def put_tree(
    store: ChunkStore,
    root_dir: str | Path,
    on_unreadable: str = "abort",
) -> tuple[dict[str, FileEntry], PutReport]:
    """Chunk every regular file under a directory tree into the store."""
    root_dir = Path(root_dir)
    if not root_dir.is_dir():
        raise StoreError(f"{root_dir} is not a readable directory")
    entries: dict[str, FileEntry] = {}
    report = PutReport()
    for path in sorted(root_dir.rglob("*")):
        if path.is_dir() and not path.is_symlink():
            continue
        rel = path.relative_to(root_dir).as_posix()
        entry = _store_one(store, rel, path, report, on_unreadable)
        if entry is not None:
            entries[rel] = entry
    return entries, report


def put_files(
    store: ChunkStore,
    sources: dict[str, Path],
    on_unreadable: str = "warn",
) -> tuple[dict[str, FileEntry], PutReport]:
    """Chunk individual files into the store, keyed by container-relative path."""
    entries: dict[str, FileEntry] = {}
    report = PutReport()
    for rel, path in sorted(sources.items()):
        entry = _store_one(store, rel, Path(path), report, on_unreadable)
        if entry is not None:
            entries[rel] = entry
    return entries, report


def put_container(
    store: ChunkStore,
    root_dir: str | Path,
    provenance: dict,
    sciunit: str,
    seq: int,
    command: str | None = None,
    created: str = "",
    on_unreadable: str = "abort",
    meta: dict | None = None,
) -> tuple[ContainerManifest, PutReport]:
    """Store a directory tree as a container with the given provenance document."""
    entries, report = put_tree(store, root_dir, on_unreadable=on_unreadable)
    manifest = ContainerManifest(
        sciunit=sciunit,
        seq=seq,
        created=created,
        command=command,
        files=entries,
        provenance=provenance,
        meta=dict(meta or {}),
    )
    if report.skipped:
        manifest.meta["skipped_unreadable"] = report.skipped
    return manifest, report


@dataclass
class MaterializeReport:
    files_written: int = 0
    bytes_written: int = 0
    links_created: int = 0


def materialize(
    store: ChunkStore,
    manifest: ContainerManifest,
    dest: str | Path,
    only_paths: set[str] | None = None,
) -> MaterializeReport:
    """Reconstruct manifest files under dest, verifying every chunk digest.

    ``only_paths`` (container-relative) restricts materialization, e.g. to a
    partial-repeat plan's staged files.
    """
    dest = Path(dest)
    report = MaterializeReport()
    for rel, entry in sorted(manifest.files.items()):
        if only_paths is not None and rel not in only_paths:
            continue
        target = dest / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        if entry.link_target is not None:
            if target.is_symlink() or target.exists():
                target.unlink()
            target.symlink_to(entry.link_target)
            report.links_created += 1
            continue
        with open(target, "wb") as handle:
            for chunk_hash in entry.chunks:
                handle.write(store.get(chunk_hash, context=f"file {rel}"))
        os.chmod(target, stat.S_IMODE(entry.mode))
        written = target.stat().st_size
        if written != entry.size:
            raise StoreError(f"file {rel}: reconstructed {written} bytes, expected {entry.size}")
        report.files_written += 1
        report.bytes_written += written
    return report


def gc(store: ChunkStore, manifests: list[ContainerManifest]) -> list[str]:
    """Delete chunks no manifest references; returns the removed hashes."""
    referenced: set[str] = set()
    for manifest in manifests:
        referenced |= manifest.chunk_hashes()
    removed = [h for h in store.iter_hashes() if h not in referenced]
    for chunk_hash in removed:
        store.delete(chunk_hash)
    return removed

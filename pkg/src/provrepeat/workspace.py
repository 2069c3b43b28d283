"""On-disk workspace: named sciunits, their container registry, and the store.

Layout under the workspace root (``$PROVREPEAT_HOME`` or ``~/.provrepeat``)::

    config.json                     current sciunit pointer
    store/objects/aa/bb/<hash>      chunk payloads
    sciunits/<name>/meta.json
    sciunits/<name>/containers/<seq>.json

Container sequence numbers increase strictly per sciunit.  Mutating commands
take one advisory lock per workspace.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .store import ChunkStore, ContainerManifest

ENV_HOME = "PROVREPEAT_HOME"


class WorkspaceError(RuntimeError):
    pass


def default_root() -> Path:
    env = os.environ.get(ENV_HOME)
    if env:
        return Path(env)
    return Path.home() / ".provrepeat"


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Workspace:
    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root else default_root()
        self.sciunits_dir = self.root / "sciunits"
        self._store: ChunkStore | None = None

    # -- infrastructure --------------------------------------------------------

    def ensure(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.sciunits_dir.mkdir(exist_ok=True)

    @property
    def store(self) -> ChunkStore:
        if self._store is None:
            self.ensure()
            self._store = ChunkStore(self.root / "store")
        return self._store

    def lock(self) -> FileLock:
        self.ensure()
        return FileLock(self.root / "workspace.lock")

    def _config(self) -> dict:
        path = self.root / "config.json"
        if path.exists():
            return json.loads(path.read_text())
        return {}

    def _save_config(self, config: dict) -> None:
        (self.root / "config.json").write_text(json.dumps(config, indent=2) + "\n")

    # -- sciunits ---------------------------------------------------------------

    def create(self, name: str) -> None:
        self.ensure()
        target = self.sciunits_dir / name
        if target.exists():
            raise WorkspaceError(f"sciunit {name!r} already exists")
        (target / "containers").mkdir(parents=True)
        (target / "meta.json").write_text(
            json.dumps({"name": name, "created": now_iso()}, indent=2) + "\n"
        )
        config = self._config()
        config["current"] = name
        self._save_config(config)

    def sciunits(self) -> list[str]:
        if not self.sciunits_dir.exists():
            return []
        return sorted(p.name for p in self.sciunits_dir.iterdir() if p.is_dir())

    def current(self) -> str:
        name = self._config().get("current")
        if not name:
            raise WorkspaceError("no sciunit selected; run 'provrepeat create <name>' first")
        if not (self.sciunits_dir / name).is_dir():
            raise WorkspaceError(f"current sciunit {name!r} is missing from the workspace")
        return name

    def select(self, name: str) -> None:
        if not (self.sciunits_dir / name).is_dir():
            raise WorkspaceError(f"unknown sciunit {name!r}")
        config = self._config()
        config["current"] = name
        self._save_config(config)

    # -- containers --------------------------------------------------------------

    def containers_dir(self, name: str) -> Path:
        return self.sciunits_dir / name / "containers"

    def container_seqs(self, name: str) -> list[int]:
        directory = self.containers_dir(name)
        if not directory.exists():
            raise WorkspaceError(f"unknown sciunit {name!r}")
        return sorted(int(p.stem) for p in directory.glob("*.json"))

    def next_seq(self, name: str) -> int:
        seqs = self.container_seqs(name)
        return (seqs[-1] + 1) if seqs else 1

    def save_manifest(self, manifest: ContainerManifest) -> Path:
        path = self.containers_dir(manifest.sciunit) / f"{manifest.seq}.json"
        path.write_bytes(manifest.dumps())
        return path

    def load_manifest(self, name: str, seq: int) -> ContainerManifest:
        path = self.containers_dir(name) / f"{seq}.json"
        if not path.exists():
            raise WorkspaceError(f"sciunit {name!r} has no container {seq}")
        return ContainerManifest.loads(path.read_bytes())

    def all_manifests(self) -> list[ContainerManifest]:
        manifests = []
        for name in self.sciunits():
            for seq in self.container_seqs(name):
                manifests.append(self.load_manifest(name, seq))
        return manifests

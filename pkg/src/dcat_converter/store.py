"""Directory-per-endpoint dataset store with atomically published snapshots.

Layout under the store root::

    <endpoint>/CURRENT              name of the live snapshot
    <endpoint>/snapshots/000003/    index.json, datasets/*.ttl, raw.jsonl, ...
    <endpoint>/.lock                held by the single writer

A writer stages a copy of the live snapshot (hard links, so unchanged files
cost nothing), edits it, then renames it into place and swaps ``CURRENT``.
Readers only ever follow ``CURRENT``, so they see either the old or the
new snapshot, never a mix.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
import shutil
import uuid
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional
from urllib.parse import quote

from .errors import HarvestLocked, StateError
from .oaipmh import atomic_write
from .rdf import Graph, parse_turtle

log = logging.getLogger(__name__)

KEEP_SNAPSHOTS = 3


def dataset_file(uri: str) -> str:
    return "datasets/" + hashlib.sha1(uri.encode("utf-8")).hexdigest()[:20] + ".ttl"


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


def _empty_index(endpoint_id: str) -> dict:
    return {"endpoint": endpoint_id, "snapshot": None, "runs": 0, "records": {},
            "datasets": {}, "tombstones": {}, "harvest_state": None, "last_run": None}


class Snapshot:
    """Read-only view of one published snapshot."""

    def __init__(self, endpoint_id: str, name: str, path: Path):
        self.endpoint_id = endpoint_id
        self.name = name
        self.path = path
        try:
            self.index = json.loads((path / "index.json").read_text("utf-8"))
        except (OSError, ValueError) as exc:
            raise StateError(f"snapshot {path} is unreadable: {exc}") from exc

    @property
    def dataset_uris(self) -> list[str]:
        return sorted(self.index["datasets"])

    def has_dataset(self, uri: str) -> bool:
        return uri in self.index["datasets"]

    def read(self, name: str) -> str:
        return (self.path / name).read_text("utf-8")

    def dataset_turtle(self, uri: str) -> str:
        return self.read(self.index["datasets"][uri]["file"])

    def dataset_graph(self, uri: str) -> Graph:
        entry = self.index["datasets"][uri]
        # scope blank nodes per file so merged graphs keep them apart
        return parse_turtle(self.read(entry["file"]), bnode_scope=Path(entry["file"]).stem + "-")

    def raw_records(self) -> list[dict]:
        path = self.path / "raw.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text("utf-8").splitlines() if line.strip()]


class StagedSnapshot:
    """A private, writable copy of the live snapshot."""

    def __init__(self, store: "DatasetStore", endpoint_id: str, path: Path, base: Optional[Snapshot]):
        self.store = store
        self.endpoint_id = endpoint_id
        self.path = path
        self.base = base
        self.index = json.loads(json.dumps(base.index)) if base else _empty_index(endpoint_id)

    def write(self, name: str, text: str) -> None:
        path = self.path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        # break any hard link to the previous snapshot before writing
        if path.exists():
            path.unlink()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())

    def remove(self, name: str) -> None:
        path = self.path / name
        if path.exists():
            path.unlink()

    def put_dataset(self, uri: str, identifier: str, datestamp: str, turtle: str) -> None:
        name = dataset_file(uri)
        old = self.index["datasets"].get(uri)
        unchanged = old and (self.path / name).exists() and (self.path / name).read_text("utf-8") == turtle
        if not unchanged:
            self.write(name, turtle)
        self.index["datasets"][uri] = {"identifier": identifier, "datestamp": datestamp, "file": name}
        self.index["tombstones"].pop(uri, None)

    def drop_dataset(self, uri: str) -> bool:
        entry = self.index["datasets"].pop(uri, None)
        if entry:
            self.remove(entry["file"])
        return entry is not None

    def tombstone(self, uri: str, identifier: str, datestamp: str) -> None:
        self.drop_dataset(uri)
        self.index["tombstones"][uri] = {"identifier": identifier, "datestamp": datestamp}

    def dataset_graph(self, uri: str) -> Graph:
        entry = self.index["datasets"][uri]
        return parse_turtle((self.path / entry["file"]).read_text("utf-8"),
                            bnode_scope=Path(entry["file"]).stem + "-")

    def discard(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)


class DatasetStore:
    def __init__(self, root):
        self.root = Path(root)

    def endpoint_dir(self, endpoint_id: str) -> Path:
        return self.root / quote(endpoint_id, safe="")

    def current_name(self, endpoint_id: str) -> Optional[str]:
        try:
            name = (self.endpoint_dir(endpoint_id) / "CURRENT").read_text("utf-8").strip()
        except FileNotFoundError:
            return None
        return name or None

    def current(self, endpoint_id: str) -> Optional[Snapshot]:
        name = self.current_name(endpoint_id)
        if name is None:
            return None
        return Snapshot(endpoint_id, name, self.endpoint_dir(endpoint_id) / "snapshots" / name)

    def snapshots(self, endpoint_id: str) -> list[str]:
        d = self.endpoint_dir(endpoint_id) / "snapshots"
        return sorted(p.name for p in d.iterdir() if p.is_dir()) if d.exists() else []

    @contextmanager
    def lock(self, endpoint_id: str) -> Iterator[None]:
        d = self.endpoint_dir(endpoint_id)
        d.mkdir(parents=True, exist_ok=True)
        fh = open(d / ".lock", "a+")
        try:
            try:
                fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError as exc:
                raise HarvestLocked(f"endpoint {endpoint_id!r} is already being harvested") from exc
            yield
        finally:
            fh.close()

    def begin(self, endpoint_id: str) -> StagedSnapshot:
        """Start a new snapshot; the caller must hold the endpoint lock."""
        d = self.endpoint_dir(endpoint_id)
        for stale in d.glob(".staging-*"):
            log.warning("removing abandoned staging directory %s", stale)
            shutil.rmtree(stale, ignore_errors=True)
        staging = d / f".staging-{uuid.uuid4().hex}"
        base = self.current(endpoint_id)
        if base is not None:
            shutil.copytree(base.path, staging, copy_function=os.link)
        else:
            staging.mkdir(parents=True)
        return StagedSnapshot(self, endpoint_id, staging, base)

    def publish(self, staged: StagedSnapshot, checkpoint=lambda point: None) -> Snapshot:
        d = self.endpoint_dir(staged.endpoint_id)
        existing = self.snapshots(staged.endpoint_id)
        name = f"{int(existing[-1]) + 1 if existing else 1:06d}"
        staged.index["snapshot"] = name
        staged.write("index.json", json.dumps(staged.index, indent=1, sort_keys=True, ensure_ascii=False) + "\n")
        _fsync_dir(staged.path)
        checkpoint("before-publish")
        target = d / "snapshots" / name
        target.parent.mkdir(parents=True, exist_ok=True)
        os.rename(staged.path, target)
        _fsync_dir(target.parent)
        checkpoint("before-current")
        atomic_write(d / "CURRENT", name + "\n")
        self.prune(staged.endpoint_id)
        return Snapshot(staged.endpoint_id, name, target)

    def prune(self, endpoint_id: str, keep: int = KEEP_SNAPSHOTS) -> None:
        current = self.current_name(endpoint_id)
        names = self.snapshots(endpoint_id)
        for name in names[:-keep]:
            if name != current:
                shutil.rmtree(self.endpoint_dir(endpoint_id) / "snapshots" / name, ignore_errors=True)

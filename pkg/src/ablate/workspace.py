"""Content-addressed base snapshots and disposable per-candidate workspaces.

A snapshot copies the base tree into ``<root>/snapshots/<snapshot_id>/tree``
next to a JSON ``manifest``. Workspaces are plain file copies of that stored
tree (never hard links, so in-place writes cannot leak back), which keeps the
base directory itself out of the loop once the snapshot exists.
"""

from __future__ import annotations

import difflib
import fnmatch
import hashlib
import json
import logging
import re
import shutil
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, Sequence

from ablate.space import CandidateSpec, ComponentSpace

log = logging.getLogger(__name__)

METRICS_FILE = "ablate_metrics.json"


class WorkspaceError(RuntimeError):
    pass


class WorkspaceStateError(WorkspaceError):
    pass


class WorkspaceCollisionError(WorkspaceError):
    pass


class PatchError(WorkspaceError):
    pass


class AnchorNotFoundError(PatchError):
    pass


class PatchConflictError(PatchError):
    pass


class WsState(IntEnum):
    CREATED = 0
    MUTATED = 1
    EXECUTED = 2
    HARVESTED = 3
    DESTROYED = 4


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(root: Path) -> dict[str, str]:
    """Relative posix path -> sha256 for every regular file under ``root``."""
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): file_digest(p)
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    digest: str
    size: int


@dataclass(frozen=True)
class BaseSnapshot:
    snapshot_id: str
    root_manifest: tuple[ManifestEntry, ...]
    store_path: Path

    @property
    def tree(self) -> Path:
        return self.store_path / "tree"

    def digests(self) -> dict[str, str]:
        return {e.path: e.digest for e in self.root_manifest}


@dataclass(frozen=True)
class PatchOp:
    """One declarative edit.

    ``set_key`` rewrites ``key = value`` / ``key: value`` lines (quoted JSON
    keys included); with ``scale`` set, the current numeric value is
    multiplied instead. ``replace_anchored`` swaps the single occurrence of
    ``anchor``. ``delete_lines`` drops every line containing ``anchor``.
    """

    op: str
    file: str
    key: str | None = None
    value: Any = None
    scale: float | None = None
    anchor: str | None = None
    replacement: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "PatchOp":
        if data.get("op") not in ("set_key", "replace_anchored", "delete_lines"):
            raise PatchError(f"unknown patch op {data.get('op')!r}")
        scale = data.get("scale")
        return cls(
            op=data["op"],
            file=data["file"],
            key=data.get("key"),
            value=data.get("value"),
            scale=float(scale) if scale is not None else None,
            anchor=data.get("anchor"),
            replacement=data.get("replacement"),
        )


def _fill(template: Any, values: dict[str, Any]) -> Any:
    if isinstance(template, str):
        for name, val in values.items():
            token = "{" + name + "}"
            if template == token:
                return val
            template = template.replace(token, str(val))
        return template
    if isinstance(template, list):
        return [_fill(t, values) for t in template]
    if isinstance(template, dict):
        return {k: _fill(v, values) for k, v in template.items()}
    return template


def render_patch(space: ComponentSpace, candidate: CandidateSpec) -> list[PatchOp]:
    """Expand each target component's patch templates for its mutation.

    Templates may reference ``{factor}``, ``{alternative}``, ``{value}`` and
    ``{param}``. A target without a template for its mutation kind
    contributes no edits.
    """
    ops: list[PatchOp] = []
    for target, mutation in zip(candidate.targets, candidate.mutations):
        comp = space.component(target)
        templates = comp.patches.get(mutation.kind, [])
        values = {
            "factor": mutation.argument,
            "alternative": mutation.argument,
            "value": mutation.argument,
            "param": mutation.param,
            "component": comp.id,
        }
        ops.extend(PatchOp.from_dict(_fill(t, values)) for t in templates)
    return ops


_NUMBER = re.compile(r"^-?\d+(\.\d*)?([eE][-+]?\d+)?$")


def _format_value(value: Any, json_style: bool) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if json_style:
        return json.dumps(value)
    return str(value)


def _key_pattern(key: str) -> re.Pattern:
    return re.compile(
        r"^(?P<head>\s*(?P<q>[\"']?)" + re.escape(key) + r"(?P=q)\s*[:=]\s*)"
        r"(?P<value>.*?)(?P<tail>\s*,?\s*(#.*)?)$"
    )


def _set_key(text: str, op: PatchOp) -> str:
    lines = text.splitlines(keepends=True)
    pattern = _key_pattern(op.key or "")
    hits = [i for i, line in enumerate(lines) if pattern.match(line.rstrip("\r\n"))]
    if not hits:
        raise AnchorNotFoundError(f"key {op.key!r} not found in {op.file}")
    if len(hits) > 1:
        raise PatchConflictError(f"key {op.key!r} is ambiguous in {op.file} ({len(hits)} matches)")
    i = hits[0]
    line = lines[i]
    ending = line[len(line.rstrip("\r\n")) :]
    m = pattern.match(line.rstrip("\r\n"))
    json_style = op.file.endswith(".json") or m.group("q") == '"'
    if op.scale is not None:
        raw = m.group("value").strip().strip("\"'")
        if not _NUMBER.match(raw):
            raise PatchConflictError(f"cannot scale non-numeric value {raw!r} of {op.key!r}")
        scaled = float(raw) * op.scale
        is_int = re.fullmatch(r"-?\d+", raw) is not None
        new_value = _format_value(int(scaled) if is_int and scaled.is_integer() else scaled, json_style)
    else:
        new_value = _format_value(op.value, json_style)
    lines[i] = m.group("head") + new_value + m.group("tail") + ending
    return "".join(lines)


def _apply_op(text: str, op: PatchOp) -> str:
    if op.op == "set_key":
        return _set_key(text, op)
    if op.op == "replace_anchored":
        count = text.count(op.anchor or "")
        if not op.anchor or count == 0:
            raise AnchorNotFoundError(f"anchor {op.anchor!r} not found in {op.file}")
        if count > 1:
            raise PatchConflictError(f"anchor {op.anchor!r} occurs {count} times in {op.file}")
        return text.replace(op.anchor, op.replacement or "", 1)
    if op.op == "delete_lines":
        lines = text.splitlines(keepends=True)
        kept = [line for line in lines if not op.anchor or op.anchor not in line]
        if not op.anchor or len(kept) == len(lines):
            raise AnchorNotFoundError(f"anchor {op.anchor!r} not found in {op.file}")
        return "".join(kept)
    raise PatchError(f"unknown patch op {op.op!r}")


@dataclass
class Workspace:
    workspace_id: str
    candidate_id: str
    path: Path
    snapshot: BaseSnapshot
    state: WsState = WsState.CREATED
    applied_patch: str = ""
    logs: dict[str, str] = field(default_factory=dict)


@dataclass
class ArtifactBundle:
    path: Path
    artifacts: list[str]
    diff_path: Path
    log_paths: list[str]
    warnings: list[str] = field(default_factory=list)


class WorkspaceManager:
    """Owns the snapshot store and the live workspaces under ``root``."""

    def __init__(self, root: Path | str, workspace_root: Path | str | None = None):
        self.root = Path(root).resolve()
        self.snapshot_root = self.root / "snapshots"
        self.workspace_root = Path(workspace_root).resolve() if workspace_root else self.root / "workspaces"
        self._lock = threading.Lock()
        self._live: dict[Path, str] = {}

    def snapshot(self, base_dir: Path | str) -> BaseSnapshot:
        base = Path(base_dir)
        if not base.is_dir():
            raise WorkspaceError(f"base directory {base} does not exist or is not a directory")
        entries = []
        for p in sorted(base.rglob("*")):
            if p.is_file():
                entries.append(ManifestEntry(p.relative_to(base).as_posix(), file_digest(p), p.stat().st_size))
        if not entries:
            log.warning("snapshot of empty directory %s", base)
        listing = json.dumps([[e.path, e.digest, e.size] for e in entries], separators=(",", ":"))
        snapshot_id = hashlib.sha256(listing.encode()).hexdigest()[:16]
        store = self.snapshot_root / snapshot_id
        with self._lock:
            if not (store / "manifest").exists():
                tmp = self.snapshot_root / f".{snapshot_id}.tmp"
                shutil.rmtree(tmp, ignore_errors=True)
                (tmp / "tree").mkdir(parents=True)
                for e in entries:
                    dst = tmp / "tree" / e.path
                    dst.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copy2(base / e.path, dst)
                if tree_digests(tmp / "tree") != {e.path: e.digest for e in entries}:
                    shutil.rmtree(tmp, ignore_errors=True)
                    raise WorkspaceError(f"base directory {base} changed while being snapshotted")
                (tmp / "manifest").write_text(listing + "\n")
                tmp.rename(store)
        return BaseSnapshot(snapshot_id, tuple(entries), store)

    def create_workspace(
        self, snapshot: BaseSnapshot, candidate: CandidateSpec | None, workspace_id: str | None = None
    ) -> Workspace:
        cid = candidate.candidate_id if candidate is not None else "baseline"
        wid = workspace_id or cid
        path = self.workspace_root / wid
        with self._lock:
            if path in self._live or path.exists():
                raise WorkspaceCollisionError(f"workspace path {path} already in use")
            self._live[path] = wid
        try:
            shutil.copytree(snapshot.tree, path)
        except OSError:
            with self._lock:
                self._live.pop(path, None)
            shutil.rmtree(path, ignore_errors=True)
            raise
        return Workspace(wid, cid, path, snapshot)

    def apply_mutation(self, ws: Workspace, patch: Sequence[PatchOp]) -> Workspace:
        """Apply every op or none of them."""
        self._require(ws, WsState.CREATED, "apply_mutation")
        originals: dict[str, str] = {}
        edited: dict[str, str] = {}
        for op in patch:
            target = ws.path / op.file
            if op.file not in edited:
                if not target.is_file():
                    raise AnchorNotFoundError(f"patch target {op.file} does not exist")
                originals[op.file] = target.read_text()
                edited[op.file] = originals[op.file]
            edited[op.file] = _apply_op(edited[op.file], op)
        diff_parts = []
        for name in sorted(edited):
            diff_parts.extend(
                difflib.unified_diff(
                    originals[name].splitlines(keepends=True),
                    edited[name].splitlines(keepends=True),
                    fromfile=f"a/{name}",
                    tofile=f"b/{name}",
                )
            )
        for name, text in edited.items():
            (ws.path / name).write_text(text)
        ws.applied_patch = "".join(diff_parts)
        ws.state = WsState.MUTATED
        return ws

    def mark_executed(self, ws: Workspace) -> Workspace:
        self._require(ws, WsState.MUTATED, "execute")
        ws.state = WsState.EXECUTED
        return ws

    def harvest(self, ws: Workspace, archive_dir: Path | str, artifact_globs: Iterable[str] = ()) -> ArtifactBundle:
        self._require(ws, WsState.EXECUTED, "harvest")
        dest = Path(archive_dir) / "candidates" / ws.candidate_id
        (dest / "artifacts").mkdir(parents=True, exist_ok=True)
        (dest / "logs").mkdir(exist_ok=True)
        diff_path = dest / "diff.patch"
        diff_path.write_text(ws.applied_patch)
        base = ws.snapshot.digests()
        artifacts = []
        warnings = []
        for rel, digest in tree_digests(ws.path).items():
            if any(fnmatch.fnmatch(rel, g) for g in artifact_globs):
                if base.get(rel) == digest:
                    continue
                out = dest / "artifacts" / rel
                out.parent.mkdir(parents=True, exist_ok=True)
                shutil.copy2(ws.path / rel, out)
                artifacts.append(rel)
        if not artifacts:
            warnings.append(f"no declared artifacts produced in workspace {ws.workspace_id}")
            log.warning(warnings[-1])
        log_paths = []
        for name, text in sorted(ws.logs.items()):
            (dest / "logs" / name).write_text(text)
            log_paths.append(name)
        ws.state = WsState.HARVESTED
        return ArtifactBundle(dest, artifacts, diff_path, log_paths, warnings)

    def destroy(self, ws: Workspace) -> None:
        """Remove the workspace directory; calling it again is a no-op."""
        if ws.state is WsState.DESTROYED:
            return
        ws.state = WsState.DESTROYED
        with self._lock:
            self._live.pop(ws.path, None)
        try:
            shutil.rmtree(ws.path)
        except FileNotFoundError:
            pass
        except OSError as exc:
            log.error("failed to remove workspace %s: %s", ws.path, exc)
            raise WorkspaceError(f"failed to remove workspace {ws.path}: {exc}") from exc

    @staticmethod
    def _require(ws: Workspace, state: WsState, action: str) -> None:
        if ws.state is not state:
            raise WorkspaceStateError(f"cannot {action} workspace {ws.workspace_id} in state {ws.state.name}")

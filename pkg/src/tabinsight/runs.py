"""Run directories: stage files, the manifest and the single-writer lock."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError, UpstreamMissingError
from .io import append_jsonl, read_jsonl, write_json

STAGE_FILES = {
    "corpus": "corpus.jsonl",
    "mined": "mined.jsonl",
    "verified": "verified.jsonl",
    "scored": "scored.jsonl",
    "pruned": "pruned.jsonl",
    "train_qg": "train_qg.jsonl",
    "train_ig": "train_ig.jsonl",
    "train_mixed": "train_mixed.jsonl",
    "inference": "inference.jsonl",
    "report": "report.json",
}


class RunLockedError(ConfigurationError):
    pass


@dataclass
class StageEntry:
    stage: str
    input: str
    output: str
    records_in: int = 0
    records_out: int = 0
    drops: int = 0
    quarantined: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def reconciles(self) -> bool:
        return self.records_out == self.records_in - self.drops - self.quarantined


@dataclass
class RunManifest:
    run_id: str
    config_hash: str = ""
    seed: int = 0
    stages: list = field(default_factory=list)

    def record(self, entry: StageEntry) -> None:
        """Add a stage entry; a rerun replaces the earlier entry in place."""
        if not entry.reconciles:
            raise AssertionError(f"stage {entry.stage} counts do not reconcile: {entry}")
        for i, old in enumerate(self.stages):
            if old.stage == entry.stage:
                self.stages[i] = entry
                return
        self.stages.append(entry)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stages": [asdict(s) for s in self.stages],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(
            obj["run_id"],
            obj.get("config_hash", ""),
            obj.get("seed", 0),
            [StageEntry(**s) for s in obj.get("stages", [])],
        )


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class RunDirectory:
    def __init__(self, path, run_id: str | None = None):
        self.path = Path(path)
        self.run_id = run_id or self.path.name
        self._lock_fd = None

    def file(self, name) -> Path:
        """Stage name -> file in the run; anything else is taken as a path."""
        if isinstance(name, str) and name in STAGE_FILES:
            return self.path / STAGE_FILES[name]
        return Path(name)

    def read_stage(self, name) -> list[dict]:
        p = self.file(name)
        if not p.exists():
            raise UpstreamMissingError(str(p))
        return read_jsonl(p)

    @property
    def quarantine_path(self) -> Path:
        return self.path / "quarantine.jsonl"

    def quarantine(self, stage: str, table_id: str, exc: BaseException) -> None:
        append_jsonl(
            self.quarantine_path,
            {"stage": stage, "table_id": table_id, "error": type(exc).__name__, "message": str(exc)},
        )

    # manifest
    @property
    def manifest_path(self) -> Path:
        return self.path / "manifest.json"

    def load_manifest(self) -> RunManifest:
        if self.manifest_path.exists():
            return RunManifest.from_json(json.loads(self.manifest_path.read_text(encoding="utf-8")))
        return RunManifest(self.run_id)

    def save_manifest(self, manifest: RunManifest) -> None:
        write_json(self.manifest_path, manifest.to_json())

    # lock
    @property
    def lock_path(self) -> Path:
        return self.path / ".lock"

    def acquire(self) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                try:
                    holder = int(self.lock_path.read_text().strip() or 0)
                except (OSError, ValueError):
                    holder = 0
                if holder and _pid_alive(holder):
                    raise RunLockedError(f"run directory {self.path} is locked by process {holder}")
                self.lock_path.unlink(missing_ok=True)  # stale
                continue
            os.write(fd, str(os.getpid()).encode())
            self._lock_fd = fd
            return
        raise RunLockedError(f"could not lock {self.path}")

    def release(self) -> None:
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            self.lock_path.unlink(missing_ok=True)

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()
        return False

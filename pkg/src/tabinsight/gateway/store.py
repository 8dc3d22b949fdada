"""Write-through JSONL response cache and request log."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path


class RequestCache:
    """Responses keyed by request fingerprint.

    Records are ``{fingerprint, role, completion}``; with a ``path`` every new
    entry is appended and flushed immediately so an interrupted run keeps all
    completed requests.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, object] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # torn final line from an interrupted write
                        continue
                    self._entries[rec["fingerprint"]] = rec["completion"]

    def __contains__(self, fingerprint):
        with self._lock:
            return fingerprint in self._entries

    def __len__(self):
        with self._lock:
            return len(self._entries)

    def get(self, fingerprint):
        with self._lock:
            return self._entries.get(fingerprint)

    def put(self, fingerprint: str, role: str, completion) -> None:
        with self._lock:
            if fingerprint in self._entries:
                return
            self._entries[fingerprint] = completion
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {"fingerprint": fingerprint, "role": role, "completion": completion},
                            ensure_ascii=False,
                        )
                        + "\n"
                    )


class RequestLog:
    """Append-only record of every exchange, in memory and optionally on disk."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def append(self, entry: dict) -> None:
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def count(self, role=None, source=None, kind=None) -> int:
        with self._lock:
            return sum(
                1
                for e in self.entries
                if (role is None or e["role"] == role)
                and (source is None or e["source"] == source)
                and (kind is None or e["kind"] == kind)
            )

    @property
    def network_calls(self) -> int:
        with self._lock:
            return sum(1 for e in self.entries if e.get("network"))

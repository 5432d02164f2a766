"""
JSONL event trace.

Every record has ``t`` (virtual time in microseconds, or the host operation
index for host-side invalidations) and ``kind``; the remaining keys depend on
the kind and are documented in docs/formats.md. Keys with a None value are
omitted.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Optional, TextIO

from api.common.utils import dumps_line


class TraceRecorder:
    """
    Collects trace records in memory, streams them to a file, or both.

    Args:
        path: File to stream records to, or None
        keep: Keep records in memory (``events``)
        context: Extra keys added to every record, e.g. ``{"phase": 2}``
    """

    def __init__(self, path: Optional[Path] = None, *, keep: bool = True,
                 context: Optional[dict[str, Any]] = None):
        self.path = path
        self.keep = keep
        self.context = dict(context or {})
        self.events: list[dict[str, Any]] = []
        self._handle: Optional[TextIO] = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = path.open("w", encoding="utf-8", newline="\n")

    @classmethod
    def discard(cls) -> 'TraceRecorder':
        """A recorder that drops every record."""
        return cls(keep=False)

    @property
    def enabled(self) -> bool:
        return self.keep or self._handle is not None

    def emit(self, t: float, kind: str, **fields: Any) -> None:
        if not self.enabled:
            return
        record: dict[str, Any] = {"t": round(float(t), 3), "kind": kind}
        record.update(self.context)
        for key, value in fields.items():
            if value is not None:
                record[key] = value
        if self.keep:
            self.events.append(record)
        if self._handle is not None:
            self._handle.write(dumps_line(record) + "\n")

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> 'TraceRecorder':
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_trace(path: Path) -> Iterable[dict[str, Any]]:
    """Yield the records of a JSONL trace file."""
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                yield json.loads(line)

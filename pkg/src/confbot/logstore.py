"""Append-only conversation logging and the analytics computed from it.

Records go to newline-delimited JSON files, one per UTC day.  Appends are
flushed before the turn's responses are sent; a storage failure never
blocks response delivery (it is surfaced through the health endpoint
instead).
"""

from __future__ import annotations

import json
import logging
import threading
from collections import Counter
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

__all__ = [
    "LogRecord",
    "LogStoreError",
    "LogStore",
    "read_log_dir",
    "conversation_length_histogram",
    "turns_per_skill",
]

_FILE_PREFIX = "conversations-"


class LogStoreError(ValueError):
    """Raised for invalid or duplicate records."""


@dataclass(frozen=True)
class LogRecord:
    session_id: str
    turn: int
    seq: int
    timestamp: datetime
    direction: str  # "user" | "bot"
    text: str
    intent: str | None = None
    skill: str | None = None
    channel_kind: str = "rest"

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.session_id, self.direction, self.turn, self.seq)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn": self.turn,
            "seq": self.seq,
            "timestamp": self.timestamp.astimezone(timezone.utc).isoformat(),
            "direction": self.direction,
            "text": self.text,
            "intent": self.intent,
            "skill": self.skill,
            "channel_kind": self.channel_kind,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LogRecord":
        return cls(
            session_id=doc["session_id"],
            turn=int(doc["turn"]),
            seq=int(doc["seq"]),
            timestamp=datetime.fromisoformat(doc["timestamp"]),
            direction=doc["direction"],
            text=doc["text"],
            intent=doc.get("intent"),
            skill=doc.get("skill"),
            channel_kind=doc.get("channel_kind", "rest"),
        )


class LogStore:
    """Durable append-only record store over one directory of NDJSON files."""

    def __init__(self, log_dir: str | Path):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: list[LogRecord] = []
        self._seen: set[tuple[str, str, int, int]] = set()
        self.last_error: str | None = None
        for record in read_log_dir(self.log_dir):
            if record.key not in self._seen:
                self._seen.add(record.key)
                self._records.append(record)

    def append(self, record: LogRecord) -> None:
        """Validate, register, and flush one record.

        Duplicate keys are rejected; disk failures are recorded on
        ``last_error`` but do not raise (availability over audit).
        """
        if record.direction not in ("user", "bot"):
            raise LogStoreError(f"invalid direction: {record.direction!r}")
        with self._lock:
            if record.key in self._seen:
                raise LogStoreError(f"duplicate log record key: {record.key}")
            self._seen.add(record.key)
            self._records.append(record)
            try:
                day = record.timestamp.astimezone(timezone.utc).strftime("%Y-%m-%d")
                path = self.log_dir / f"{_FILE_PREFIX}{day}.ndjson"
                with path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
                    fh.flush()
                self.last_error = None
            except OSError as exc:
                self.last_error = str(exc)
                logger.error("log append failed: %s", exc)

    def records(self, session_id: str | None = None) -> list[LogRecord]:
        with self._lock:
            if session_id is None:
                return list(self._records)
            return [r for r in self._records if r.session_id == session_id]


def read_log_dir(log_dir: str | Path) -> list[LogRecord]:
    """Load every record under a log directory, deduplicating by key."""
    records: list[LogRecord] = []
    seen: set[tuple[str, str, int, int]] = set()
    for path in sorted(Path(log_dir).glob(f"{_FILE_PREFIX}*.ndjson")):
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = LogRecord.from_json(json.loads(line))
                if record.key not in seen:
                    seen.add(record.key)
                    records.append(record)
    records.sort(key=lambda r: (r.session_id, r.turn, r.seq, r.direction))
    return records


def conversation_length_histogram(records: Iterable[LogRecord]) -> dict[int, int]:
    """Histogram of conversation lengths, a length being user turns per session."""
    per_session: Counter[str] = Counter()
    for record in records:
        if record.direction == "user":
            per_session[record.session_id] += 1
    return dict(Counter(per_session.values()))


def turns_per_skill(records: Iterable[LogRecord]) -> dict[str, int]:
    """Bot-turn counts grouped by skill; unattributed records count as core."""
    counts: Counter[str] = Counter()
    for record in records:
        if record.direction == "bot":
            counts[record.skill or "core"] += 1
    return dict(counts)

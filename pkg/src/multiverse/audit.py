"""Append-only, hash-chained audit log.

Each record is one canonical JSON object per line (sorted keys, no
whitespace, ASCII only).  ``hash`` is the SHA-256 of the record serialized
without its ``hash`` field; ``prevHash`` links to the previous record and the
first record links to 32 zero bytes.  Verification recomputes every hash and
also requires each stored line to be byte-identical to its canonical form,
so any single-byte edit to the file is caught.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from multiverse.errors import StorageFailure

GENESIS_HASH = "00" * 32
ACTIONS = frozenset({
    "access-remote", "read-cached", "third-party-read", "establish", "revoke", "implement-template", "sweep",
})
LOG_FILENAME = "audit.log.ndjson"


def canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest(fields: dict[str, Any]) -> str:
    body = {k: v for k, v in fields.items() if k != "hash"}
    return hashlib.sha256(canonical(body).encode("ascii")).hexdigest()


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    timestamp: int
    actor: str
    action: str
    outcome: dict[str, Any]
    frame_version: int
    prev_hash: str
    hash: str
    tunnel: str | None = None
    purpose: str | None = None
    query: str | None = None
    resource_id: str | None = None
    report: dict[str, Any] | None = None
    detail: dict[str, Any] | None = None

    @property
    def ok(self) -> bool:
        return self.outcome.get("status") == "ok"

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq, "timestamp": self.timestamp, "actor": self.actor, "action": self.action,
            "tunnel": self.tunnel, "purpose": self.purpose, "query": self.query,
            "resourceId": self.resource_id, "outcome": self.outcome, "report": self.report,
            "detail": self.detail, "frameVersion": self.frame_version, "prevHash": self.prev_hash,
            "hash": self.hash,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AuditRecord:
        return cls(
            seq=data["seq"], timestamp=data["timestamp"], actor=data["actor"], action=data["action"],
            outcome=data["outcome"], frame_version=data["frameVersion"], prev_hash=data["prevHash"],
            hash=data["hash"], tunnel=data.get("tunnel"), purpose=data.get("purpose"),
            query=data.get("query"), resource_id=data.get("resourceId"), report=data.get("report"),
            detail=data.get("detail"),
        )

    def to_line(self) -> str:
        return canonical(self.to_dict())


def ok_outcome() -> dict[str, Any]:
    return {"status": "ok"}


def denied_outcome(reason: str, message: str = "") -> dict[str, Any]:
    return {"status": "denied", "reason": reason, "message": message}


@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    broken_at: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


class AuditLog:
    """In-memory chain, optionally mirrored line-by-line to a file.

    A record is written (and flushed) before :meth:`append` returns; if the
    write fails the record is dropped and :class:`StorageFailure` raised.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[AuditRecord] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._records = [AuditRecord.from_dict(json.loads(line))
                             for line in self.path.read_text(encoding="ascii").splitlines() if line]

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(list(self._records))

    @property
    def records(self) -> list[AuditRecord]:
        return list(self._records)

    def append(self, *, timestamp: int, actor: str, action: str, outcome: dict[str, Any],
               frame_version: int, tunnel: str | None = None, purpose: str | None = None,
               query: str | None = None, resource_id: str | None = None,
               report: dict[str, Any] | None = None, detail: dict[str, Any] | None = None) -> AuditRecord:
        if action not in ACTIONS:
            raise ValueError(f"unknown audit action {action!r}")
        with self._lock:
            prev = self._records[-1].hash if self._records else GENESIS_HASH
            fields = {
                "seq": len(self._records), "timestamp": timestamp, "actor": actor, "action": action,
                "tunnel": tunnel, "purpose": purpose, "query": query, "resourceId": resource_id,
                "outcome": outcome, "report": report, "detail": detail, "frameVersion": frame_version,
                "prevHash": prev,
            }
            # round-trip through JSON so the stored record matches what a reader parses
            fields = json.loads(canonical(fields))
            fields["hash"] = digest(fields)
            record = AuditRecord.from_dict(fields)
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="ascii") as fh:
                        fh.write(record.to_line() + "\n")
                        fh.flush()
                except OSError as exc:
                    raise StorageFailure(f"cannot append to audit log {self.path}: {exc}") from exc
            self._records.append(record)
            return record

    def verify(self) -> ChainVerdict:
        return verify_chain(self._records)

    def tail(self, n: int = 10) -> list[AuditRecord]:
        return self._records[-n:] if n > 0 else []


def verify_chain(records: Iterable[AuditRecord | dict[str, Any]], start_seq: int = 0,
                 prev_hash: str = GENESIS_HASH) -> ChainVerdict:
    """Check sequence numbers, links and hashes.

    ``start_seq`` and ``prev_hash`` anchor a slice of a longer log at a
    trusted checkpoint; the defaults verify a log from its first record.
    """
    prev = prev_hash
    for i, record in enumerate(records, start_seq):
        fields = record.to_dict() if isinstance(record, AuditRecord) else record
        if fields.get("seq") != i:
            return ChainVerdict(False, i, "sequence number out of order")
        if fields.get("prevHash") != prev:
            return ChainVerdict(False, i, "previous-hash link broken")
        if digest(fields) != fields.get("hash"):
            return ChainVerdict(False, i, "record hash mismatch")
        prev = fields["hash"]
    return ChainVerdict(True)


def verify_bytes(blob: bytes, start_seq: int = 0, prev_hash: str = GENESIS_HASH) -> ChainVerdict:
    """Verify a serialized log (or an anchored slice of one), byte for byte."""
    if not blob:
        return ChainVerdict(True)
    if not blob.endswith(b"\n"):
        return ChainVerdict(False, start_seq + blob.count(b"\n"), "log does not end with a newline")
    records = []
    for i, raw in enumerate(blob[:-1].split(b"\n"), start_seq):
        try:
            text = raw.decode("ascii")
            fields = json.loads(text)
        except (UnicodeDecodeError, json.JSONDecodeError):
            return ChainVerdict(False, i, "record is not valid JSON")
        if not isinstance(fields, dict) or canonical(fields) != text:
            return ChainVerdict(False, i, "record is not in canonical form")
        records.append(fields)
    return verify_chain(records, start_seq, prev_hash)


def verify_file(path: str | os.PathLike) -> ChainVerdict:
    path = Path(path)
    if not path.exists():
        return ChainVerdict(True)
    return verify_bytes(path.read_bytes())

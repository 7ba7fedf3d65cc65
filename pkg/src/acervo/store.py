"""Document lifecycle persistence: a single-file SQLite state machine.

Every document is identified by its content hash and moves through the
lifecycle graph below. Transitions use compare-and-set semantics so any
number of workers (threads or processes) can drive the pipeline against
one store; batch claims hand out time-limited leases that expire on
their own if a worker dies. All mutations are single transactions in
WAL mode, so a killed process never leaves a half-written record.

Lifecycle graph::

    NEW -> INCLUDED -> EMBEDDED -> INFERRED -> UPLOADED
              |            |           |
              +-> QUALITY_REJECTED     |
              +------------+-----------+--> FAILED   (attempts exhausted)

NEW -> FAILED also exists, reachable only through record_failure for a
record whose payload cannot even be located.
"""

from __future__ import annotations

import enum
import json
import sqlite3
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from .errors import IllegalEdge, NotFound, StaleState, StoreError
from .quality import QualityReport
from .validation import MetadataRecord


class PipelineState(str, enum.Enum):
    NEW = "NEW"
    INCLUDED = "INCLUDED"
    EMBEDDED = "EMBEDDED"
    INFERRED = "INFERRED"
    UPLOADED = "UPLOADED"
    QUALITY_REJECTED = "QUALITY_REJECTED"
    FAILED = "FAILED"


LEGAL_EDGES: frozenset[tuple[PipelineState, PipelineState]] = frozenset(
    {
        (PipelineState.NEW, PipelineState.INCLUDED),
        (PipelineState.INCLUDED, PipelineState.EMBEDDED),
        (PipelineState.INCLUDED, PipelineState.QUALITY_REJECTED),
        (PipelineState.EMBEDDED, PipelineState.INFERRED),
        (PipelineState.INFERRED, PipelineState.UPLOADED),
        (PipelineState.NEW, PipelineState.FAILED),
        (PipelineState.INCLUDED, PipelineState.FAILED),
        (PipelineState.EMBEDDED, PipelineState.FAILED),
        (PipelineState.INFERRED, PipelineState.FAILED),
    }
)

TERMINAL_STATES = frozenset(
    {PipelineState.UPLOADED, PipelineState.QUALITY_REJECTED, PipelineState.FAILED}
)

DEFAULT_LEASE_SECONDS = 600.0

_SCHEMA = """
CREATE TABLE IF NOT EXISTS documents (
    hash TEXT PRIMARY KEY,
    model_name TEXT NOT NULL,
    state TEXT NOT NULL,
    source_path TEXT NOT NULL,
    text_ref TEXT,
    quality TEXT,
    metadata TEXT,
    repository_item_id TEXT,
    attempts INTEGER NOT NULL DEFAULT 0,
    last_error TEXT,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL,
    lease_worker TEXT,
    lease_expiry REAL,
    hints TEXT NOT NULL DEFAULT '{}'
);
CREATE INDEX IF NOT EXISTS idx_documents_state ON documents(state);
CREATE TABLE IF NOT EXISTS transitions (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    hash TEXT NOT NULL,
    from_state TEXT NOT NULL,
    to_state TEXT NOT NULL,
    at TEXT NOT NULL,
    worker TEXT NOT NULL DEFAULT '',
    note TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS origins (
    hash TEXT NOT NULL,
    origin TEXT NOT NULL,
    source_path TEXT NOT NULL,
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


@dataclass(frozen=True)
class DocumentRecord:
    hash: str
    model_name: str
    state: PipelineState
    source_path: str
    text_ref: str | None
    quality: QualityReport | None
    metadata: MetadataRecord | None
    repository_item_id: str | None
    attempts: int
    last_error: str | None
    created_at: str
    updated_at: str
    lease_worker: str | None
    lease_expiry: float | None
    hints: dict[str, str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "hash": self.hash,
            "model_name": self.model_name,
            "state": self.state.value,
            "source_path": self.source_path,
            "text_ref": self.text_ref,
            "quality": self.quality.to_dict() if self.quality else None,
            "metadata": self.metadata.to_dict() if self.metadata else None,
            "repository_item_id": self.repository_item_id,
            "attempts": self.attempts,
            "last_error": self.last_error,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "lease_worker": self.lease_worker,
            "lease_expiry": self.lease_expiry,
            "hints": dict(self.hints),
        }


@dataclass(frozen=True)
class TransitionLogEntry:
    hash: str
    from_state: PipelineState
    to_state: PipelineState
    at: str
    worker: str
    note: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "hash": self.hash,
            "from_state": self.from_state.value,
            "to_state": self.to_state.value,
            "at": self.at,
            "worker": self.worker,
            "note": self.note,
        }


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _record_from_row(row: sqlite3.Row) -> DocumentRecord:
    return DocumentRecord(
        hash=row["hash"],
        model_name=row["model_name"],
        state=PipelineState(row["state"]),
        source_path=row["source_path"],
        text_ref=row["text_ref"],
        quality=QualityReport.from_dict(json.loads(row["quality"])) if row["quality"] else None,
        metadata=MetadataRecord.from_dict(json.loads(row["metadata"])) if row["metadata"] else None,
        repository_item_id=row["repository_item_id"],
        attempts=row["attempts"],
        last_error=row["last_error"],
        created_at=row["created_at"],
        updated_at=row["updated_at"],
        lease_worker=row["lease_worker"],
        lease_expiry=row["lease_expiry"],
        hints=json.loads(row["hints"]),
    )


class Store:
    """One SQLite file; connections are per-thread, writes serialize."""

    def __init__(self, path: str | Path):
        self._path = str(path)
        self._local = threading.local()
        try:
            conn = self._conn()
            conn.executescript(_SCHEMA)
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open store at {self._path}: {exc}") from exc

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(self._path, timeout=60.0, isolation_level=None)
            conn.row_factory = sqlite3.Row
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            conn.execute("PRAGMA busy_timeout=60000")
            self._local.conn = conn
        return conn

    @contextmanager
    def _txn(self) -> Iterator[sqlite3.Connection]:
        conn = self._conn()
        try:
            conn.execute("BEGIN IMMEDIATE")
        except sqlite3.Error as exc:
            raise StoreError(str(exc)) from exc
        try:
            yield conn
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        else:
            conn.execute("COMMIT")

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    # -- registration -------------------------------------------------

    def register_document(
        self,
        content_hash: str,
        *,
        model_name: str,
        source_path: str,
        origin: str,
        text_ref: str | None = None,
        hints: dict[str, str] | None = None,
    ) -> tuple[bool, DocumentRecord]:
        """Insert the record if the hash is unknown; idempotent otherwise.

        A duplicate only appends to the origin log; the existing record,
        including its state, is untouched.
        """
        now = _now_iso()
        with self._txn() as conn:
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            conn.execute(
                "INSERT INTO origins (hash, origin, source_path, at) VALUES (?, ?, ?, ?)",
                (content_hash, origin, source_path, now),
            )
            if row is not None:
                return False, _record_from_row(row)
            conn.execute(
                "INSERT INTO documents (hash, model_name, state, source_path, text_ref,"
                " attempts, created_at, updated_at, hints)"
                " VALUES (?, ?, ?, ?, ?, 0, ?, ?, ?)",
                (
                    content_hash,
                    model_name,
                    PipelineState.NEW.value,
                    source_path,
                    text_ref,
                    now,
                    now,
                    json.dumps(hints or {}, ensure_ascii=False),
                ),
            )
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            return True, _record_from_row(row)

    # -- reads ----------------------------------------------------------

    def get(self, content_hash: str) -> DocumentRecord | None:
        row = self._conn().execute(
            "SELECT * FROM documents WHERE hash = ?", (content_hash,)
        ).fetchone()
        return _record_from_row(row) if row else None

    def count(self) -> int:
        return self._conn().execute("SELECT COUNT(*) FROM documents").fetchone()[0]

    def stats(self) -> dict[PipelineState, int]:
        counts = {state: 0 for state in PipelineState}
        for row in self._conn().execute(
            "SELECT state, COUNT(*) AS n FROM documents GROUP BY state"
        ):
            counts[PipelineState(row["state"])] = row["n"]
        return counts

    def transition_log(self, content_hash: str | None = None) -> list[TransitionLogEntry]:
        query = "SELECT * FROM transitions"
        args: tuple = ()
        if content_hash is not None:
            query += " WHERE hash = ?"
            args = (content_hash,)
        query += " ORDER BY id"
        return [
            TransitionLogEntry(
                hash=row["hash"],
                from_state=PipelineState(row["from_state"]),
                to_state=PipelineState(row["to_state"]),
                at=row["at"],
                worker=row["worker"],
                note=row["note"],
            )
            for row in self._conn().execute(query, args)
        ]

    def origins(self, content_hash: str) -> list[dict[str, str]]:
        """Every registration event for this content, duplicates included."""
        return [
            {"origin": row["origin"], "source_path": row["source_path"], "at": row["at"]}
            for row in self._conn().execute(
                "SELECT origin, source_path, at FROM origins WHERE hash = ? ORDER BY rowid",
                (content_hash,),
            )
        ]

    def dump(self) -> Iterator[str]:
        """All records plus the transition log, one JSON object per line."""
        for row in self._conn().execute("SELECT * FROM documents ORDER BY created_at, hash"):
            yield json.dumps({"kind": "document", **_record_from_row(row).to_dict()}, ensure_ascii=False)
        for entry in self.transition_log():
            yield json.dumps({"kind": "transition", **entry.to_dict()}, ensure_ascii=False)

    # -- lifecycle -------------------------------------------------------

    def transition(
        self,
        content_hash: str,
        expected_from: PipelineState,
        to: PipelineState,
        *,
        worker: str = "",
        note: str = "",
        text_ref: str | None = None,
        quality: QualityReport | None = None,
        metadata: MetadataRecord | None = None,
        repository_item_id: str | None = None,
    ) -> DocumentRecord:
        """Compare-and-set state change with payload updates in one step."""
        now = _now_iso()
        with self._txn() as conn:
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            if row is None:
                raise NotFound(f"no record for hash {content_hash}")
            current = PipelineState(row["state"])
            if current != expected_from:
                raise StaleState(
                    f"{content_hash[:12]}: expected {expected_from.value}, found {current.value}"
                )
            if (expected_from, to) not in LEGAL_EDGES:
                raise IllegalEdge(f"{expected_from.value} -> {to.value} is not a legal edge")
            self._check_target_invariants(row, to, quality, metadata, repository_item_id)

            sets = ["state = ?", "updated_at = ?", "lease_worker = NULL", "lease_expiry = NULL"]
            args: list[Any] = [to.value, now]
            if text_ref is not None:
                sets.append("text_ref = ?")
                args.append(text_ref)
            if quality is not None:
                sets.append("quality = ?")
                args.append(json.dumps(quality.to_dict(), ensure_ascii=False))
            if metadata is not None:
                sets.append("metadata = ?")
                args.append(json.dumps(metadata.to_dict(), ensure_ascii=False))
            if repository_item_id is not None:
                sets.append("repository_item_id = ?")
                args.append(repository_item_id)
            args.append(content_hash)
            conn.execute(f"UPDATE documents SET {', '.join(sets)} WHERE hash = ?", args)
            conn.execute(
                "INSERT INTO transitions (hash, from_state, to_state, at, worker, note)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                (content_hash, current.value, to.value, now, worker, note),
            )
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            return _record_from_row(row)

    @staticmethod
    def _check_target_invariants(row, to, quality, metadata, repository_item_id) -> None:
        has_metadata = metadata is not None or row["metadata"] is not None
        if to == PipelineState.INFERRED and not has_metadata:
            raise StoreError("INFERRED requires validated metadata")
        if to == PipelineState.UPLOADED:
            has_item = repository_item_id is not None or row["repository_item_id"] is not None
            if not (has_item and has_metadata):
                raise StoreError("UPLOADED requires a repository item id and metadata")
        if to == PipelineState.QUALITY_REJECTED:
            verdict = quality.verdict if quality else None
            if verdict not in ("fail", "no_text"):
                raise StoreError("QUALITY_REJECTED requires a failing quality report")

    def claim_batch(
        self,
        state: PipelineState,
        n: int,
        worker: str,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
    ) -> list[DocumentRecord]:
        """Atomically lease up to ``n`` unleased (or lease-expired) records."""
        if n < 1:
            raise ValueError("n must be >= 1")
        now = time.time()
        with self._txn() as conn:
            rows = conn.execute(
                "SELECT hash FROM documents WHERE state = ?"
                " AND (lease_expiry IS NULL OR lease_expiry <= ?)"
                " ORDER BY created_at, hash LIMIT ?",
                (state.value, now, n),
            ).fetchall()
            hashes = [row["hash"] for row in rows]
            claimed: list[DocumentRecord] = []
            for h in hashes:
                conn.execute(
                    "UPDATE documents SET lease_worker = ?, lease_expiry = ? WHERE hash = ?",
                    (worker, now + lease_seconds, h),
                )
                claimed.append(
                    _record_from_row(
                        conn.execute("SELECT * FROM documents WHERE hash = ?", (h,)).fetchone()
                    )
                )
            return claimed

    def record_failure(
        self,
        content_hash: str,
        error: str,
        max_attempts: int,
        *,
        worker: str = "",
    ) -> DocumentRecord:
        """Count a failed processing attempt and release the lease.

        Exhausting ``max_attempts`` moves the record to FAILED (logged as
        a transition); otherwise the state is untouched and the record
        becomes claimable again.
        """
        now = _now_iso()
        with self._txn() as conn:
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            if row is None:
                raise NotFound(f"no record for hash {content_hash}")
            current = PipelineState(row["state"])
            attempts = row["attempts"] + 1
            fail_now = attempts >= max_attempts and current not in TERMINAL_STATES
            new_state = PipelineState.FAILED if fail_now else current
            conn.execute(
                "UPDATE documents SET state = ?, attempts = ?, last_error = ?,"
                " updated_at = ?, lease_worker = NULL, lease_expiry = NULL WHERE hash = ?",
                (new_state.value, attempts, error, now, content_hash),
            )
            if fail_now:
                conn.execute(
                    "INSERT INTO transitions (hash, from_state, to_state, at, worker, note)"
                    " VALUES (?, ?, ?, ?, ?, ?)",
                    (content_hash, current.value, PipelineState.FAILED.value, now, worker, error),
                )
            row = conn.execute(
                "SELECT * FROM documents WHERE hash = ?", (content_hash,)
            ).fetchone()
            return _record_from_row(row)

    # -- misc -------------------------------------------------------------

    def set_meta(self, key: str, value: Any) -> None:
        with self._txn() as conn:
            conn.execute(
                "INSERT INTO meta (key, value) VALUES (?, ?)"
                " ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                (key, json.dumps(value, ensure_ascii=False)),
            )

    def get_meta(self, key: str) -> Any | None:
        row = self._conn().execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return json.loads(row["value"]) if row else None


def open_store(path: str | Path) -> Store:
    return Store(path)

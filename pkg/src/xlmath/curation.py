"""Review queue for benchmark items under construction, with an HTTP API.

Humans review machine output (OCR of exam screenshots, or machine
translation) against the original source, then accept, edit in place, or
reject each item. Decisions are durable: every status transition lands in an
append-only history table inside one sqlite transaction, so a crash never
loses a committed decision. Leases are deliberately in-memory: they are
scheduling state, not review state, and reset on restart by design.

Terminal statuses (accepted, edited, rejected) are reachable only from
pending, and nothing leaves a terminal status.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

logger = logging.getLogger(__name__)

KINDS = ("ocr", "translation")
STATUSES = ("pending", "accepted", "edited", "rejected")
TERMINAL = ("accepted", "edited", "rejected")
DECISION_TO_STATUS = {"accept": "accepted", "edit": "edited", "reject": "rejected"}

DEFAULT_LEASE_SECONDS = 15 * 60

_SCHEMA = """
CREATE TABLE IF NOT EXISTS items (
    item_id TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    source_ref TEXT NOT NULL,
    candidate_text TEXT NOT NULL,
    status TEXT NOT NULL,
    edited_text TEXT,
    reviewer_note TEXT,
    enqueued_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS history (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    item_id TEXT NOT NULL,
    status TEXT NOT NULL,
    reviewer TEXT,
    note TEXT,
    at REAL NOT NULL
);
"""


class CurationError(ValueError):
    """Illegal queue operation: bad transition, missing lease, or conflict."""


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    kind: str
    source_ref: str
    candidate_text: str
    status: str = "pending"
    edited_text: str | None = None
    reviewer_note: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise CurationError(f"unknown review kind: {self.kind!r}")
        if self.status not in STATUSES:
            raise CurationError(f"unknown status: {self.status!r}")
        if (self.status == "edited") != (self.edited_text is not None):
            raise CurationError("edited_text present exactly when status is 'edited'")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind,
            "source_ref": self.source_ref,
            "candidate_text": self.candidate_text,
            "status": self.status,
            "edited_text": self.edited_text,
            "reviewer_note": self.reviewer_note,
        }


@dataclass
class Lease:
    item_id: str
    reviewer: str
    token: str
    expires_at: float


class CurationQueue:
    """Durable review queue over sqlite with time-boxed in-memory leases."""

    def __init__(
        self,
        db_path: Path | str,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        time_fn: Callable[[], float] = time.time,
    ):
        self._path = str(db_path)
        self._lease_seconds = lease_seconds
        self._now = time_fn
        self._lock = threading.RLock()
        self._leases: dict[str, Lease] = {}
        self._conn = sqlite3.connect(self._path, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        with self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    # -- queue building ------------------------------------------------

    def enqueue(self, items: Sequence[ReviewItem]) -> dict:
        """Insert items as pending; idempotent per item id.

        Re-enqueueing an identical item is a no-op; the same id with
        different content is a conflict and rejects the whole batch before
        any write.
        """
        with self._lock:
            conflicts = []
            fresh = []
            for item in items:
                row = self._conn.execute(
                    "SELECT kind, source_ref, candidate_text FROM items WHERE item_id=?",
                    (item.item_id,),
                ).fetchone()
                if row is None:
                    fresh.append(item)
                elif row != (item.kind, item.source_ref, item.candidate_text):
                    conflicts.append(item.item_id)
            if conflicts:
                raise CurationError(
                    f"items already enqueued with different content: {conflicts}"
                )
            now = self._now()
            with self._conn:
                for item in fresh:
                    self._conn.execute(
                        "INSERT INTO items (item_id, kind, source_ref, candidate_text,"
                        " status, enqueued_at) VALUES (?,?,?,?, 'pending', ?)",
                        (item.item_id, item.kind, item.source_ref, item.candidate_text, now),
                    )
                    self._conn.execute(
                        "INSERT INTO history (item_id, status, at) VALUES (?, 'pending', ?)",
                        (item.item_id, now),
                    )
            return {"enqueued": len(fresh), "already_present": len(items) - len(fresh)}

    # -- leasing ---------------------------------------------------------

    def _drop_expired(self, now: float) -> None:
        expired = [item_id for item_id, lease in self._leases.items() if lease.expires_at <= now]
        for item_id in expired:
            del self._leases[item_id]

    def next_pending(self, reviewer: str) -> tuple[ReviewItem, Lease] | None:
        """Oldest pending item not currently leased, with a fresh lease.

        Exactly one reviewer can hold an item at a time; an expired lease
        silently returns the item to the pool.
        """
        with self._lock:
            now = self._now()
            self._drop_expired(now)
            rows = self._conn.execute(
                "SELECT item_id FROM items WHERE status='pending' ORDER BY enqueued_at, item_id"
            ).fetchall()
            for (item_id,) in rows:
                if item_id in self._leases:
                    continue
                lease = Lease(
                    item_id=item_id,
                    reviewer=reviewer,
                    token=uuid.uuid4().hex,
                    expires_at=now + self._lease_seconds,
                )
                self._leases[item_id] = lease
                return self.get_item(item_id), lease
            return None

    def active_leases(self) -> int:
        with self._lock:
            self._drop_expired(self._now())
            return len(self._leases)

    # -- decisions ---------------------------------------------------------

    def submit_decision(
        self,
        item_id: str,
        decision: str,
        reviewer: str | None = None,
        edited_text: str | None = None,
        note: str | None = None,
    ) -> ReviewItem:
        """Apply a decision under a live lease and commit it durably.

        Edits require the corrected text. Terminal items and unleased items
        reject; the lease is released only after the transaction commits.
        """
        if decision not in DECISION_TO_STATUS:
            raise CurationError(f"unknown decision: {decision!r}")
        if decision == "edit" and not edited_text:
            raise CurationError("edit decision requires edited_text")
        with self._lock:
            now = self._now()
            self._drop_expired(now)
            lease = self._leases.get(item_id)
            if lease is None:
                raise CurationError(f"no live lease for item {item_id!r}")
            if reviewer is not None and lease.reviewer != reviewer:
                raise CurationError(
                    f"item {item_id!r} is leased to {lease.reviewer!r}, not {reviewer!r}"
                )
            current = self.get_item(item_id)
            if current.status != "pending":
                raise CurationError(
                    f"item {item_id!r} is terminal ({current.status}); no further decisions"
                )
            status = DECISION_TO_STATUS[decision]
            with self._conn:
                self._conn.execute(
                    "UPDATE items SET status=?, edited_text=?, reviewer_note=? WHERE item_id=?",
                    (status, edited_text if decision == "edit" else None, note, item_id),
                )
                self._conn.execute(
                    "INSERT INTO history (item_id, status, reviewer, note, at)"
                    " VALUES (?,?,?,?,?)",
                    (item_id, status, lease.reviewer, note, now),
                )
            del self._leases[item_id]
            return self.get_item(item_id)

    # -- reads ----------------------------------------------------------

    def get_item(self, item_id: str) -> ReviewItem:
        row = self._conn.execute(
            "SELECT item_id, kind, source_ref, candidate_text, status, edited_text,"
            " reviewer_note FROM items WHERE item_id=?",
            (item_id,),
        ).fetchone()
        if row is None:
            raise CurationError(f"unknown item: {item_id!r}")
        return ReviewItem(*row)

    def history(self, item_id: str) -> list[dict]:
        rows = self._conn.execute(
            "SELECT status, reviewer, note, at FROM history WHERE item_id=? ORDER BY seq",
            (item_id,),
        ).fetchall()
        return [
            {"status": status, "reviewer": reviewer, "note": note, "at": at}
            for status, reviewer, note, at in rows
        ]

    def stats(self) -> dict:
        counts = {status: 0 for status in STATUSES}
        for status, count in self._conn.execute(
            "SELECT status, COUNT(*) FROM items GROUP BY status"
        ):
            counts[status] = count
        counts["leased"] = self.active_leases()
        counts["total"] = sum(counts[s] for s in STATUSES)
        return counts

    def export_reviewed(self) -> list[dict]:
        """Accepted and edited items as dataset-build fragments.

        Edited items carry the corrected text; pending and rejected items are
        excluded. Deterministic given queue state.
        """
        rows = self._conn.execute(
            "SELECT item_id, kind, source_ref, candidate_text, status, edited_text"
            " FROM items WHERE status IN ('accepted','edited') ORDER BY item_id"
        ).fetchall()
        fragments = []
        for item_id, kind, source_ref, candidate, status, edited in rows:
            fragments.append(
                {
                    "item_id": item_id,
                    "kind": kind,
                    "source_ref": source_ref,
                    "text": edited if status == "edited" else candidate,
                    "status": status,
                }
            )
        return fragments


def load_review_items(path: Path | str) -> list[ReviewItem]:
    """Read review items from JSONL: {item_id, kind, source_ref, candidate_text}."""
    items = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            items.append(
                ReviewItem(
                    item_id=data["item_id"],
                    kind=data["kind"],
                    source_ref=data.get("source_ref", ""),
                    candidate_text=data["candidate_text"],
                )
            )
    return items


def create_app(queue: CurationQueue, static_dir: Path | str | None = None):
    """FastAPI app over a queue; optionally serves the review UI bundle."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="curation review service")

    @app.get("/api/queue/next")
    def queue_next(reviewer: str = "anonymous"):
        leased = queue.next_pending(reviewer)
        if leased is None:
            return JSONResponse({"item": None, "lease": None})
        item, lease = leased
        return {
            "item": item.to_dict(),
            "lease": {
                "token": lease.token,
                "reviewer": lease.reviewer,
                "expires_at": lease.expires_at,
            },
        }

    @app.post("/api/items/{item_id}/decision")
    def decide(item_id: str, body: dict):
        try:
            item = queue.submit_decision(
                item_id,
                decision=body.get("decision", ""),
                reviewer=body.get("reviewer"),
                edited_text=body.get("edited_text"),
                note=body.get("note"),
            )
        except CurationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return item.to_dict()

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str):
        try:
            item = queue.get_item(item_id)
        except CurationError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return dict(item.to_dict(), history=queue.history(item_id))

    @app.get("/api/export")
    def export():
        return {"items": queue.export_reviewed()}

    @app.get("/api/stats")
    def stats():
        return queue.stats()

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    db_path: Path | str,
    port: int = 8808,
    host: str = "127.0.0.1",
    static_dir: Path | str | None = None,
) -> None:  # pragma: no cover - long-running server
    import uvicorn

    queue = CurationQueue(db_path)
    app = create_app(queue, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")

"""Append-only review store: pending items, decisions, and labeled examples.

One line-delimited log file holds everything. A review decision is a single
log record that simultaneously settles the item, appends the labeled example,
and bumps the store version, so a crash can never leave the three halves
disagreeing: either the line is fully on disk or it is not. A torn final
line (crash mid-append) is detected and dropped on load.

Decisions are permanent; corrections are new superseding examples. This
keeps a complete audit trail.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from tracelink.model import ConditionKind, LinkLabel
from tracelink.recovery import RecoveredLink


class StoreError(RuntimeError):
    pass


class ItemNotFoundError(StoreError):
    pass


class AlreadyDecidedError(StoreError):
    pass


class ReviewStatus:
    PENDING = "Pending"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class ReviewItem:
    """A recovered link awaiting (or past) human review."""

    item_id: str
    stake_id: str
    sys_id: str
    condition_side: ConditionKind
    explanation: str | None
    vote_share: float
    status: str = ReviewStatus.PENDING
    decided_by: str | None = None
    decided_at: float | None = None


@dataclass(frozen=True)
class StoredExample:
    """A human-confirmed label appended to the retrieval pool."""

    stake_id: str
    sys_id: str
    label: LinkLabel
    version: int


@dataclass(frozen=True)
class StoreState:
    """Immutable snapshot: the example sequence and its version."""

    labeled_examples: tuple[StoredExample, ...]
    version: int


class ReviewStore:
    """Single-file review log with serialized writes and snapshot reads."""

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._examples: list[StoredExample] = []
        self._version = 0
        if self._path.exists():
            self._load()

    def _load(self) -> None:
        raw = self._path.read_text(encoding="utf-8")
        lines = raw.split("\n")
        # A file that does not end with a newline was torn mid-append; the
        # partial tail is the uncommitted record and is discarded.
        if lines and lines[-1] != "":
            lines = lines[:-1]
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{self._path}:{lineno}: corrupt store record") from exc
            self._apply(record)

    def _apply(self, record: dict) -> None:
        kind = record.get("type")
        if kind == "item":
            item = ReviewItem(
                item_id=record["item_id"],
                stake_id=record["stake_id"],
                sys_id=record["sys_id"],
                condition_side=ConditionKind(record["condition_side"]),
                explanation=record.get("explanation"),
                vote_share=record.get("vote_share", 1.0),
            )
            self._items.setdefault(item.item_id, item)
        elif kind == "decision":
            item_id = record["item_id"]
            item = self._items.get(item_id)
            if item is None:
                raise StoreError(f"decision for unknown item {item_id!r}")
            if item.status != ReviewStatus.PENDING:
                raise StoreError(f"duplicate decision for item {item_id!r}")
            version = record["version"]
            if version != self._version + 1:
                raise StoreError(
                    f"store version gap: expected {self._version + 1}, found {version}"
                )
            accepted = record["decision"] == "accept"
            self._items[item_id] = replace(
                item,
                status=ReviewStatus.ACCEPTED if accepted else ReviewStatus.REJECTED,
                decided_by=record.get("reviewer"),
                decided_at=record.get("decided_at"),
            )
            self._examples.append(
                StoredExample(
                    stake_id=item.stake_id,
                    sys_id=item.sys_id,
                    label=LinkLabel.VALID if accepted else LinkLabel.INVALID,
                    version=version,
                )
            )
            self._version = version
        else:
            raise StoreError(f"unknown store record type {kind!r}")

    def _append_line(self, record: dict) -> None:
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    def snapshot(self) -> StoreState:
        with self._lock:
            return StoreState(tuple(self._examples), self._version)

    @property
    def version(self) -> int:
        return self._version

    def items(self) -> list[ReviewItem]:
        with self._lock:
            return list(self._items.values())

    def get_item(self, item_id: str) -> ReviewItem:
        with self._lock:
            item = self._items.get(item_id)
        if item is None:
            raise ItemNotFoundError(f"no review item {item_id!r}")
        return item

    def add_recovered_links(self, recovered: list[RecoveredLink]) -> list[ReviewItem]:
        """Queue recovered links for review; re-adding a known pair is a no-op."""
        added = []
        with self._lock:
            for link in recovered:
                item_id = f"{link.stake_id}::{link.sys_id}"
                if item_id in self._items:
                    continue
                record = {
                    "type": "item",
                    "item_id": item_id,
                    "stake_id": link.stake_id,
                    "sys_id": link.sys_id,
                    "condition_side": link.condition_side.value,
                    "explanation": link.verdict.explanation,
                    "vote_share": link.verdict.votes.yes_share if link.verdict.votes else 1.0,
                }
                self._append_line(record)
                self._apply(record)
                added.append(self._items[item_id])
        return added

    def record_decision(self, item_id: str, decision: str, reviewer: str) -> int:
        """Settle one pending item; returns the new store version.

        ``decision`` is ``accept`` or ``reject``. Accepting appends a Valid
        labeled example, rejecting an Invalid one. Deciding a settled item is
        a conflict and leaves the store untouched.
        """
        if decision not in ("accept", "reject"):
            raise StoreError(f"decision must be 'accept' or 'reject', got {decision!r}")
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise ItemNotFoundError(f"no review item {item_id!r}")
            if item.status != ReviewStatus.PENDING:
                raise AlreadyDecidedError(
                    f"item {item_id!r} already {item.status} by {item.decided_by}"
                )
            record = {
                "type": "decision",
                "item_id": item_id,
                "decision": decision,
                "reviewer": reviewer,
                "decided_at": time.time(),
                "version": self._version + 1,
            }
            self._append_line(record)
            self._apply(record)
            return self._version

"""Durable persistence: append-only event log, snapshots and secondary indexes.

The log is newline-delimited JSON, one event per line, each line carrying its
own CRC. A torn trailing record (crash mid-append) is dropped on open; a bad
record followed by valid ones means real corruption and refuses to load.

Every catalog mutation is an event; replaying the log from empty rebuilds the
exact live state, which is what makes at-least-once bus delivery and crash
recovery safe.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import CorruptLog, CorruptSnapshot, PayloadInvalid, StorageFailure, UnknownIndex
from .medal import AttributeType, DataEntity, DataEntityType, parse_iso_date

EVENT_KINDS = frozenset(
    {
        "type-registered",
        "entity-created",
        "entity-updated",
        "entity-deleted",
        "classification-defined",
        "tagged",
        "untagged",
        "link-created",
        "thesaurus-created",
        "thesaurus-category-added",
        "term-added",
        "relation-created",
        "association-created",
        "process-recorded",
        "policy-put",
        "policy-revoked",
        "principal-created",
        "principal-group-assigned",
        "role-created",
    }
)


@dataclass(frozen=True)
class CatalogEvent:
    event_id: str
    seq: int
    ts: str
    kind: str
    payload: dict


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def record_crc(event_id: str, seq: int, ts: str, kind: str, payload: dict) -> str:
    return format(zlib.crc32(_canonical([event_id, seq, ts, kind, payload])), "08x")


def encode_record(event: CatalogEvent) -> str:
    rec = {
        "event_id": event.event_id,
        "seq": event.seq,
        "ts": event.ts,
        "kind": event.kind,
        "payload": event.payload,
        "crc": record_crc(event.event_id, event.seq, event.ts, event.kind, event.payload),
    }
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


def decode_record(line: str) -> CatalogEvent | None:
    """Parse and CRC-check one log line; None when the line is not a valid record."""
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    if not isinstance(rec, dict):
        return None
    try:
        event = CatalogEvent(
            event_id=rec["event_id"],
            seq=int(rec["seq"]),
            ts=rec["ts"],
            kind=rec["kind"],
            payload=rec["payload"],
        )
        crc = rec["crc"]
    except (KeyError, TypeError, ValueError):
        return None
    if record_crc(event.event_id, event.seq, event.ts, event.kind, event.payload) != crc:
        return None
    return event


class EventLog:
    """Single-writer append-only log.

    ``append`` is idempotent by event_id: re-appending an already committed
    event acknowledges it with the original seq and leaves the log unchanged.
    """

    def __init__(self, path: Path | str, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self._seq_by_id: dict[str, int] = {}
        self.head_seq = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        valid_end = self._scan_existing()
        if self.path.exists() and valid_end < self.path.stat().st_size:
            # torn trailing record from an interrupted append: drop it
            with open(self.path, "r+b") as fh:
                fh.truncate(valid_end)
        self._fh = open(self.path, "ab")

    def _scan_existing(self) -> int:
        """Validate existing records; returns the byte offset after the last good one."""
        if not self.path.exists():
            return 0
        valid_end = 0
        pending: list[tuple[int, bytes]] = []  # (end_offset, line) after first bad line
        first_bad_seq: int | None = None
        offset = 0
        with open(self.path, "rb") as fh:
            for raw in fh:
                end = offset + len(raw)
                line = raw.rstrip(b"\n")
                if first_bad_seq is None:
                    event = decode_record(line.decode("utf-8", errors="replace"))
                    if (
                        event is not None
                        and raw.endswith(b"\n")
                        and event.seq == self.head_seq + 1
                    ):
                        self._seq_by_id[event.event_id] = event.seq
                        self.head_seq = event.seq
                        valid_end = end
                    else:
                        first_bad_seq = self.head_seq + 1
                else:
                    pending.append((end, line))
                offset = end
        if first_bad_seq is not None:
            # a valid record after a bad one means mid-log corruption, not a torn tail
            for _, line in pending:
                if decode_record(line.decode("utf-8", errors="replace")) is not None:
                    raise CorruptLog(first_bad_seq)
        return valid_end

    def seen(self, event_id: str) -> bool:
        return event_id in self._seq_by_id

    def append(self, event_id: str, ts: str, kind: str, payload: dict) -> CatalogEvent:
        if kind not in EVENT_KINDS:
            raise PayloadInvalid(f"unknown event kind {kind!r}")
        if not isinstance(payload, dict):
            raise PayloadInvalid("payload must be an object")
        with self._lock:
            existing = self._seq_by_id.get(event_id)
            if existing is not None:
                return CatalogEvent(event_id, existing, ts, kind, payload)
            event = CatalogEvent(event_id, self.head_seq + 1, ts, kind, payload)
            try:
                self._fh.write((encode_record(event) + "\n").encode("utf-8"))
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
            self._seq_by_id[event_id] = event.seq
            self.head_seq = event.seq
            return event

    def iter_events(self, from_seq: int = 1) -> Iterator[CatalogEvent]:
        """Yield committed events with seq >= from_seq, verifying checksums."""
        expected = 1
        with open(self.path, "rb") as fh:
            for raw in fh:
                event = decode_record(raw.rstrip(b"\n").decode("utf-8", errors="replace"))
                if event is None or event.seq != expected:
                    if expected > self.head_seq:
                        return  # torn tail beyond the committed head
                    raise CorruptLog(expected)
                if event.seq > self.head_seq:
                    return
                if event.seq >= from_seq:
                    yield event
                expected += 1

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
                self._fh.close()


# --- snapshots ------------------------------------------------------------


def state_checksum(as_of_seq: int, state: dict) -> str:
    return hashlib.sha256(_canonical({"as_of_seq": as_of_seq, "state": state})).hexdigest()


def write_snapshot(path: Path | str, as_of_seq: int, state: dict) -> dict:
    doc = {
        "as_of_seq": as_of_seq,
        "state": state,
        "checksum": state_checksum(as_of_seq, state),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    tmp.replace(path)
    return doc


def read_snapshot(path: Path | str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptSnapshot(str(exc)) from exc
    if not isinstance(doc, dict) or set(doc) != {"as_of_seq", "state", "checksum"}:
        raise CorruptSnapshot("snapshot document malformed")
    if state_checksum(doc["as_of_seq"], doc["state"]) != doc["checksum"]:
        raise CorruptSnapshot("snapshot checksum mismatch")
    return doc


# --- secondary indexes ------------------------------------------------------

INDEX_KINDS = ("attribute", "classification", "term", "qualified_name", "type")


def canon_value(value, attr_type: AttributeType):
    """Hashable canonical key for an attribute value, or None when unindexable.

    Numbers collapse to float so an int literal hits float-typed attributes
    and vice versa; dates collapse to normalized UTC ISO strings.
    """
    kind = attr_type.kind
    if kind == "string":
        return ("s", value)
    if kind == "boolean":
        return ("b", bool(value))
    if kind in ("int", "float"):
        return ("n", float(value))
    if kind == "date":
        parsed = parse_iso_date(value)
        return None if parsed is None else ("d", parsed.isoformat())
    return None  # arrays are not indexed; CONTAINS and scans cover them


def canon_literal(value, literal_kind: str):
    if literal_kind in ("int", "float"):
        return ("n", float(value))
    if literal_kind == "boolean":
        return ("b", bool(value))
    if literal_kind == "date":
        parsed = parse_iso_date(value)
        return None if parsed is None else ("d", parsed.isoformat())
    return ("s", value)


class CatalogIndexes:
    """In-memory secondary indexes over the active entities.

    Kept exactly coherent with the state by the catalog's single writer;
    ``lookup`` answers must equal a full scan at all times.
    """

    def __init__(self):
        self.qualified_name: dict[str, str] = {}
        self.classification: dict[str, set[str]] = {}
        self.term: dict[str, set[str]] = {}
        self.attribute: dict[tuple, set[str]] = {}
        self.type: dict[str, set[str]] = {}

    def add_entity(self, entity: DataEntity, etype: DataEntityType) -> None:
        self.qualified_name[entity.qualified_name] = entity.entity_id
        self.type.setdefault(entity.type_name, set()).add(entity.entity_id)
        for spec in etype.attributes:
            if spec.name in entity.attributes:
                key = canon_value(entity.attributes[spec.name], spec.attr_type)
                if key is not None:
                    self.attribute.setdefault((spec.name, key), set()).add(entity.entity_id)

    def remove_entity(self, entity: DataEntity, etype: DataEntityType) -> None:
        """Drop qn/type/attribute entries; classification/term buckets are
        managed by tag/associate and purge_entity so updates keep them."""
        if self.qualified_name.get(entity.qualified_name) == entity.entity_id:
            del self.qualified_name[entity.qualified_name]
        self.type.get(entity.type_name, set()).discard(entity.entity_id)
        for spec in etype.attributes:
            if spec.name in entity.attributes:
                key = canon_value(entity.attributes[spec.name], spec.attr_type)
                if key is not None:
                    bucket = self.attribute.get((spec.name, key))
                    if bucket is not None:
                        bucket.discard(entity.entity_id)
                        if not bucket:
                            del self.attribute[(spec.name, key)]

    def purge_entity(self, entity_id: str) -> None:
        """Drop a tombstoned entity from the facet buckets."""
        for bucket in self.classification.values():
            bucket.discard(entity_id)
        for bucket in self.term.values():
            bucket.discard(entity_id)

    def tag(self, entity_id: str, classification: str) -> None:
        self.classification.setdefault(classification, set()).add(entity_id)

    def untag(self, entity_id: str, classification: str) -> None:
        self.classification.get(classification, set()).discard(entity_id)

    def associate(self, entity_id: str, term_id: str) -> None:
        self.term.setdefault(term_id, set()).add(entity_id)

    def lookup(self, kind: str, key) -> set[str]:
        if kind == "qualified_name":
            hit = self.qualified_name.get(key)
            return {hit} if hit is not None else set()
        if kind == "classification":
            return set(self.classification.get(key, ()))
        if kind == "term":
            return set(self.term.get(key, ()))
        if kind == "type":
            return set(self.type.get(key, ()))
        if kind == "attribute":
            attr_name, value, literal_kind = key
            canon = canon_literal(value, literal_kind)
            if canon is None:
                return set()
            return set(self.attribute.get((attr_name, canon), ()))
        raise UnknownIndex(f"no index named {kind!r}")

"""Ingestion: filesystem hooks, the async metadata bus, and table sources.

Data movement and metadata registration are decoupled: hooks describe what
happened to the data, publish() enqueues them durably and returns at once,
and a single consumer applies them to the catalog. Application is idempotent
per delivery id, so at-least-once delivery (including journal recovery after
a crash) yields exactly one effect.
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import re
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath
from fnmatch import fnmatchcase

from .catalog import Catalog
from .errors import (
    CatalogError,
    ConfigInvalid,
    IngestParseError,
    PathOutsideRoot,
    QueueFull,
    Unreadable,
    WatchRootVanished,
)
from .medal import parse_iso_date

log = logging.getLogger(__name__)

DELIVERY_NAMESPACE = uuid.UUID("6ba7b812-9dad-11d1-80b4-00c04fd430c8")

HOOK_ATTRIBUTE_ORDER = (
    "qualifiedName",
    "name",
    "path",
    "user",
    "group",
    "creation_time",
    "owner",
    "numberOfReplicas",
    "fileSize",
    "isFile",
)


@dataclass
class HookEvent:
    """One metadata delivery; the envelope is exactly the hook wire shape.

    Entity entries ride in the envelope; process_entries carry lineage
    registrations (by qualified name) that apply after the entities, so a
    transform's output table and its process land in one delivery.
    """

    entries: list[dict]
    delivery_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    source: str = "hook"
    op: str = "upsert"  # "upsert" | "delete"
    storage_paths: list[str | None] = field(default_factory=list)
    process_entries: list[dict] = field(default_factory=list)

    def to_envelope(self) -> dict:
        return {"entities": [dict(e) for e in self.entries]}

    def envelope_json(self) -> str:
        return json.dumps(self.to_envelope(), ensure_ascii=False)


def file_event_to_hook(
    path: Path | str,
    root: Path | str,
    principal: str,
    prefix: str,
    group: str | None = None,
    source: str = "watcher",
) -> HookEvent:
    """Describe one file as a hook envelope with the canonical attribute set."""
    path = Path(path)
    root = Path(root)
    try:
        relative = path.resolve().relative_to(root.resolve())
    except ValueError:
        raise PathOutsideRoot(f"{path} is not under {root}")
    try:
        stat = path.stat()
    except OSError as exc:
        raise Unreadable(f"cannot stat {path}: {exc}") from exc
    if group is None:
        try:
            import grp

            group = grp.getgrgid(stat.st_gid).gr_name
        except (ImportError, KeyError):
            group = str(stat.st_gid)
    rel_posix = PurePosixPath(relative).as_posix()
    qualified_name = f"{prefix}/{rel_posix}"
    created = datetime.fromtimestamp(stat.st_mtime, tz=timezone.utc).date().isoformat()
    attributes = {
        "qualifiedName": qualified_name,
        "name": path.name,
        "path": qualified_name.rsplit("/", 1)[0],
        "user": principal,
        "group": group,
        "creation_time": created,
        "owner": principal,
        "numberOfReplicas": 0,
        "fileSize": stat.st_size,
        "isFile": path.is_file(),
    }
    entry = {"typeName": "hdfs_path", "createdBy": principal, "attributes": attributes}
    return HookEvent(
        entries=[entry], source=source, storage_paths=[f"raw/{rel_posix}"]
    )


def file_delete_hook(
    relative_path: str, principal: str, prefix: str, source: str = "watcher"
) -> HookEvent:
    qualified_name = f"{prefix}/{relative_path}"
    entry = {
        "typeName": "hdfs_path",
        "createdBy": principal,
        "attributes": {"qualifiedName": qualified_name},
    }
    return HookEvent(entries=[entry], source=source, op="delete", storage_paths=[None])


# --- hook application ----------------------------------------------------------


def apply_hook(catalog: Catalog, hook: HookEvent) -> int:
    """Apply one delivery to the catalog; returns the number of effects.

    Event ids derive from the delivery id, so redelivery is a no-op. Entries
    that fail validation are logged and skipped, never blocking the rest.
    """
    applied = 0
    for i, entry in enumerate(hook.entries):
        event_id = uuid.uuid5(DELIVERY_NAMESPACE, f"{hook.delivery_id}:{i}").hex
        if catalog.log.seen(event_id):
            continue
        attributes = entry.get("attributes", {})
        qualified_name = attributes.get("qualifiedName")
        type_name = entry.get("typeName")
        if not isinstance(qualified_name, str) or not qualified_name:
            log.warning("hook %s entry %d lacks qualifiedName; skipped", hook.delivery_id, i)
            continue
        storage = hook.storage_paths[i] if i < len(hook.storage_paths) else None
        try:
            existing = catalog.entity_by_qualified_name(qualified_name)
            if hook.op == "delete":
                if existing is not None:
                    catalog.delete_entity(existing.entity_id, entry.get("createdBy", "hook"), event_id=event_id)
                    applied += 1
                continue
            if existing is not None and existing.type_name == type_name:
                catalog.update_entity(
                    existing.entity_id, dict(attributes), entry.get("createdBy", "hook"),
                    event_id=event_id,
                )
            else:
                catalog.create_entity(
                    type_name,
                    qualified_name,
                    dict(attributes),
                    entry.get("createdBy", "hook"),
                    storage=storage,
                    event_id=event_id,
                )
            applied += 1
        except CatalogError as exc:
            log.warning(
                "hook %s entry %d (%s) rejected: %s", hook.delivery_id, i, qualified_name, exc
            )
    for i, entry in enumerate(hook.process_entries):
        event_id = uuid.uuid5(DELIVERY_NAMESPACE, f"{hook.delivery_id}:p{i}").hex
        if catalog.log.seen(event_id):
            continue
        try:
            resolved: dict[str, list[str]] = {}
            for side in ("input_qns", "output_qns"):
                resolved[side] = []
                for qn in entry.get(side, []):
                    hit = catalog.entity_by_qualified_name(qn)
                    if hit is None:
                        raise CatalogError(f"no active entity {qn!r} for process")
                    resolved[side].append(hit.entity_id)
            catalog.record_process(
                entry["name"],
                entry.get("kind", "custom"),
                resolved["input_qns"],
                resolved["output_qns"],
                entry.get("executed_by", "hook"),
                entry.get("parameters", {}),
                executed_at=entry.get("executed_at"),
                event_id=event_id,
            )
            applied += 1
        except CatalogError as exc:
            log.warning("hook %s process entry %d rejected: %s", hook.delivery_id, i, exc)
    return applied


class EventBus:
    """Multi-producer, single-consumer ordered queue into the catalog writer.

    publish() journals the delivery (optional) and returns after enqueue; the
    consumer thread applies deliveries and clears the journal. Pending journal
    entries are re-enqueued on start, giving at-least-once delivery.
    """

    def __init__(
        self,
        catalog: Catalog,
        journal_dir: Path | str | None = None,
        maxsize: int = 100_000,
    ):
        self.catalog = catalog
        self.journal_dir = Path(journal_dir) if journal_dir else None
        if self.journal_dir:
            self.journal_dir.mkdir(parents=True, exist_ok=True)
        self.queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    def recover_pending(self) -> int:
        """Re-enqueue journal entries left over from a previous run."""
        if not self.journal_dir:
            return 0
        count = 0
        for path in sorted(self.journal_dir.glob("*.json")):
            raw = json.loads(path.read_text(encoding="utf-8"))
            hook = HookEvent(
                entries=raw["entities"],
                delivery_id=raw["delivery_id"],
                source=raw.get("source", "journal"),
                op=raw.get("op", "upsert"),
                storage_paths=raw.get("storage_paths", []),
                process_entries=raw.get("process_entries", []),
            )
            self.queue.put(hook)
            count += 1
        return count

    def publish(self, hook: HookEvent) -> dict:
        journal_path = None
        if self.journal_dir:
            journal_path = self.journal_dir / f"{hook.delivery_id}.json"
            doc = hook.to_envelope()
            doc.update(
                delivery_id=hook.delivery_id,
                source=hook.source,
                op=hook.op,
                storage_paths=hook.storage_paths,
                process_entries=hook.process_entries,
            )
            journal_path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        try:
            self.queue.put_nowait(hook)
        except queue.Full:
            if journal_path is not None:
                journal_path.unlink(missing_ok=True)
            raise QueueFull("metadata bus is saturated; retry later")
        return {"delivery_id": hook.delivery_id}

    def _consume(self) -> None:
        while True:
            hook = self.queue.get()
            if hook is None:
                self.queue.task_done()
                return
            try:
                apply_hook(self.catalog, hook)
                if self.journal_dir:
                    (self.journal_dir / f"{hook.delivery_id}.json").unlink(missing_ok=True)
            except Exception:  # keep consuming; the journal retains the delivery
                log.exception("failed to apply delivery %s", hook.delivery_id)
            finally:
                self.queue.task_done()

    def start(self) -> None:
        if self._thread is None or not self._thread.is_alive():
            self.recover_pending()
            self._thread = threading.Thread(target=self._consume, daemon=True, name="lake-bus")
            self._thread.start()

    def drain(self) -> None:
        self.queue.join()

    def stop(self) -> None:
        if self._thread is not None and self._thread.is_alive():
            self.queue.put(None)
            self._thread.join()
            self._thread = None


# --- filesystem watcher -----------------------------------------------------------


@dataclass
class WatchSpec:
    root: Path
    globs: list[str] = field(default_factory=lambda: ["*"])
    interval_ms: int = 500
    principal: str = "watcher"
    prefix: str = "lake://raw"
    group: str | None = None

    def __post_init__(self):
        self.root = Path(self.root)
        if not self.root.is_dir():
            raise ConfigInvalid(f"watch root {self.root} is not a readable directory")
        if self.interval_ms <= 0:
            raise ConfigInvalid("poll interval must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> WatchSpec:
        return cls(
            root=Path(raw["root"]),
            globs=list(raw.get("globs", ["*"])),
            interval_ms=int(raw.get("interval_ms", 500)),
            principal=raw.get("principal", "watcher"),
            prefix=raw.get("prefix", "lake://raw"),
            group=raw.get("group"),
        )


class Watcher:
    """Polling watcher turning directory diffs into hook events.

    The contract is eventual, not instantaneous: every matching change is
    seen by some later scan, and a create+delete between scans nets to
    nothing (never a live entity for a missing file).
    """

    def __init__(self, spec: WatchSpec):
        self.spec = spec
        self._seen: dict[str, tuple[int, int]] = {}

    def dump_state(self) -> dict:
        """Snapshot of what this watcher has seen (for cron-style runs)."""
        return {rel: list(sig) for rel, sig in self._seen.items()}

    def load_state(self, raw: dict) -> None:
        self._seen = {rel: (int(sig[0]), int(sig[1])) for rel, sig in raw.items()}

    def _snapshot(self) -> dict[str, tuple[int, int]]:
        if not self.spec.root.is_dir():
            raise WatchRootVanished(f"{self.spec.root} vanished")
        out: dict[str, tuple[int, int]] = {}
        for path in self.spec.root.rglob("*"):
            if not path.is_file():
                continue
            rel = PurePosixPath(path.relative_to(self.spec.root)).as_posix()
            if not any(fnmatchcase(rel, g) or fnmatchcase(path.name, g) for g in self.spec.globs):
                continue
            stat = path.stat()
            out[rel] = (stat.st_size, stat.st_mtime_ns)
        return out

    def scan(self) -> list[HookEvent]:
        current = self._snapshot()
        events: list[HookEvent] = []
        for rel, sig in current.items():
            if self._seen.get(rel) != sig:
                events.append(
                    file_event_to_hook(
                        self.spec.root / rel,
                        self.spec.root,
                        self.spec.principal,
                        self.spec.prefix,
                        group=self.spec.group,
                    )
                )
        for rel in self._seen:
            if rel not in current:
                events.append(
                    file_delete_hook(rel, self.spec.principal, self.spec.prefix)
                )
        self._seen = current
        return events

    def run(self, bus: EventBus, stop: threading.Event) -> None:
        while not stop.is_set():
            try:
                for event in self.scan():
                    bus.publish(event)
            except WatchRootVanished:
                log.error("watch root %s vanished; watcher stopping", self.spec.root)
                return
            except QueueFull:
                pass  # backpressure: retry on the next tick
            stop.wait(self.spec.interval_ms / 1000.0)


# --- tabular ingestion ---------------------------------------------------------------


@dataclass(frozen=True)
class TableDescriptor:
    source_name: str
    table_name: str
    columns: tuple[tuple[str, str], ...]  # (name, kind)
    row_count: int
    source_kind: str  # "delimited-file" | "sql-dump"

    def to_dict(self) -> dict:
        return {
            "source": self.source_name,
            "table": self.table_name,
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "row_count": self.row_count,
            "source_kind": self.source_kind,
        }


def is_null_text(value: str) -> bool:
    return value == "" or value.upper() == "NULL"


_INT_RE = re.compile(r"[+-]?\d+\Z")


def parse_cell(value: str, kind: str):
    """Parse one text cell under a column kind; None when it does not conform."""
    if kind == "int":
        return int(value) if _INT_RE.match(value.strip()) else None
    if kind == "float":
        try:
            return float(value)
        except ValueError:
            return None
    if kind == "boolean":
        low = value.strip().lower()
        return {"true": True, "false": False}.get(low)
    if kind == "date":
        parsed = parse_iso_date(value.strip())
        return value.strip() if parsed is not None else None
    return value


def infer_column_kind(values: list[str]) -> str:
    """Most specific kind every non-null value parses under; string otherwise."""
    non_null = [v for v in values if not is_null_text(v)]
    if not non_null:
        return "string"
    for kind in ("int", "float", "boolean", "date"):
        if all(parse_cell(v, kind) is not None for v in non_null):
            return kind
    return "string"


def table_qualified_name(source: str, table: str) -> str:
    return f"lake://{source}/{table}"


def _register_table(
    catalog: Catalog,
    lake_root: Path,
    source: str,
    table: str,
    header: list[str],
    rows: list[list[str]],
    actor: str,
    source_uri: str,
    declared_kinds: list[str] | None = None,
) -> dict:
    kinds = declared_kinds or [
        infer_column_kind([row[i] for row in rows]) for i in range(len(header))
    ]
    descriptor = TableDescriptor(
        source_name=source,
        table_name=table,
        columns=tuple(zip(header, kinds)),
        row_count=len(rows),
        source_kind="sql-dump" if declared_kinds else "delimited-file",
    )
    relpath = f"{source}/{table}.csv"
    target = lake_root / relpath
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    entity = catalog.create_entity(
        "table",
        table_qualified_name(source, table),
        {
            "qualifiedName": table_qualified_name(source, table),
            "name": table,
            "source": source,
            "columns": [f"{n}:{k}" for n, k in descriptor.columns],
            "row_count": descriptor.row_count,
        },
        actor,
        storage=relpath,
    )
    process = catalog.record_process(
        f"ingest {table}",
        "ingestion",
        [],
        [entity.entity_id],
        actor,
        {"source_uri": source_uri},
    )
    return {"descriptor": descriptor, "entity": entity, "process": process}


def read_delimited(path: Path, delimiter: str = ",") -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            rows = list(reader)
    except OSError as exc:
        raise Unreadable(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise IngestParseError(f"{path} is not UTF-8 text: {exc}")
    if not rows:
        raise IngestParseError("delimited file needs a header row")
    header = [h.strip() for h in rows[0]]
    if not header or any(not h for h in header) or len(set(header)) != len(header):
        raise IngestParseError("header row must name each column uniquely", line=1)
    width = len(header)
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise IngestParseError(f"row has {len(row)} cells, expected {width}", line=i)
        body.append(row)
    return header, body


def ingest_table(
    catalog: Catalog,
    lake_root: Path | str,
    source: str,
    path: Path | str,
    actor: str,
) -> list[dict]:
    """Ingest a delimited file or a restricted SQL dump; one entity + one
    ingestion process per table. Rows land under the managed lake layout."""
    lake_root = Path(lake_root)
    path = Path(path)
    if path.suffix.lower() == ".sql":
        tables = parse_sql_dump(path)
        return [
            _register_table(
                catalog,
                lake_root,
                source,
                name,
                header,
                rows,
                actor,
                path.resolve().as_uri(),
                declared_kinds=kinds,
            )
            for name, header, kinds, rows in tables
        ]
    delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
    header, rows = read_delimited(path, delimiter)
    return [
        _register_table(
            catalog, lake_root, source, path.stem, header, rows, actor, path.resolve().as_uri()
        )
    ]


# --- restricted SQL dump parsing -------------------------------------------------------

_SQL_KIND_MAP = (
    (("INT", "INTEGER", "BIGINT", "SMALLINT", "TINYINT", "SERIAL"), "int"),
    (("FLOAT", "DOUBLE", "REAL", "DECIMAL", "NUMERIC"), "float"),
    (("BOOL", "BOOLEAN"), "boolean"),
    (("DATE", "DATETIME", "TIMESTAMP"), "date"),
)

_CONSTRAINT_STARTERS = ("PRIMARY", "FOREIGN", "UNIQUE", "CONSTRAINT", "KEY", "CHECK", "INDEX")


def _sql_kind(type_text: str) -> str:
    base = type_text.split("(", 1)[0].strip().upper()
    for names, kind in _SQL_KIND_MAP:
        if base in names:
            return kind
    return "string"


def _split_statements(text: str) -> list[tuple[int, str]]:
    """Split on ';' outside quotes; returns (starting line, statement text)."""
    statements = []
    buf: list[str] = []
    line = 1
    start_line = 1
    in_quote = False
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
        if in_quote:
            buf.append(ch)
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    buf.append("'")
                    i += 1
                else:
                    in_quote = False
        elif ch == "'":
            in_quote = True
            buf.append(ch)
        elif ch == ";":
            stmt = "".join(buf).strip()
            if stmt:
                statements.append((start_line, stmt))
            buf = []
            start_line = line
        else:
            if not buf and not ch.isspace():
                start_line = line
            buf.append(ch)
        i += 1
    tail = "".join(buf).strip()
    if tail:
        statements.append((start_line, tail))
    return statements


def _split_top_level_commas(text: str) -> list[str]:
    parts, buf, depth, in_quote = [], [], 0, False
    for ch in text:
        if in_quote:
            buf.append(ch)
            if ch == "'":
                in_quote = False
            continue
        if ch == "'":
            in_quote = True
            buf.append(ch)
        elif ch == "(":
            depth += 1
            buf.append(ch)
        elif ch == ")":
            depth -= 1
            buf.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    if buf:
        parts.append("".join(buf).strip())
    return parts


_CREATE_RE = re.compile(r"CREATE\s+TABLE\s+(?:IF\s+NOT\s+EXISTS\s+)?([\w.]+)\s*\((.*)\)\s*\Z", re.I | re.S)
_INSERT_RE = re.compile(
    r"INSERT\s+INTO\s+([\w.]+)\s*(?:\(([^)]*)\))?\s*VALUES\s*(.*)\Z", re.I | re.S
)


def _parse_sql_value(token: str, line: int):
    token = token.strip()
    if token.upper() == "NULL":
        return ""
    if token.startswith("'"):
        if not token.endswith("'") or len(token) < 2:
            raise IngestParseError(f"unterminated string literal {token!r}", line=line)
        return token[1:-1].replace("''", "'")
    if token.upper() in ("TRUE", "FALSE"):
        return token.lower()
    if _INT_RE.match(token):
        return token
    try:
        float(token)
        return token
    except ValueError:
        raise IngestParseError(f"unsupported SQL literal {token!r}", line=line)


def parse_sql_dump(path: Path) -> list[tuple[str, list[str], list[str], list[list[str]]]]:
    """Parse a dump restricted to CREATE TABLE / INSERT statements.

    Returns (table, header, column kinds, rows) per table, in CREATE order.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise Unreadable(f"cannot read {path}: {exc}") from exc
    text = re.sub(r"--[^\n]*", "", text)
    tables: dict[str, tuple[list[str], list[str], list[list[str]]]] = {}
    order: list[str] = []
    for line, stmt in _split_statements(text):
        created = _CREATE_RE.match(stmt)
        if created:
            name = created.group(1).split(".")[-1]
            if name in tables:
                raise IngestParseError(f"table {name!r} created twice", line=line)
            header: list[str] = []
            kinds: list[str] = []
            for part in _split_top_level_commas(created.group(2)):
                first = part.split(None, 1)[0] if part else ""
                if first.upper() in _CONSTRAINT_STARTERS:
                    continue
                bits = part.split(None, 1)
                if len(bits) != 2:
                    raise IngestParseError(f"column definition {part!r} needs a type", line=line)
                header.append(bits[0].strip('`"'))
                kinds.append(_sql_kind(bits[1]))
            if not header:
                raise IngestParseError(f"table {name!r} defines no columns", line=line)
            tables[name] = (header, kinds, [])
            order.append(name)
            continue
        inserted = _INSERT_RE.match(stmt)
        if inserted:
            name = inserted.group(1).split(".")[-1]
            if name not in tables:
                raise IngestParseError(f"INSERT into unknown table {name!r}", line=line)
            header, kinds, rows = tables[name]
            cols = (
                [c.strip().strip('`"') for c in inserted.group(2).split(",")]
                if inserted.group(2)
                else list(header)
            )
            unknown = set(cols) - set(header)
            if unknown:
                raise IngestParseError(f"INSERT names unknown columns {sorted(unknown)}", line=line)
            for tup in _split_top_level_commas(inserted.group(3).strip()):
                if not (tup.startswith("(") and tup.endswith(")")):
                    raise IngestParseError(f"malformed VALUES tuple {tup!r}", line=line)
                values = [
                    _parse_sql_value(v, line) for v in _split_top_level_commas(tup[1:-1])
                ]
                if len(values) != len(cols):
                    raise IngestParseError(
                        f"tuple has {len(values)} values for {len(cols)} columns", line=line
                    )
                by_name = dict(zip(cols, values))
                rows.append([by_name.get(h, "") for h in header])
            continue
        raise IngestParseError(
            f"only CREATE TABLE and INSERT are supported, got {stmt.split(None, 1)[0]!r}",
            line=line,
        )
    return [(name, *tables[name]) for name in order]

"""Distillation and insights at desk scale.

Quality reports count duplicates, NULLs and type violations over a table's
managed rows; encoding normalization rewrites file bytes to UTF-8 keeping the
original; transforms (select / inner join) produce new tables whose metadata
and lineage register through the same delivery primitive the hooks use, so
registration can ride the async bus and never block the data work.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from . import query as querylang
from .catalog import Catalog
from .errors import (
    AccessDenied,
    DecodeError,
    DuplicateOutput,
    NoData,
    PayloadInvalid,
    UnknownColumn,
    UnknownTable,
    UnsupportedEncoding,
)
from .ingest import (
    EventBus,
    HookEvent,
    apply_hook,
    is_null_text,
    parse_cell,
    table_qualified_name,
)
from .medal import DataEntity, parse_iso_date

ENCODING_ALIASES = {
    "ascii": "ascii",
    "us-ascii": "ascii",
    "utf-8": "utf-8",
    "utf8": "utf-8",
    "latin-1": "latin-1",
    "latin1": "latin-1",
    "iso-8859-1": "latin-1",
    "iso-8859-15": "iso8859_15",
    "iso8859-15": "iso8859_15",
}


def pct(count: int, total: int) -> float:
    """count/total*100 at exactly two decimals, half-up, 0.00 for empty."""
    if total == 0:
        return 0.0
    exact = Decimal(count) * 100 / Decimal(total)
    return float(exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ColumnQuality:
    name: str
    kind: str
    null_count: int
    null_pct: float
    type_violations: int
    violation_pct: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "null_count": self.null_count,
            "null_pct": self.null_pct,
            "type_violations": self.type_violations,
            "violation_pct": self.violation_pct,
        }


@dataclass(frozen=True)
class QualityReport:
    table_entity_id: str
    row_count: int
    duplicate_rows: int
    duplicate_pct: float
    columns: tuple[ColumnQuality, ...]
    computed_at: str

    def to_dict(self) -> dict:
        return {
            "table_entity_id": self.table_entity_id,
            "row_count": self.row_count,
            "duplicate_rows": self.duplicate_rows,
            "duplicate_pct": self.duplicate_pct,
            "columns": [c.to_dict() for c in self.columns],
            "computed_at": self.computed_at,
        }


def _table_columns(entity: DataEntity) -> list[tuple[str, str]]:
    out = []
    for spec in entity.attributes.get("columns", []):
        name, _, kind = spec.rpartition(":")
        out.append((name, kind))
    return out


def load_table(catalog: Catalog, lake_root: Path | str, entity_id: str):
    """Resolve a table entity to (entity, header, kinds, rows) from managed storage."""
    entity = catalog.get_entity(entity_id)
    if entity.type_name != "table":
        raise UnknownTable(f"{entity.qualified_name} is not a table entity")
    relpath = catalog.storage_path(entity_id)
    if relpath is None:
        raise NoData(f"{entity.qualified_name} has no managed rows")
    path = Path(lake_root) / relpath
    if not path.exists():
        raise NoData(f"managed rows for {entity.qualified_name} are missing")
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0] if rows else []
    declared = dict(_table_columns(entity))
    kinds = [declared.get(col, "string") for col in header]
    return entity, header, kinds, [r for r in rows[1:]]


# --- quality -------------------------------------------------------------------


def quality_report(
    catalog: Catalog, lake_root: Path | str, entity_id: str, actor: str, persist: bool = True
) -> QualityReport:
    entity, header, kinds, rows = load_table(catalog, lake_root, entity_id)
    trimmed = [tuple(cell.rstrip() for cell in row) for row in rows]
    duplicate_rows = len(trimmed) - len(set(trimmed))
    columns = []
    for i, (name, kind) in enumerate(zip(header, kinds)):
        cells = [row[i] for row in trimmed]
        nulls = sum(1 for c in cells if is_null_text(c))
        violations = sum(
            1 for c in cells if not is_null_text(c) and parse_cell(c, kind) is None
        )
        columns.append(
            ColumnQuality(
                name, kind, nulls, pct(nulls, len(rows)), violations, pct(violations, len(rows))
            )
        )
    report = QualityReport(
        table_entity_id=entity_id,
        row_count=len(rows),
        duplicate_rows=duplicate_rows,
        duplicate_pct=pct(duplicate_rows, len(rows)),
        columns=tuple(columns),
        computed_at=catalog.now_iso(),
    )
    if persist:
        _persist_report(catalog, entity, report, actor)
    return report


def _persist_report(catalog: Catalog, table: DataEntity, report: QualityReport, actor: str):
    qn = f"{table.qualified_name}#quality"
    attributes = {
        "qualifiedName": qn,
        "name": f"{table.display_name()} quality report",
        "table": table.qualified_name,
        "row_count": report.row_count,
        "duplicate_rows": report.duplicate_rows,
        "duplicate_pct": report.duplicate_pct,
        "columns": [json.dumps(c.to_dict(), ensure_ascii=False) for c in report.columns],
        "computed_at": report.computed_at,
    }
    existing = catalog.entity_by_qualified_name(qn)
    if existing is not None:
        catalog.update_entity(existing.entity_id, attributes, actor)
    else:
        created = catalog.create_entity("quality_report", qn, attributes, actor)
        catalog.create_link(table.entity_id, created.entity_id, "quality-report")


# --- encoding normalization -------------------------------------------------------


def normalize_encoding(
    catalog: Catalog,
    lake_root: Path | str,
    entity_id: str,
    declared_encoding: str,
    actor: str,
) -> tuple[DataEntity, object]:
    """Decode under the declared encoding, re-encode as UTF-8 alongside the
    original, and link source to output through a distillation process."""
    codec = ENCODING_ALIASES.get(declared_encoding.lower())
    if codec is None:
        raise UnsupportedEncoding(f"{declared_encoding!r} is not a supported source encoding")
    entity = catalog.get_entity(entity_id)
    relpath = catalog.storage_path(entity_id)
    if relpath is None:
        raise NoData(f"{entity.qualified_name} has no managed bytes")
    source_path = Path(lake_root) / relpath
    if not source_path.exists():
        raise NoData(f"managed bytes for {entity.qualified_name} are missing")
    raw = source_path.read_bytes()
    try:
        text = raw.decode(codec)
    except UnicodeDecodeError as exc:
        raise DecodeError(exc.start) from exc
    encoded = text.encode("utf-8")
    out_rel = f"{relpath}.utf8"
    out_path = Path(lake_root) / out_rel
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(encoded)
    out_qn = f"{entity.qualified_name}.utf8"
    attributes = {
        "qualifiedName": out_qn,
        "name": f"{entity.display_name()}.utf8",
        "path": entity.qualified_name.rsplit("/", 1)[0],
        "user": actor,
        "owner": actor,
        "creation_time": catalog.now_iso()[:10],
        "numberOfReplicas": 0,
        "fileSize": len(encoded),
        "isFile": True,
    }
    if isinstance(entity.attributes.get("group"), str):
        attributes["group"] = entity.attributes["group"]
    output = catalog.create_entity("hdfs_path", out_qn, attributes, actor, storage=out_rel)
    process = catalog.record_process(
        f"normalize {entity.display_name()} to utf-8",
        "distillation",
        [entity.entity_id],
        [output.entity_id],
        actor,
        {"source_encoding": declared_encoding, "target_encoding": "utf-8"},
    )
    return output, process


# --- transforms ----------------------------------------------------------------------


def _predicate_tree(text: str):
    node = querylang.parse(text)

    def assert_attr_only(n):
        if isinstance(n, (querylang.And, querylang.Or)):
            for child in n.children:
                assert_attr_only(child)
        elif isinstance(n, querylang.Not):
            assert_attr_only(n.child)
        elif not isinstance(n, querylang.AttrPredicate):
            raise PayloadInvalid("row predicates support attribute comparisons only")

    assert_attr_only(node)
    return node


def row_matches(node, row: dict[str, str], kinds: dict[str, str]) -> bool:
    if isinstance(node, querylang.And):
        return all(row_matches(c, row, kinds) for c in node.children)
    if isinstance(node, querylang.Or):
        return any(row_matches(c, row, kinds) for c in node.children)
    if isinstance(node, querylang.Not):
        return not row_matches(node.child, row, kinds)
    pred: querylang.AttrPredicate = node
    kind = kinds.get(pred.attr)
    cell = row.get(pred.attr)
    if kind is None or cell is None or is_null_text(cell):
        return False
    lit = pred.literal
    if pred.op == "CONTAINS":
        return kind == "string" and str(lit.value).lower() in cell.lower()
    if kind == "string" and lit.kind == "string":
        left, right = cell, lit.value
    elif kind in ("int", "float") and lit.kind in ("int", "float"):
        parsed = parse_cell(cell, "float")
        if parsed is None:
            return False
        left, right = parsed, float(lit.value)
    elif kind == "date" and lit.kind == "date":
        left, right = parse_iso_date(cell.strip()), parse_iso_date(str(lit.value))
        if left is None or right is None:
            return False
    elif kind == "boolean" and lit.kind == "boolean":
        parsed = parse_cell(cell, "boolean")
        if parsed is None or pred.op not in ("=", "!="):
            return False
        left, right = parsed, lit.value
    else:
        return False
    return {
        "=": left == right,
        "!=": left != right,
        ">": left > right,
        ">=": left >= right,
        "<": left < right,
        "<=": left <= right,
    }[pred.op]


@dataclass(frozen=True)
class TransformResult:
    output_qualified_name: str
    row_count: int
    columns: tuple[tuple[str, str], ...]
    delivery_id: str | None
    inputs: tuple[str, ...]  # input entity ids


def _resolve_table(catalog: Catalog, name: str) -> DataEntity:
    if name.startswith("lake://"):
        entity = catalog.entity_by_qualified_name(name)
        if entity is None or entity.type_name != "table":
            raise UnknownTable(f"no table {name!r}")
        return entity
    hits = [
        e
        for e in catalog.active_entities()
        if e.type_name == "table" and e.display_name() == name
    ]
    if not hits:
        raise UnknownTable(f"no table named {name!r}")
    if len(hits) > 1:
        raise UnknownTable(f"table name {name!r} is ambiguous; use its qualified name")
    return hits[0]


def transform(
    catalog: Catalog,
    lake_root: Path | str,
    spec: dict,
    actor: str,
    bus: EventBus | None = None,
) -> TransformResult:
    """Run a select or inner-join spec; rows are written synchronously while
    metadata/lineage registration goes through the bus when one is attached."""
    lake_root = Path(lake_root)
    kind = spec.get("kind")
    if kind == "select":
        inputs = [_resolve_table(catalog, spec["input"])]
    elif kind == "join":
        raw_inputs = spec.get("inputs", [])
        if len(raw_inputs) < 2:
            raise PayloadInvalid("a join needs at least two inputs")
        inputs = [_resolve_table(catalog, raw["table"]) for raw in raw_inputs]
    else:
        raise PayloadInvalid("spec kind must be select or join")
    output_name = spec.get("output")
    if not output_name:
        raise PayloadInvalid("spec needs an output table name")

    verdict = catalog.two_stage_check(
        actor, "transform", "create", [e.qualified_name for e in inputs]
    )
    if not verdict.allowed:
        raise AccessDenied(verdict.reason, stage=verdict.stage)

    source = inputs[0].attributes.get("source", "lake")
    out_qn = table_qualified_name(source, output_name)
    if catalog.entity_by_qualified_name(out_qn) is not None:
        raise DuplicateOutput(f"{out_qn} already exists")

    loaded = [load_table(catalog, lake_root, e.entity_id) for e in inputs]
    if kind == "select":
        header, kinds, rows = _run_select(spec, *loaded[0][1:])
    else:
        header, kinds, rows = _run_join(spec["inputs"], loaded)

    relpath = f"{source}/{output_name}.csv"
    target = lake_root / relpath
    target.parent.mkdir(parents=True, exist_ok=True)
    import csv

    with open(target, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

    entry = {
        "typeName": "table",
        "createdBy": actor,
        "attributes": {
            "qualifiedName": out_qn,
            "name": output_name,
            "source": source,
            "columns": [f"{n}:{k}" for n, k in zip(header, kinds)],
            "row_count": len(rows),
        },
    }
    process_entry = {
        "name": f"{kind} -> {output_name}",
        "kind": "transformation",
        "input_qns": [e.qualified_name for e in inputs],
        "output_qns": [out_qn],
        "executed_by": actor,
        "executed_at": catalog.now_iso(),
        "parameters": {"spec": json.dumps(spec, ensure_ascii=False, sort_keys=True)},
    }
    hook = HookEvent(
        entries=[entry],
        source="transform",
        storage_paths=[relpath],
        process_entries=[process_entry],
    )
    if bus is not None:
        bus.publish(hook)
        delivery = hook.delivery_id
    else:
        apply_hook(catalog, hook)
        delivery = None
    return TransformResult(
        output_qualified_name=out_qn,
        row_count=len(rows),
        columns=tuple(zip(header, kinds)),
        delivery_id=delivery,
        inputs=tuple(e.entity_id for e in inputs),
    )


def _run_select(spec: dict, header: list[str], kinds: list[str], rows: list[list[str]]):
    columns = spec.get("columns") or list(header)
    missing = [c for c in columns if c not in header]
    if missing:
        raise UnknownColumn(f"unknown columns {missing}")
    where = spec.get("where")
    predicate = _predicate_tree(where) if where else None
    kind_of = dict(zip(header, kinds))
    keep_idx = [header.index(c) for c in columns]
    out_rows = []
    for row in rows:
        if predicate is not None:
            record = dict(zip(header, row))
            if not row_matches(predicate, record, kind_of):
                continue
        out_rows.append([row[i] for i in keep_idx])
    return columns, [kind_of[c] for c in columns], out_rows


def _run_join(raw_inputs: list[dict], loaded) -> tuple[list[str], list[str], list[list[str]]]:
    """Left-deep inner joins; each later input joins the accumulated rows on
    accumulated[left] == input[key] (left defaults to the key name)."""
    _, header, kinds, rows = loaded[0]
    header, kinds, rows = list(header), list(kinds), [list(r) for r in rows]
    for raw, (entity, in_header, in_kinds, in_rows) in zip(raw_inputs[1:], loaded[1:]):
        key = raw.get("key")
        if not key:
            raise PayloadInvalid(f"join input {entity.display_name()!r} needs a key")
        if key not in in_header:
            raise UnknownColumn(f"{entity.display_name()} has no column {key!r}")
        left = raw.get("left", key)
        if left not in header:
            raise UnknownColumn(f"accumulated result has no column {left!r}")
        renamed = [
            f"{entity.display_name()}_{col}" if col in header else col for col in in_header
        ]
        left_idx = header.index(left)
        key_idx = in_header.index(key)
        by_key: dict[str, list[list[str]]] = {}
        for row in in_rows:
            by_key.setdefault(row[key_idx].strip(), []).append(row)
        joined = []
        for row in rows:
            for match in by_key.get(row[left_idx].strip(), ()):
                joined.append(row + list(match))
        header = header + renamed
        kinds = kinds + list(in_kinds)
        rows = joined
    return header, kinds, rows

"""The catalog: event-sourced state, single writer, every operation.

All mutations become events appended to the store's log before they touch the
in-memory state, so replaying the log from empty always reproduces the live
catalog. Reads never take the writer lock; they work off atomic snapshots of
the state dictionaries (single-writer discipline plus immutable values).
"""

from __future__ import annotations

import threading
import uuid
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from . import query as querylang
from . import security
from .errors import (
    AccessDenied,
    CursorInvalid,
    CycleDetected,
    DuplicateClassification,
    DuplicatePolicy,
    DuplicatePrincipal,
    DuplicateQualifiedName,
    DuplicateRelation,
    DuplicateRole,
    DuplicateThesaurus,
    DuplicateType,
    DuplicateLabel,
    InputsEqualOutputs,
    InvariantViolation,
    NotFound,
    ParentIsTerm,
    PayloadInvalid,
    SelfRelation,
    CrossThesaurusParent,
    UnknownEntity,
    UnknownParent,
    UnknownTerm,
    UnknownThesaurus,
    UnknownType,
    ValidationFailed,
)
from .lineage import (
    PROCESS_KINDS,
    LineageSubgraph,
    ProcessNode,
    SubgraphNode,
    downstream_ids,
    upstream_ids,
    would_cycle,
)
from .medal import (
    Classification,
    DataEntity,
    DataEntityType,
    Link,
    build_entity_type,
    validate_entity,
)
from .security import Decision, Policy, Principal, Role
from .store import CatalogEvent, CatalogIndexes, EventLog, read_snapshot, write_snapshot
from .thesaurus import (
    RELATION_KINDS,
    Category,
    ParsedThesaurus,
    Term,
    Thesaurus,
    expand,
    export_interchange,
    parse_interchange,
)

BUILTIN_TYPES: list[dict] = [
    {
        "type_name": "hdfs_path",
        "attributes": [
            {"name": "qualifiedName", "type": "string", "required": True},
            {"name": "name", "type": "string", "required": True},
            {"name": "path", "type": "string", "required": True},
            {"name": "user", "type": "string"},
            {"name": "group", "type": "string"},
            {"name": "creation_time", "type": "date"},
            {"name": "owner", "type": "string"},
            {"name": "numberOfReplicas", "type": "int"},
            {"name": "fileSize", "type": "int"},
            {"name": "isFile", "type": "boolean"},
        ],
    },
    {
        "type_name": "table",
        "attributes": [
            {"name": "qualifiedName", "type": "string", "required": True},
            {"name": "name", "type": "string", "required": True},
            {"name": "source", "type": "string", "required": True},
            {"name": "columns", "type": "array<string>", "required": True},
            {"name": "row_count", "type": "int", "required": True},
        ],
    },
    {
        "type_name": "quality_report",
        "attributes": [
            {"name": "qualifiedName", "type": "string", "required": True},
            {"name": "name", "type": "string", "required": True},
            {"name": "table", "type": "string", "required": True},
            {"name": "row_count", "type": "int", "required": True},
            {"name": "duplicate_rows", "type": "int", "required": True},
            {"name": "duplicate_pct", "type": "float", "required": True},
            {"name": "columns", "type": "array<string>", "required": True},
            {"name": "computed_at", "type": "date", "required": True},
        ],
    },
]


def merge_attributes(base: dict, patch: dict) -> dict:
    """Apply a patch map; None removes the attribute."""
    out = dict(base)
    for key, value in patch.items():
        if value is None:
            out.pop(key, None)
        else:
            out[key] = value
    return out


@dataclass
class CatalogState:
    """Every registry the catalog owns, plus derived maps (not serialized)."""

    types: dict[str, dict[int, DataEntityType]] = field(default_factory=dict)
    type_heads: dict[str, int] = field(default_factory=dict)
    entities: dict[str, DataEntity] = field(default_factory=dict)
    classifications: dict[str, Classification] = field(default_factory=dict)
    memberships: dict[str, set[str]] = field(default_factory=dict)
    links: dict[str, Link] = field(default_factory=dict)
    thesauri: dict[str, Thesaurus] = field(default_factory=dict)
    categories: dict[str, Category] = field(default_factory=dict)
    terms: dict[str, Term] = field(default_factory=dict)
    term_relations: dict[str, dict[str, str]] = field(default_factory=dict)
    associations: dict[str, set[str]] = field(default_factory=dict)
    processes: dict[str, ProcessNode] = field(default_factory=dict)
    principals: dict[str, Principal] = field(default_factory=dict)
    roles: dict[str, Role] = field(default_factory=dict)
    policies: dict[str, Policy] = field(default_factory=dict)
    storage: dict[str, str] = field(default_factory=dict)

    # derived (rebuilt on load, maintained on apply)
    classification_children: dict[str, set[str]] = field(default_factory=dict)
    category_children: dict[tuple[str, str | None], dict[str, str]] = field(default_factory=dict)
    term_children: dict[str, dict[str, str]] = field(default_factory=dict)
    term_labels: dict[str, set[str]] = field(default_factory=dict)
    entity_terms: dict[str, set[str]] = field(default_factory=dict)
    endpoint_links: dict[tuple[str, str], set[str]] = field(default_factory=dict)
    producers: dict[str, set[str]] = field(default_factory=dict)
    consumers: dict[str, set[str]] = field(default_factory=dict)

    def schema_for(self, type_name: str, version: int) -> DataEntityType:
        return self.types[type_name][version]

    def schema_of(self, entity: DataEntity) -> DataEntityType:
        return self.types[entity.type_name][entity.type_version]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        pairs = set()
        for a, peers in self.term_relations.items():
            for b, kind in peers.items():
                pairs.add((min(a, b), max(a, b), kind))
        return {
            "types": {
                name: {str(v): t.to_dict() for v, t in sorted(versions.items())}
                for name, versions in self.types.items()
            },
            "entities": {eid: e.to_dict() for eid, e in self.entities.items()},
            "classifications": {n: c.to_dict() for n, c in self.classifications.items()},
            "memberships": {
                eid: sorted(names) for eid, names in self.memberships.items() if names
            },
            "links": {lid: l.to_dict() for lid, l in self.links.items()},
            "thesauri": {tid: t.to_dict() for tid, t in self.thesauri.items()},
            "categories": {cid: c.to_dict() for cid, c in self.categories.items()},
            "terms": {tid: t.to_dict() for tid, t in self.terms.items()},
            "relations": [
                {"from": a, "to": b, "relation": kind} for a, b, kind in sorted(pairs)
            ],
            "associations": {
                tid: sorted(eids) for tid, eids in self.associations.items() if eids
            },
            "processes": {pid: p.to_dict() for pid, p in self.processes.items()},
            "principals": {n: p.to_dict() for n, p in self.principals.items()},
            "roles": {n: r.to_dict() for n, r in self.roles.items()},
            "policies": [p.to_dict() for p in self.policies.values()],
            "storage": dict(self.storage),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> CatalogState:
        state = cls()
        for name, versions in raw.get("types", {}).items():
            for v, t in versions.items():
                state._put_type(DataEntityType.from_dict(t))
        for eid, e in raw.get("entities", {}).items():
            state.entities[eid] = DataEntity.from_dict(e)
        for n, c in raw.get("classifications", {}).items():
            state._put_classification(Classification(n, c.get("description", ""), c.get("parent")))
        for eid, names in raw.get("memberships", {}).items():
            state.memberships[eid] = set(names)
        for lid, l in raw.get("links", {}).items():
            state._put_link(
                Link(
                    lid,
                    l["from"]["kind"],
                    l["from"]["key"],
                    l["to"]["kind"],
                    l["to"]["key"],
                    l["label"],
                    dict(l.get("metadata", {})),
                )
            )
        for tid, t in raw.get("thesauri", {}).items():
            state.thesauri[tid] = Thesaurus(tid, t["title"], t["language"])
        for cid, c in raw.get("categories", {}).items():
            state._put_category(Category(cid, c["thesaurus_id"], c["label"], c.get("parent")))
        for tid, t in raw.get("terms", {}).items():
            state._put_term(Term(tid, t["thesaurus_id"], t["label"], t["parent"]))
        for rel in raw.get("relations", []):
            state._put_relation(rel["from"], rel["to"], rel["relation"])
        for tid, eids in raw.get("associations", {}).items():
            for eid in eids:
                state._put_association(eid, tid)
        for pid, p in raw.get("processes", {}).items():
            state._put_process(ProcessNode.from_dict(p))
        for n, p in raw.get("principals", {}).items():
            state.principals[n] = Principal(n, frozenset(p.get("groups", [])))
        for n, r in raw.get("roles", {}).items():
            state.roles[n] = Role(n, frozenset(r.get("members", [])))
        for p in raw.get("policies", []):
            policy = Policy.from_dict(p)
            state.policies[policy.policy_id] = policy
        state.storage = dict(raw.get("storage", {}))
        return state

    # -- low-level mutators keeping derived maps coherent ---------------------

    def _put_type(self, etype: DataEntityType) -> None:
        self.types.setdefault(etype.type_name, {})[etype.version] = etype
        head = self.type_heads.get(etype.type_name, 0)
        self.type_heads[etype.type_name] = max(head, etype.version)

    def _put_classification(self, c: Classification) -> None:
        self.classifications[c.name] = c
        if c.parent:
            self.classification_children.setdefault(c.parent, set()).add(c.name)

    def _put_link(self, link: Link) -> None:
        self.links[link.link_id] = link
        self.endpoint_links.setdefault((link.from_kind, link.from_key), set()).add(link.link_id)
        self.endpoint_links.setdefault((link.to_kind, link.to_key), set()).add(link.link_id)

    def _put_category(self, cat: Category) -> None:
        self.categories[cat.category_id] = cat
        siblings = self.category_children.setdefault((cat.thesaurus_id, cat.parent), {})
        siblings[cat.label] = cat.category_id

    def _put_term(self, term: Term) -> None:
        self.terms[term.term_id] = term
        self.term_children.setdefault(term.parent, {})[term.label] = term.term_id
        self.term_labels.setdefault(term.label, set()).add(term.term_id)

    def _put_relation(self, a: str, b: str, kind: str) -> None:
        self.term_relations.setdefault(a, {})[b] = kind
        self.term_relations.setdefault(b, {})[a] = kind

    def _put_association(self, entity_id: str, term_id: str) -> None:
        self.associations.setdefault(term_id, set()).add(entity_id)
        self.entity_terms.setdefault(entity_id, set()).add(term_id)

    def _put_process(self, process: ProcessNode) -> None:
        self.processes[process.process_id] = process
        for out in process.outputs:
            self.producers.setdefault(out, set()).add(process.process_id)
        for inp in process.inputs:
            self.consumers.setdefault(inp, set()).add(process.process_id)

    # -- event application -----------------------------------------------------

    def apply(self, event: CatalogEvent, indexes: CatalogIndexes) -> None:
        """Apply a committed event; events are facts and are not revalidated."""
        payload = event.payload
        kind = event.kind
        if kind == "type-registered":
            self._put_type(DataEntityType.from_dict(payload["type"]))
        elif kind == "entity-created":
            entity = DataEntity.from_dict(payload["entity"])
            self.entities[entity.entity_id] = entity
            if payload.get("storage"):
                self.storage[entity.entity_id] = payload["storage"]
            indexes.add_entity(entity, self.schema_of(entity))
        elif kind == "entity-updated":
            old = self.entities[payload["entity_id"]]
            updated = replace(old, attributes=merge_attributes(old.attributes, payload["patch"]))
            self.entities[updated.entity_id] = updated
            schema = self.schema_of(old)
            indexes.remove_entity(old, schema)
            indexes.add_entity(updated, schema)
        elif kind == "entity-deleted":
            old = self.entities[payload["entity_id"]]
            tombstone = replace(old, status="deleted")
            self.entities[tombstone.entity_id] = tombstone
            indexes.remove_entity(old, self.schema_of(old))
            indexes.purge_entity(tombstone.entity_id)
        elif kind == "classification-defined":
            self._put_classification(
                Classification(payload["name"], payload.get("description", ""), payload.get("parent"))
            )
        elif kind == "tagged":
            eid, name = payload["entity_id"], payload["classification"]
            self.memberships.setdefault(eid, set()).add(name)
            entity = self.entities.get(eid)
            if entity is not None and entity.active:
                indexes.tag(eid, name)
        elif kind == "untagged":
            eid, name = payload["entity_id"], payload["classification"]
            self.memberships.get(eid, set()).discard(name)
            indexes.untag(eid, name)
        elif kind == "link-created":
            raw = payload["link"]
            self._put_link(
                Link(
                    raw["link_id"],
                    raw["from"]["kind"],
                    raw["from"]["key"],
                    raw["to"]["kind"],
                    raw["to"]["key"],
                    raw["label"],
                    dict(raw.get("metadata", {})),
                )
            )
        elif kind == "thesaurus-created":
            self.thesauri[payload["thesaurus_id"]] = Thesaurus(
                payload["thesaurus_id"], payload["title"], payload["language"]
            )
        elif kind == "thesaurus-category-added":
            raw = payload["category"]
            self._put_category(
                Category(raw["category_id"], raw["thesaurus_id"], raw["label"], raw.get("parent"))
            )
        elif kind == "term-added":
            raw = payload["term"]
            self._put_term(Term(raw["term_id"], raw["thesaurus_id"], raw["label"], raw["parent"]))
        elif kind == "relation-created":
            self._put_relation(payload["from"], payload["to"], payload["relation"])
        elif kind == "association-created":
            eid, tid = payload["entity_id"], payload["term_id"]
            self._put_association(eid, tid)
            entity = self.entities.get(eid)
            if entity is not None and entity.active:
                indexes.associate(eid, tid)
        elif kind == "process-recorded":
            self._put_process(ProcessNode.from_dict(payload["process"]))
        elif kind == "principal-created":
            self.principals[payload["name"]] = Principal(
                payload["name"], frozenset(payload.get("groups", []))
            )
        elif kind == "principal-group-assigned":
            old_p = self.principals[payload["name"]]
            self.principals[payload["name"]] = Principal(
                old_p.name, old_p.groups | {payload["group"]}
            )
        elif kind == "role-created":
            self.roles[payload["name"]] = Role(payload["name"], frozenset(payload["members"]))
        elif kind == "policy-put":
            policy = Policy.from_dict(payload["policy"])
            self.policies[policy.policy_id] = policy
        elif kind == "policy-revoked":
            self.policies.pop(payload["policy_id"], None)
        else:  # pragma: no cover - append() rejects unknown kinds
            raise PayloadInvalid(f"unknown event kind {kind!r}")


def rebuild_indexes(state: CatalogState) -> CatalogIndexes:
    indexes = CatalogIndexes()
    for entity in state.entities.values():
        if entity.active:
            indexes.add_entity(entity, state.schema_of(entity))
            for name in state.memberships.get(entity.entity_id, ()):
                indexes.tag(entity.entity_id, name)
            for term_id in state.entity_terms.get(entity.entity_id, ()):
                indexes.associate(entity.entity_id, term_id)
    return indexes


class Catalog:
    """Facade over the event log, the state and the indexes.

    One writer lock serializes all mutations; readers work on atomic copies
    of the state dicts and never block the writer.
    """

    def __init__(
        self,
        root: Path | str,
        fsync: bool = False,
        snapshot_every: int | None = 10_000,
        clock: Callable[[], datetime] | None = None,
        use_snapshot: bool = True,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.snapshot_every = snapshot_every
        self.log = EventLog(self.root / "events.log", fsync=fsync)
        self._lock = threading.RLock()
        self.listeners: list[Callable[[CatalogEvent], None]] = []
        self.state = CatalogState()
        self.indexes = CatalogIndexes()
        self.applied_seq = 0
        snap_path = self.snapshot_path
        if use_snapshot and snap_path.exists():
            try:
                doc = read_snapshot(snap_path)
            except Exception:
                doc = None  # unusable snapshot: fall back to a full replay
            if doc is not None and doc["as_of_seq"] <= self.log.head_seq:
                self.state = CatalogState.from_dict(doc["state"])
                self.indexes = rebuild_indexes(self.state)
                self.applied_seq = doc["as_of_seq"]
        for event in self.log.iter_events(self.applied_seq + 1):
            self.state.apply(event, self.indexes)
            self.applied_seq = event.seq

    @property
    def snapshot_path(self) -> Path:
        return self.root / "snapshot.json"

    def now_iso(self) -> str:
        return self.clock().astimezone(timezone.utc).isoformat()

    def close(self) -> None:
        self.log.close()

    def add_listener(self, listener: Callable[[CatalogEvent], None]) -> None:
        self.listeners.append(listener)

    def _commit(self, kind: str, payload: dict, event_id: str | None = None) -> CatalogEvent:
        with self._lock:
            event = self.log.append(event_id or uuid.uuid4().hex, self.now_iso(), kind, payload)
            if event.seq <= self.applied_seq:
                return event  # idempotent redelivery: already applied
            self.state.apply(event, self.indexes)
            self.applied_seq = event.seq
            if self.snapshot_every and event.seq % self.snapshot_every == 0:
                self.snapshot()
            for listener in self.listeners:
                listener(event)
            return event

    # -- store surface ---------------------------------------------------------

    def snapshot(self) -> dict:
        with self._lock:
            return write_snapshot(self.snapshot_path, self.applied_seq, self.state.to_dict())

    def replay(self, from_seq: int = 0, base: CatalogState | None = None) -> CatalogState:
        """Rebuild state by applying events with seq > from_seq over ``base``.

        replay(0) on an empty base reproduces the live state exactly.
        """
        if from_seq > self.log.head_seq:
            raise PayloadInvalid(f"from_seq {from_seq} is beyond head {self.log.head_seq}")
        state = base if base is not None else CatalogState()
        indexes = rebuild_indexes(state)
        for event in self.log.iter_events(from_seq + 1):
            state.apply(event, indexes)
        return state

    def state_dict(self) -> dict:
        with self._lock:
            return self.state.to_dict()

    def index_lookup(self, kind: str, key) -> set[str]:
        return self.indexes.lookup(kind, key)

    # -- medal-core: types ------------------------------------------------------

    def register_type(self, etype: DataEntityType) -> dict:
        with self._lock:
            head = self.state.type_heads.get(etype.type_name, 0)
            if etype.version <= head:
                raise DuplicateType(
                    f"type {etype.type_name!r} already registered at version {head}"
                )
            self._commit("type-registered", {"type": etype.to_dict()})
            return {"type_name": etype.type_name, "version": etype.version}

    def register_type_dict(self, raw: dict) -> dict:
        """Wire-shaped registration; omitted version means head+1."""
        with self._lock:
            version = raw.get("version")
            if version is None:
                version = self.state.type_heads.get(raw.get("type_name", ""), 0) + 1
            etype = build_entity_type(
                raw.get("type_name", ""),
                raw.get("attributes", []),
                version=int(version),
                attribute_free=bool(raw.get("attribute_free", False)),
            )
            return self.register_type(etype)

    def ensure_builtin_types(self) -> None:
        with self._lock:
            for raw in BUILTIN_TYPES:
                if raw["type_name"] not in self.state.types:
                    self.register_type_dict(raw)

    def get_type(self, name: str, version: int | None = None) -> DataEntityType:
        versions = self.state.types.get(name)
        if not versions:
            raise UnknownType(f"no type named {name!r}")
        if version is None:
            return versions[self.state.type_heads[name]]
        if version not in versions:
            raise UnknownType(f"type {name!r} has no version {version}")
        return versions[version]

    def validate_record(self, attributes: dict, type_name: str, version: int | None = None):
        return validate_entity(attributes, self.get_type(type_name, version))

    # -- medal-core: entities ----------------------------------------------------

    def create_entity(
        self,
        type_name: str,
        qualified_name: str,
        attributes: dict,
        actor: str,
        type_version: int | None = None,
        *,
        entity_id: str | None = None,
        created_at: str | None = None,
        storage: str | None = None,
        event_id: str | None = None,
    ) -> DataEntity:
        with self._lock:
            etype = self.get_type(type_name, type_version)
            if not qualified_name or not isinstance(qualified_name, str):
                raise ValidationFailed([("qualified_name", "missing-required")])
            violations = validate_entity(attributes, etype)
            if violations:
                raise ValidationFailed(violations)
            if qualified_name in self.indexes.qualified_name:
                raise DuplicateQualifiedName(f"{qualified_name!r} is already active")
            entity = DataEntity(
                entity_id=entity_id or uuid.uuid4().hex,
                type_name=type_name,
                type_version=etype.version,
                qualified_name=qualified_name,
                created_by=actor,
                created_at=created_at or self.now_iso(),
                attributes=dict(attributes),
                status="active",
            )
            self._commit(
                "entity-created",
                {"entity": entity.to_dict(), "storage": storage},
                event_id=event_id,
            )
            return self.state.entities[entity.entity_id]

    def get_entity(self, entity_id: str) -> DataEntity:
        entity = self.state.entities.get(entity_id)
        if entity is None:
            raise NotFound(f"no entity {entity_id!r}")
        return entity

    def entity_by_qualified_name(self, qualified_name: str) -> DataEntity | None:
        eid = self.indexes.qualified_name.get(qualified_name)
        return self.state.entities.get(eid) if eid else None

    def update_entity(
        self, entity_id: str, patch: dict, actor: str, *, event_id: str | None = None
    ) -> DataEntity:
        with self._lock:
            entity = self.get_entity(entity_id)
            if not entity.active:
                raise NotFound(f"entity {entity_id!r} is deleted")
            merged = merge_attributes(entity.attributes, patch)
            violations = validate_entity(merged, self.state.schema_of(entity))
            if violations:
                raise ValidationFailed(violations)
            self._commit(
                "entity-updated",
                {"entity_id": entity_id, "patch": dict(patch), "actor": actor},
                event_id=event_id,
            )
            return self.state.entities[entity_id]

    def delete_entity(self, entity_id: str, actor: str, *, event_id: str | None = None) -> DataEntity:
        with self._lock:
            entity = self.get_entity(entity_id)
            if not entity.active:
                raise NotFound(f"entity {entity_id!r} is already deleted")
            self._commit("entity-deleted", {"entity_id": entity_id, "actor": actor}, event_id=event_id)
            return self.state.entities[entity_id]

    # -- medal-core: classifications ----------------------------------------------

    def define_classification(
        self, name: str, description: str = "", parent: str | None = None
    ) -> Classification:
        with self._lock:
            if not name:
                raise PayloadInvalid("classification name must be non-empty")
            if name in self.state.classifications:
                raise DuplicateClassification(f"classification {name!r} exists")
            if parent is not None:
                if parent == name:
                    raise CycleDetected("a classification cannot parent itself")
                if parent not in self.state.classifications:
                    raise UnknownParent(f"no classification {parent!r}")
                hop = parent
                while hop is not None:
                    if hop == name:
                        raise CycleDetected(f"classification cycle through {name!r}")
                    hop = self.state.classifications[hop].parent
            self._commit(
                "classification-defined",
                {"name": name, "description": description, "parent": parent},
            )
            return self.state.classifications[name]

    def classification_closure(self, name: str) -> set[str]:
        """The classification plus all descendants (facet roll-up)."""
        if name not in self.state.classifications:
            return set()
        out = {name}
        frontier = [name]
        while frontier:
            for child in self.state.classification_children.get(frontier.pop(), ()):
                if child not in out:
                    out.add(child)
                    frontier.append(child)
        return out

    def tag(self, entity_id: str, classification: str, actor: str) -> set[str]:
        with self._lock:
            entity = self.state.entities.get(entity_id)
            if entity is None or not entity.active:
                raise NotFound(f"no active entity {entity_id!r}")
            if classification not in self.state.classifications:
                raise NotFound(f"no classification {classification!r}")
            if classification not in self.state.memberships.get(entity_id, set()):
                self._commit(
                    "tagged",
                    {"entity_id": entity_id, "classification": classification, "actor": actor},
                )
            return set(self.state.memberships.get(entity_id, set()))

    def untag(self, entity_id: str, classification: str, actor: str) -> set[str]:
        with self._lock:
            if entity_id not in self.state.entities:
                raise NotFound(f"no entity {entity_id!r}")
            if classification not in self.state.classifications:
                raise NotFound(f"no classification {classification!r}")
            if classification in self.state.memberships.get(entity_id, set()):
                self._commit(
                    "untagged",
                    {"entity_id": entity_id, "classification": classification, "actor": actor},
                )
            return set(self.state.memberships.get(entity_id, set()))

    def memberships_of(self, entity_id: str) -> set[str]:
        return set(self.state.memberships.get(entity_id, set()))

    # -- medal-core: links ----------------------------------------------------------

    def _resolve_endpoint(self, ref: str) -> tuple[str, str]:
        entity = self.state.entities.get(ref)
        if entity is not None and entity.active:
            return ("entity", ref)
        if ref in self.state.classifications:
            return ("classification", ref)
        raise NotFound(f"no active entity or classification {ref!r}")

    def create_link(self, from_ref: str, to_ref: str, label: str, metadata: dict | None = None) -> Link:
        with self._lock:
            from_kind, from_key = self._resolve_endpoint(from_ref)
            to_kind, to_key = self._resolve_endpoint(to_ref)
            link = Link(
                uuid.uuid4().hex,
                from_kind,
                from_key,
                to_kind,
                to_key,
                label,
                dict(metadata or {}),
            )
            self._commit("link-created", {"link": link.to_dict()})
            return self.state.links[link.link_id]

    def links_for(self, ref: str) -> list[Link]:
        try:
            key = self._resolve_endpoint(ref)
        except NotFound:
            key = ("entity", ref)  # tombstoned entities keep their links listable
        ids = self.state.endpoint_links.get(key, set())
        return [self.state.links[lid] for lid in sorted(ids)]

    # -- thesaurus -------------------------------------------------------------------

    def create_thesaurus(self, thesaurus_id: str, title: str, language: str) -> Thesaurus:
        with self._lock:
            if thesaurus_id in self.state.thesauri:
                raise DuplicateThesaurus(f"thesaurus {thesaurus_id!r} exists")
            self._commit(
                "thesaurus-created",
                {"thesaurus_id": thesaurus_id, "title": title, "language": language},
            )
            return self.state.thesauri[thesaurus_id]

    def _check_sibling_label(self, thesaurus_id: str, parent: str | None, label: str) -> None:
        cats = self.state.category_children.get((thesaurus_id, parent), {})
        if label in cats:
            raise DuplicateLabel(f"category label {label!r} already used under this parent")
        if parent is not None and label in self.state.term_children.get(parent, {}):
            raise DuplicateLabel(f"term label {label!r} already used under this parent")

    def add_category(self, thesaurus_id: str, label: str, parent: str | None = None) -> Category:
        with self._lock:
            if thesaurus_id not in self.state.thesauri:
                raise UnknownThesaurus(f"no thesaurus {thesaurus_id!r}")
            if parent is not None:
                parent_cat = self.state.categories.get(parent)
                if parent_cat is None:
                    if parent in self.state.terms:
                        raise ParentIsTerm("a term cannot have children")
                    raise UnknownParent(f"no category {parent!r}")
                if parent_cat.thesaurus_id != thesaurus_id:
                    raise CrossThesaurusParent("parent belongs to another thesaurus")
            self._check_sibling_label(thesaurus_id, parent, label)
            category = Category(uuid.uuid4().hex, thesaurus_id, label, parent)
            self._commit("thesaurus-category-added", {"category": category.to_dict()})
            return self.state.categories[category.category_id]

    def add_term(self, thesaurus_id: str, label: str, parent: str) -> Term:
        with self._lock:
            if thesaurus_id not in self.state.thesauri:
                raise UnknownThesaurus(f"no thesaurus {thesaurus_id!r}")
            parent_cat = self.state.categories.get(parent)
            if parent_cat is None:
                if parent in self.state.terms:
                    raise ParentIsTerm("terms are leaves; the parent must be a category")
                raise UnknownParent(f"no category {parent!r}")
            if parent_cat.thesaurus_id != thesaurus_id:
                raise CrossThesaurusParent("parent belongs to another thesaurus")
            if label in self.state.term_children.get(parent, {}):
                raise DuplicateLabel(f"term label {label!r} already used in this category")
            if label in self.state.category_children.get((thesaurus_id, parent), {}):
                raise DuplicateLabel(f"label {label!r} already names a subcategory here")
            term = Term(uuid.uuid4().hex, thesaurus_id, label, parent)
            self._commit("term-added", {"term": term.to_dict()})
            return self.state.terms[term.term_id]

    def relate_terms(self, a: str, b: str, relation: str):
        with self._lock:
            if relation not in RELATION_KINDS:
                raise PayloadInvalid(f"relation must be one of {RELATION_KINDS}")
            for term_id in (a, b):
                if term_id not in self.state.terms:
                    raise UnknownTerm(f"no term {term_id!r}")
            if a == b:
                raise SelfRelation("a term cannot relate to itself")
            if b in self.state.term_relations.get(a, {}):
                raise DuplicateRelation("this pair is already related")
            self._commit("relation-created", {"from": a, "to": b, "relation": relation})
            return (a, b, relation)

    def associate(self, entity_id: str, term_id: str) -> None:
        with self._lock:
            entity = self.state.entities.get(entity_id)
            if entity is None or not entity.active:
                raise NotFound(f"no active entity {entity_id!r}")
            if term_id not in self.state.terms:
                raise NotFound(f"no term {term_id!r}")
            if entity_id not in self.state.associations.get(term_id, set()):
                self._commit(
                    "association-created", {"entity_id": entity_id, "term_id": term_id}
                )

    def terms_of(self, entity_id: str) -> set[str]:
        return set(self.state.entity_terms.get(entity_id, set()))

    def expand_terms(
        self, term_id: str, relations: set[str], max_depth: int | None
    ) -> set[str]:
        if term_id not in self.state.terms:
            raise UnknownTerm(f"no term {term_id!r}")
        if max_depth is not None and max_depth < 0:
            raise PayloadInvalid("max_depth must be >= 0")
        bad = set(relations) - set(RELATION_KINDS)
        if bad:
            raise PayloadInvalid(f"unknown relation kinds: {sorted(bad)}")
        return expand(term_id, set(relations), max_depth, self.state.term_relations)

    def synonym_closure(self, term_id: str) -> set[str]:
        return expand(term_id, {"synonym"}, None, self.state.term_relations)

    def entities_for_term(self, term_id: str, expand_synonyms: bool = False) -> set[str]:
        if term_id not in self.state.terms:
            raise UnknownTerm(f"no term {term_id!r}")
        seeds = self.synonym_closure(term_id) if expand_synonyms else {term_id}
        out: set[str] = set()
        for tid in seeds:
            out |= self.indexes.lookup("term", tid)
        return out

    def term_ids_for_label(self, label: str) -> set[str]:
        return set(self.state.term_labels.get(label, set()))

    def term_path(self, term_id: str) -> tuple[str, ...]:
        term = self.state.terms[term_id]
        path = [term.label]
        parent: str | None = term.parent
        while parent is not None:
            cat = self.state.categories[parent]
            path.append(cat.label)
            parent = cat.parent
        return tuple(reversed(path))

    def _resolve_path(
        self, thesaurus_id: str, path: tuple[str, ...]
    ) -> tuple[str, str] | None:
        """Resolve labels-from-root to ("category"|"term", id), or None."""
        parent: str | None = None
        for i, label in enumerate(path):
            cats = self.state.category_children.get((thesaurus_id, parent), {})
            if label in cats:
                parent = cats[label]
                if i == len(path) - 1:
                    return ("category", parent)
                continue
            if parent is not None and i == len(path) - 1:
                terms = self.state.term_children.get(parent, {})
                if label in terms:
                    return ("term", terms[label])
            return None
        return None

    def import_thesaurus(self, doc: dict) -> tuple[Thesaurus, dict]:
        """All-or-nothing import of an interchange document."""
        with self._lock:
            parsed: ParsedThesaurus = parse_interchange(doc)
            tid = parsed.thesaurus_id
            if tid in self.state.thesauri:
                raise DuplicateThesaurus(f"thesaurus {tid!r} exists")
            cat_ids: dict[tuple[str, ...], str] = {}
            term_ids: dict[tuple[str, ...], str] = {}
            for parent_path, label in parsed.categories:
                cat_ids[parent_path + (label,)] = uuid.uuid4().hex
            for parent_path, label in parsed.terms:
                term_ids[parent_path + (label,)] = uuid.uuid4().hex

            def resolve_endpoint(ref: tuple[str, tuple[str, ...]], where: str) -> str:
                ref_tid, path = ref
                if ref_tid == tid:
                    if path in term_ids:
                        return term_ids[path]
                    if path in cat_ids:
                        raise InvariantViolation(f"{where}: relations connect terms, not categories")
                    raise InvariantViolation(f"{where}: no term at path {list(path)}")
                if ref_tid not in self.state.thesauri:
                    raise InvariantViolation(f"{where}: unknown thesaurus {ref_tid!r}")
                hit = self._resolve_path(ref_tid, path)
                if hit is None or hit[0] != "term":
                    raise InvariantViolation(f"{where}: no term at path {list(path)}")
                return hit[1]

            resolved_relations: list[tuple[str, str, str]] = []
            seen_pairs: set[frozenset[str]] = set()
            for i, (ref_a, ref_b, kind) in enumerate(parsed.relations):
                a = resolve_endpoint(ref_a, f"relations[{i}].from")
                b = resolve_endpoint(ref_b, f"relations[{i}].to")
                if a == b:
                    raise SelfRelation(f"relations[{i}] relates a term to itself")
                pair = frozenset((a, b))
                if pair in seen_pairs or b in self.state.term_relations.get(a, {}):
                    raise DuplicateRelation(f"relations[{i}] duplicates an existing relation")
                seen_pairs.add(pair)
                resolved_relations.append((a, b, kind))

            # validated: emit the whole tree
            self._commit(
                "thesaurus-created",
                {"thesaurus_id": tid, "title": parsed.title, "language": parsed.language},
            )
            for parent_path, label in parsed.categories:
                category = Category(
                    cat_ids[parent_path + (label,)],
                    tid,
                    label,
                    cat_ids[parent_path] if parent_path else None,
                )
                self._commit("thesaurus-category-added", {"category": category.to_dict()})
            for parent_path, label in parsed.terms:
                term = Term(term_ids[parent_path + (label,)], tid, label, cat_ids[parent_path])
                self._commit("term-added", {"term": term.to_dict()})
            for a, b, kind in resolved_relations:
                self._commit("relation-created", {"from": a, "to": b, "relation": kind})
            return self.state.thesauri[tid], parsed.counts

    def export_thesaurus(self, thesaurus_id: str) -> dict:
        thesaurus = self.state.thesauri.get(thesaurus_id)
        if thesaurus is None:
            raise UnknownThesaurus(f"no thesaurus {thesaurus_id!r}")
        categories = [c for c in self.state.categories.values() if c.thesaurus_id == thesaurus_id]
        terms = [t for t in self.state.terms.values() if t.thesaurus_id == thesaurus_id]
        seen: set[frozenset[str]] = set()
        relations = []
        for a, peers in self.state.term_relations.items():
            for b, kind in peers.items():
                pair = frozenset((a, b))
                if pair in seen:
                    continue
                term_a, term_b = self.state.terms[a], self.state.terms[b]
                if thesaurus_id not in (term_a.thesaurus_id, term_b.thesaurus_id):
                    continue
                seen.add(pair)
                end_a = (term_a.thesaurus_id, self.term_path(a))
                end_b = (term_b.thesaurus_id, self.term_path(b))
                if term_a.thesaurus_id != thesaurus_id or (
                    term_b.thesaurus_id == thesaurus_id and end_b < end_a
                ):
                    end_a, end_b = end_b, end_a
                relations.append((end_a, end_b, kind))
        return export_interchange(thesaurus, categories, terms, relations)

    # -- lineage ---------------------------------------------------------------------

    def record_process(
        self,
        name: str,
        kind: str,
        inputs: Iterable[str],
        outputs: Iterable[str],
        executed_by: str,
        parameters: dict | None = None,
        *,
        executed_at: str | None = None,
        process_id: str | None = None,
        event_id: str | None = None,
    ) -> ProcessNode:
        with self._lock:
            if kind not in PROCESS_KINDS:
                raise PayloadInvalid(f"process kind must be one of {PROCESS_KINDS}")
            inputs_f = frozenset(inputs)
            outputs_f = frozenset(outputs)
            if not outputs_f:
                raise PayloadInvalid("a process needs at least one output entity")
            if not inputs_f and kind != "ingestion":
                raise PayloadInvalid("only ingestion processes may have empty inputs")
            for eid in inputs_f | outputs_f:
                if eid not in self.state.entities:
                    raise UnknownEntity(f"no entity {eid!r}")
            if inputs_f & outputs_f:
                raise InputsEqualOutputs("inputs and outputs must be disjoint")
            if would_cycle(inputs_f, outputs_f, self.state.producers, self.state.processes):
                raise CycleDetected("process would close a lineage cycle")
            process = ProcessNode(
                process_id=process_id or uuid.uuid4().hex,
                name=name,
                kind=kind,
                inputs=inputs_f,
                outputs=outputs_f,
                executed_by=executed_by,
                executed_at=executed_at or self.now_iso(),
                parameters={str(k): str(v) for k, v in (parameters or {}).items()},
            )
            self._commit("process-recorded", {"process": process.to_dict()}, event_id=event_id)
            return self.state.processes[process.process_id]

    def _subgraph(self, seed: str, ids: tuple[set[str], set[str], set[tuple[str, str]]]) -> LineageSubgraph:
        entity_ids, process_ids, edges = ids
        nodes = [
            SubgraphNode(
                eid,
                "entity",
                self.state.entities[eid].display_name(),
                self.state.entities[eid].status,
            )
            for eid in entity_ids
        ] + [
            SubgraphNode(pid, "process", self.state.processes[pid].name) for pid in process_ids
        ]
        return LineageSubgraph(seed, tuple(nodes), tuple(sorted(edges)))

    def upstream(self, entity_id: str, max_hops: int | None = None) -> LineageSubgraph:
        if entity_id not in self.state.entities:
            raise UnknownEntity(f"no entity {entity_id!r}")
        return self._subgraph(
            entity_id,
            upstream_ids(entity_id, max_hops, self.state.producers, self.state.processes),
        )

    def downstream(self, entity_id: str, max_hops: int | None = None) -> LineageSubgraph:
        if entity_id not in self.state.entities:
            raise UnknownEntity(f"no entity {entity_id!r}")
        return self._subgraph(
            entity_id,
            downstream_ids(entity_id, max_hops, self.state.consumers, self.state.processes),
        )

    # -- query (CatalogView implementation + search) --------------------------------

    def active_entities(self) -> list[DataEntity]:
        return [e for e in list(self.state.entities.values()) if e.active]

    def active_ids(self) -> set[str]:
        return {e.entity_id for e in list(self.state.entities.values()) if e.active}

    def schema_of(self, entity: DataEntity) -> DataEntityType:
        return self.state.schema_of(entity)

    def parse_query(self, text: str):
        return querylang.parse(text)

    def explain(self, q) -> str:
        if isinstance(q, str):
            q = querylang.parse(q)
        return querylang.explain(q)

    def search(
        self,
        q,
        principal: str,
        page_size: int = 50,
        cursor: str | None = None,
    ) -> querylang.ResultPage:
        if isinstance(q, str):
            q = querylang.parse(q)
        epoch = self.log.head_seq
        after = None
        if cursor is not None:
            cursor_epoch, after = querylang.decode_cursor(cursor)
            if cursor_epoch != epoch:
                raise CursorInvalid("catalog changed since this cursor was issued")
        ids = querylang.evaluate(self, q)
        may_read = security.make_check_filter(
            self.state.principals,
            self.state.roles,
            list(self.state.policies.values()),
            principal,
            "read",
            "entity",
        )
        hits = []
        for eid in ids:
            entity = self.state.entities.get(eid)
            if entity is None or not entity.active:
                continue
            if may_read(entity.qualified_name):
                hits.append(
                    querylang.EntitySummary(entity.entity_id, entity.qualified_name, entity.type_name)
                )
        hits.sort(key=lambda h: h.qualified_name)
        total = len(hits)
        start = 0
        if after is not None:
            start = bisect_right([h.qualified_name for h in hits], after)
        page = hits[start : start + page_size]
        next_cursor = None
        if start + page_size < total and page:
            next_cursor = querylang.encode_cursor(epoch, page[-1].qualified_name)
        return querylang.ResultPage(tuple(page), total, next_cursor)

    # -- security ----------------------------------------------------------------------

    def check(self, principal: str, action: str, resource: tuple[str, str]) -> Decision:
        kind, resource_id = resource
        return security.check(
            self.state.principals,
            self.state.roles,
            list(self.state.policies.values()),
            principal,
            action,
            kind,
            resource_id,
        )

    def two_stage_check(
        self,
        principal: str,
        action_id: str,
        action: str,
        touched_entities: Iterable[str] = (),
    ) -> Decision:
        return security.two_stage_check(
            self.state.principals,
            self.state.roles,
            list(self.state.policies.values()),
            principal,
            action_id,
            action,
            touched_entities,
        )

    def _require_admin(self, actor: str) -> None:
        verdict = self.check(actor, "admin", ("api-action", "admin"))
        if not verdict.allowed:
            raise AccessDenied(verdict.reason, stage=1)

    def create_principal(self, name: str, groups: Iterable[str], actor: str) -> Principal:
        with self._lock:
            self._require_admin(actor)
            if name in self.state.principals:
                raise DuplicatePrincipal(f"principal {name!r} exists")
            self._commit("principal-created", {"name": name, "groups": sorted(set(groups))})
            return self.state.principals[name]

    def assign_group(self, name: str, group: str, actor: str) -> Principal:
        with self._lock:
            self._require_admin(actor)
            if name not in self.state.principals:
                raise NotFound(f"no principal {name!r}")
            if group not in self.state.principals[name].groups:
                self._commit("principal-group-assigned", {"name": name, "group": group})
            return self.state.principals[name]

    def create_role(self, name: str, members: Iterable[str], actor: str) -> Role:
        with self._lock:
            self._require_admin(actor)
            if name in self.state.roles:
                raise DuplicateRole(f"role {name!r} exists")
            self._commit("role-created", {"name": name, "members": sorted(set(members))})
            return self.state.roles[name]

    def put_policy(
        self,
        role: str,
        resource_kind: str,
        pattern: str,
        actions: Iterable[str],
        effect: str,
        actor: str,
        policy_id: str | None = None,
    ) -> Policy:
        with self._lock:
            self._require_admin(actor)
            policy = self._build_policy(role, resource_kind, pattern, actions, effect, policy_id)
            self._commit("policy-put", {"policy": policy.to_dict()})
            return self.state.policies[policy.policy_id]

    def _build_policy(
        self,
        role: str,
        resource_kind: str,
        pattern: str,
        actions: Iterable[str],
        effect: str,
        policy_id: str | None,
    ) -> Policy:
        if role not in self.state.roles:
            raise NotFound(f"no role {role!r}")
        if resource_kind not in security.RESOURCE_KINDS:
            raise PayloadInvalid(f"resource kind must be one of {security.RESOURCE_KINDS}")
        if not pattern:
            raise PayloadInvalid("pattern must be non-empty")
        actions_f = frozenset(actions)
        if not actions_f or actions_f - set(security.ACTIONS):
            raise PayloadInvalid(f"actions must be a non-empty subset of {security.ACTIONS}")
        if effect not in ("allow", "deny"):
            raise PayloadInvalid("effect must be allow or deny")
        pid = policy_id or f"policy-{uuid.uuid4().hex[:8]}"
        if pid in self.state.policies:
            raise DuplicatePolicy(f"policy {pid!r} exists")
        return Policy(pid, role, resource_kind, pattern, actions_f, effect)

    def revoke_policy(self, policy_id: str, actor: str) -> None:
        with self._lock:
            self._require_admin(actor)
            if policy_id not in self.state.policies:
                raise NotFound(f"no policy {policy_id!r}")
            self._commit("policy-revoked", {"policy_id": policy_id})

    def bootstrap_security(self, doc: dict) -> None:
        """Load the startup policy file; idempotent, bypasses the admin gate."""
        with self._lock:
            for raw in doc.get("principals", []):
                name = raw["name"]
                if name not in self.state.principals:
                    self._commit(
                        "principal-created",
                        {"name": name, "groups": sorted(set(raw.get("groups", [])))},
                    )
            for raw in doc.get("roles", []):
                if raw["name"] not in self.state.roles:
                    self._commit(
                        "role-created",
                        {"name": raw["name"], "members": sorted(set(raw.get("members", [])))},
                    )
            for i, raw in enumerate(doc.get("policies", []), start=1):
                pid = raw.get("policy_id") or f"policy-{i}"
                if pid in self.state.policies:
                    continue
                policy = self._build_policy(
                    raw["role"],
                    raw["resource"]["kind"],
                    raw["resource"]["pattern"],
                    raw["actions"],
                    raw["effect"],
                    pid,
                )
                self._commit("policy-put", {"policy": policy.to_dict()})

    def bootstrap_admin(self, principal_name: str, role_name: str | None = None) -> None:
        """Create an all-powerful bootstrap admin (principal, role, allow-all policies).

        The role defaults to one private to the principal so repeated calls
        for different principals stay independent.
        """
        role_name = role_name or f"{principal_name}-admins"
        doc = {
            "principals": [{"name": principal_name, "groups": []}],
            "roles": [{"name": role_name, "members": [principal_name]}],
            "policies": [
                {
                    "policy_id": f"bootstrap-{role_name}-{kind}",
                    "role": role_name,
                    "resource": {"kind": kind, "pattern": "**"},
                    "actions": list(security.ACTIONS),
                    "effect": "allow",
                }
                for kind in security.RESOURCE_KINDS
            ],
        }
        self.bootstrap_security(doc)

    # -- storage locations (managed lake layout) ------------------------------------

    def storage_path(self, entity_id: str) -> str | None:
        return self.state.storage.get(entity_id)

"""Extended metadata-graph domain model.

Typed data entities are the core of the catalog: a ``DataEntityType`` fixes
the number, names and types of the attributes an entity may carry (closed
schema), and every entity is validated against the type version it cites.
Classifications are user-defined multi-membership tags; links are generic
labeled edges between entities and/or classifications.

This module is pure: types, value validation and conformance checking.
Registries and mutation live on the catalog.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone

from .errors import InvalidAttributeSpec

SCALAR_KINDS = ("string", "int", "float", "boolean", "date")
MAX_ARRAY_NESTING = 2

MISSING_REQUIRED = "missing-required"
UNDECLARED = "undeclared"
TYPE_MISMATCH = "type-mismatch"


@dataclass(frozen=True)
class AttributeType:
    """A value type: one of the scalar kinds or ``array`` of another type."""

    kind: str
    element: AttributeType | None = None

    def __str__(self) -> str:
        if self.kind == "array":
            return f"array<{self.element}>"
        return self.kind

    def depth(self) -> int:
        if self.kind == "array":
            assert self.element is not None
            return 1 + self.element.depth()
        return 0


def parse_attribute_type(text: str) -> AttributeType:
    """Parse a type expression like ``int`` or ``array<array<string>>``.

    Raises InvalidAttributeSpec for unknown kinds or nesting deeper than
    MAX_ARRAY_NESTING.
    """
    t = parse_type_expr(text.strip())
    if t.depth() > MAX_ARRAY_NESTING:
        raise InvalidAttributeSpec(f"array nesting deeper than {MAX_ARRAY_NESTING}: {text!r}")
    return t


def parse_type_expr(text: str) -> AttributeType:
    if text in SCALAR_KINDS:
        return AttributeType(text)
    if text.startswith("array<") and text.endswith(">"):
        return AttributeType("array", parse_type_expr(text[len("array<"):-1].strip()))
    raise InvalidAttributeSpec(f"unknown attribute type {text!r}")


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    attr_type: AttributeType
    required: bool = False


@dataclass(frozen=True)
class DataEntityType:
    """Closed attribute schema; ``version`` is a positive integer."""

    type_name: str
    attributes: tuple[AttributeSpec, ...]
    version: int = 1
    attribute_free: bool = False

    def spec_for(self, attr_name: str) -> AttributeSpec | None:
        for spec in self.attributes:
            if spec.name == attr_name:
                return spec
        return None

    def to_dict(self) -> dict:
        return {
            "type_name": self.type_name,
            "version": self.version,
            "attribute_free": self.attribute_free,
            "attributes": [
                {"name": s.name, "type": str(s.attr_type), "required": s.required}
                for s in self.attributes
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> DataEntityType:
        return build_entity_type(
            raw["type_name"],
            raw.get("attributes", []),
            version=int(raw.get("version", 1)),
            attribute_free=bool(raw.get("attribute_free", False)),
        )


def build_entity_type(
    type_name: str,
    attributes: list[dict],
    version: int = 1,
    attribute_free: bool = False,
) -> DataEntityType:
    """Validate and assemble a type definition from wire-shaped input."""
    if not type_name or not isinstance(type_name, str):
        raise InvalidAttributeSpec("type_name must be a non-empty string")
    if version < 1:
        raise InvalidAttributeSpec("version must be a positive integer")
    specs: list[AttributeSpec] = []
    seen: set[str] = set()
    for raw in attributes:
        name = raw.get("name") if isinstance(raw, dict) else None
        if not name or not isinstance(name, str):
            raise InvalidAttributeSpec("attribute entries need a non-empty name")
        if name in seen:
            raise InvalidAttributeSpec(f"duplicate attribute name {name!r}")
        seen.add(name)
        specs.append(
            AttributeSpec(
                name=name,
                attr_type=parse_attribute_type(str(raw.get("type", "string"))),
                required=bool(raw.get("required", False)),
            )
        )
    if not specs and not attribute_free:
        raise InvalidAttributeSpec(
            "attribute list is empty; register with attribute_free=true if intended"
        )
    return DataEntityType(type_name, tuple(specs), version, attribute_free)


@dataclass(frozen=True)
class DataEntity:
    entity_id: str
    type_name: str
    type_version: int
    qualified_name: str
    created_by: str
    created_at: str
    attributes: dict
    status: str = "active"

    @property
    def active(self) -> bool:
        return self.status == "active"

    def display_name(self) -> str:
        name = self.attributes.get("name")
        if isinstance(name, str) and name:
            return name
        return self.qualified_name.rsplit("/", 1)[-1]

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "type_name": self.type_name,
            "type_version": self.type_version,
            "qualified_name": self.qualified_name,
            "created_by": self.created_by,
            "created_at": self.created_at,
            "attributes": dict(self.attributes),
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> DataEntity:
        return cls(
            entity_id=raw["entity_id"],
            type_name=raw["type_name"],
            type_version=int(raw["type_version"]),
            qualified_name=raw["qualified_name"],
            created_by=raw["created_by"],
            created_at=raw["created_at"],
            attributes=dict(raw["attributes"]),
            status=raw.get("status", "active"),
        )


@dataclass(frozen=True)
class Classification:
    name: str
    description: str = ""
    parent: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "parent": self.parent}


@dataclass(frozen=True)
class Link:
    link_id: str
    from_kind: str  # "entity" | "classification"
    from_key: str
    to_kind: str
    to_key: str
    label: str
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "link_id": self.link_id,
            "from": {"kind": self.from_kind, "key": self.from_key},
            "to": {"kind": self.to_kind, "key": self.to_key},
            "label": self.label,
            "metadata": dict(self.metadata),
        }


# --- value conformance ----------------------------------------------------


def parse_iso_date(value: str) -> datetime | None:
    """Parse an ISO-8601 date or datetime; returns an aware UTC datetime.

    Date-only values map to midnight UTC. Returns None when the string is
    not ISO-8601.
    """
    if not isinstance(value, str) or not value:
        return None
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        if len(text) == 10:
            d = date.fromisoformat(text)
            return datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
        dt = datetime.fromisoformat(text)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def value_conforms(value, attr_type: AttributeType) -> bool:
    kind = attr_type.kind
    if kind == "string":
        return isinstance(value, str)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "date":
        return isinstance(value, str) and parse_iso_date(value) is not None
    if kind == "array":
        assert attr_type.element is not None
        return isinstance(value, list) and all(
            value_conforms(v, attr_type.element) for v in value
        )
    return False


def validate_entity(attributes: dict, entity_type: DataEntityType) -> list[tuple[str, str]]:
    """Check attributes against a type; total function.

    Returns the violation list — (attr_name, kind) with kind one of
    missing-required / undeclared / type-mismatch; empty means conformant.
    """
    violations: list[tuple[str, str]] = []
    declared = {s.name: s for s in entity_type.attributes}
    for spec in entity_type.attributes:
        if spec.required and spec.name not in attributes:
            violations.append((spec.name, MISSING_REQUIRED))
    for name, value in attributes.items():
        spec = declared.get(name)
        if spec is None:
            violations.append((name, UNDECLARED))
        elif not value_conforms(value, spec.attr_type):
            violations.append((name, TYPE_MISMATCH))
    return violations

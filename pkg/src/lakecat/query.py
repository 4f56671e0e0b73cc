"""Catalog search language: typed attribute predicates, boolean combinators
and facets.

Grammar (EBNF)::

    query := or
    or    := and ("OR" and)*
    and   := not ("AND" not)*
    not   := "NOT" not | prim
    prim  := "(" or ")" | facet | attr
    facet := ("classification:"|"term:"|"term+:"|"type:"|"name:") value
    attr  := IDENT op lit
    op    := "="|"!="|">"|">="|"<"|"<="|"CONTAINS"
    lit   := STRING | NUMBER | BOOL | DATE

Keywords are upper-case and case-sensitive; precedence is NOT > AND > OR.
Predicates over attributes that an entity's type does not declare match
nothing rather than erroring, so one query can span entities of many types.
Results are ordered by qualified_name (deterministic, score-free).
"""

from __future__ import annotations

import base64
import binascii
import json
import re
from dataclasses import dataclass
from typing import Iterable, Protocol

from .errors import CursorInvalid, QuerySyntaxError
from .medal import DataEntity, DataEntityType, parse_iso_date

FACET_KINDS = ("classification", "term", "term-expanded", "type", "name")
_FACET_PREFIXES = (
    ("classification:", "classification"),
    ("term+:", "term-expanded"),
    ("term:", "term"),
    ("type:", "type"),
    ("name:", "name"),
)
ORDERED_LITERALS = ("string", "int", "float", "date")
_KEYWORDS = ("AND", "OR", "NOT", "CONTAINS")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_DATE_RE = re.compile(
    r"\d{4}-\d{2}-\d{2}(?:[Tt]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:[Zz]|[+-]\d{2}:\d{2})?)?"
)
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_BARE_VALUE_RE = re.compile(r"[^\s()\"]+")


@dataclass(frozen=True)
class Literal:
    kind: str  # string | int | float | boolean | date
    value: object  # date literals keep their source text


@dataclass(frozen=True)
class AttrPredicate:
    attr: str
    op: str
    literal: Literal


@dataclass(frozen=True)
class Facet:
    kind: str
    value: str


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, expected: str, pos: int | None = None):
        raise QuerySyntaxError(self.pos if pos is None else pos, expected)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek_keyword(self, word: str) -> bool:
        self.skip_ws()
        end = self.pos + len(word)
        if self.text[self.pos:end] != word:
            return False
        # keywords must not glue onto a following identifier character
        return end >= len(self.text) or not (self.text[end].isalnum() or self.text[end] == "_")

    def take_keyword(self, word: str) -> bool:
        if self.peek_keyword(word):
            self.pos += len(word)
            return True
        return False

    def parse(self):
        if self.at_end():
            self.error("a query")
        node = self.parse_or()
        if not self.at_end():
            self.error("end of query or an operator")
        return node

    def parse_or(self):
        children = [self.parse_and()]
        while self.take_keyword("OR"):
            children.append(self.parse_and())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def parse_and(self):
        children = [self.parse_not()]
        while self.take_keyword("AND"):
            children.append(self.parse_not())
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_not(self):
        if self.take_keyword("NOT"):
            return Not(self.parse_not())
        return self.parse_prim()

    def parse_prim(self):
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("'(', a facet or an attribute predicate")
        if self.text[self.pos] == "(":
            self.pos += 1
            node = self.parse_or()
            self.skip_ws()
            if self.pos >= len(self.text) or self.text[self.pos] != ")":
                self.error("')'")
            self.pos += 1
            return node
        for prefix, kind in _FACET_PREFIXES:
            if self.text.startswith(prefix, self.pos):
                self.pos += len(prefix)
                return Facet(kind, self.parse_value())
        return self.parse_attr()

    def parse_value(self) -> str:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == '"':
            return self.parse_string()
        m = _BARE_VALUE_RE.match(self.text, self.pos)
        if not m:
            self.error("a facet value")
        self.pos = m.end()
        return m.group()

    def parse_string(self) -> str:
        assert self.text[self.pos] == '"'
        start = self.pos
        self.pos += 1
        out: list[str] = []
        escapes = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                if self.pos + 1 >= len(self.text):
                    self.error("an escaped character", self.pos)
                nxt = self.text[self.pos + 1]
                out.append(escapes.get(nxt, nxt))
                self.pos += 2
            else:
                out.append(ch)
                self.pos += 1
        self.error("closing '\"'", start)

    def parse_attr(self) -> AttrPredicate:
        self.skip_ws()
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            self.error("'(', a facet or an attribute name")
        if m.group() in _KEYWORDS:
            self.error("an attribute name, not a keyword", self.pos)
        attr = m.group()
        self.pos = m.end()
        op = self.parse_op()
        op_pos = self.pos
        literal = self.parse_literal()
        if op in (">", ">=", "<", "<=") and literal.kind not in ORDERED_LITERALS:
            self.error("an ordered literal (string, number or date) for ordering", op_pos)
        if op == "CONTAINS" and literal.kind != "string":
            self.error("a string literal after CONTAINS", op_pos)
        return AttrPredicate(attr, op, literal)

    def parse_op(self) -> str:
        self.skip_ws()
        if self.take_keyword("CONTAINS"):
            return "CONTAINS"
        for op in ("!=", ">=", "<=", "=", ">", "<"):
            if self.text.startswith(op, self.pos):
                self.pos += len(op)
                return op
        self.error("a comparison operator")

    def parse_literal(self) -> Literal:
        self.skip_ws()
        if self.pos >= len(self.text):
            self.error("a literal")
        ch = self.text[self.pos]
        if ch == '"':
            return Literal("string", self.parse_string())
        m = _DATE_RE.match(self.text, self.pos)
        if m and parse_iso_date(m.group()) is not None:
            self.pos = m.end()
            return Literal("date", m.group())
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            text = m.group()
            if "." in text or "e" in text or "E" in text:
                return Literal("float", float(text))
            return Literal("int", int(text))
        if self.take_keyword("true"):
            return Literal("boolean", True)
        if self.take_keyword("false"):
            return Literal("boolean", False)
        self.error("a literal (string, number, bool or date)")


def parse(text: str):
    """Parse query text into an AST; raises QuerySyntaxError with position."""
    return _Parser(text).parse()


# --- rendering --------------------------------------------------------------


def _render_literal(lit: Literal) -> str:
    if lit.kind == "string":
        escaped = str(lit.value).replace("\\", "\\\\").replace('"', '\\"')
        escaped = escaped.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
        return f'"{escaped}"'
    if lit.kind == "boolean":
        return "true" if lit.value else "false"
    return str(lit.value)


def _render_value(value: str) -> str:
    if _BARE_VALUE_RE.fullmatch(value):
        return value
    return _render_literal(Literal("string", value))


_FACET_PREFIX_OF = {kind: prefix for prefix, kind in _FACET_PREFIXES}


def render(node) -> str:
    """Render an AST back to query text (parse(render(q)) == q).

    Same-operator children get parentheses so n-ary flattening on reparse
    cannot change the tree shape.
    """
    if isinstance(node, Or):
        return " OR ".join(
            f"({render(c)})" if isinstance(c, Or) else render(c) for c in node.children
        )
    if isinstance(node, And):
        return " AND ".join(
            f"({render(c)})" if isinstance(c, (And, Or)) else render(c)
            for c in node.children
        )
    if isinstance(node, Not):
        inner = render(node.child)
        if isinstance(node.child, (And, Or)):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(node, Facet):
        return f"{_FACET_PREFIX_OF[node.kind]}{_render_value(node.value)}"
    if isinstance(node, AttrPredicate):
        return f"{node.attr} {node.op} {_render_literal(node.literal)}"
    raise TypeError(f"not a query node: {node!r}")


# --- evaluation --------------------------------------------------------------


class CatalogView(Protocol):
    """What the evaluator needs from the catalog."""

    def active_entities(self) -> Iterable[DataEntity]: ...

    def active_ids(self) -> set[str]: ...

    def schema_of(self, entity: DataEntity) -> DataEntityType: ...

    def index_lookup(self, kind: str, key) -> set[str]: ...

    def classification_closure(self, name: str) -> set[str]: ...

    def term_ids_for_label(self, label: str) -> set[str]: ...

    def synonym_closure(self, term_id: str) -> set[str]: ...


def matches(entity: DataEntity, schema: DataEntityType, pred: AttrPredicate) -> bool:
    """Typed predicate check against one entity; total, never raises.

    Undeclared attributes, absent values and kind mismatches match nothing.
    """
    spec = schema.spec_for(pred.attr)
    if spec is None or pred.attr not in entity.attributes:
        return False
    value = entity.attributes[pred.attr]
    akind = spec.attr_type.kind
    lit = pred.literal
    if pred.op == "CONTAINS":
        return akind == "string" and str(lit.value).lower() in value.lower()
    if akind == "string" and lit.kind == "string":
        left, right = value, lit.value
    elif akind in ("int", "float") and lit.kind in ("int", "float"):
        left, right = float(value), float(lit.value)
    elif akind == "date" and lit.kind == "date":
        left, right = parse_iso_date(value), parse_iso_date(str(lit.value))
        if left is None or right is None:
            return False
    elif akind == "boolean" and lit.kind == "boolean":
        left, right = value, lit.value
        if pred.op not in ("=", "!="):
            return False
    else:
        return False
    if pred.op == "=":
        return left == right
    if pred.op == "!=":
        return left != right
    if pred.op == ">":
        return left > right
    if pred.op == ">=":
        return left >= right
    if pred.op == "<":
        return left < right
    if pred.op == "<=":
        return left <= right
    return False


def _facet_ids(view: CatalogView, node: Facet) -> set[str]:
    if node.kind == "classification":
        ids: set[str] = set()
        for name in view.classification_closure(node.value):
            ids |= view.index_lookup("classification", name)
        return ids
    if node.kind == "term":
        ids = set()
        for term_id in view.term_ids_for_label(node.value):
            ids |= view.index_lookup("term", term_id)
        return ids
    if node.kind == "term-expanded":
        ids = set()
        for term_id in view.term_ids_for_label(node.value):
            for expanded in view.synonym_closure(term_id):
                ids |= view.index_lookup("term", expanded)
        return ids
    if node.kind == "type":
        return view.index_lookup("type", node.value)
    # name facet: exact display-name match, no index
    return {
        e.entity_id for e in view.active_entities() if e.display_name() == node.value
    }


def evaluate(view: CatalogView, node) -> set[str]:
    """Entity ids satisfying the query; equals a naive full scan by design."""
    if isinstance(node, Or):
        out: set[str] = set()
        for child in node.children:
            out |= evaluate(view, child)
        return out
    if isinstance(node, And):
        out = evaluate(view, node.children[0])
        for child in node.children[1:]:
            if not out:
                break
            out &= evaluate(view, child)
        return out
    if isinstance(node, Not):
        return view.active_ids() - evaluate(view, node.child)
    if isinstance(node, Facet):
        return _facet_ids(view, node)
    if isinstance(node, AttrPredicate):
        if node.op == "=":
            return view.index_lookup(
                "attribute", (node.attr, node.literal.value, node.literal.kind)
            )
        return {
            e.entity_id
            for e in view.active_entities()
            if matches(e, view.schema_of(e), node)
        }
    raise TypeError(f"not a query node: {node!r}")


# --- explain -----------------------------------------------------------------


def leaf_plan(node) -> str:
    if isinstance(node, Facet):
        if node.kind == "name":
            return f"scan: name[{node.value}]"
        if node.kind == "term-expanded":
            return f"index: term+[{node.value}] (synonym closure)"
        return f"index: {node.kind}[{node.value}]"
    assert isinstance(node, AttrPredicate)
    if node.op == "=":
        return f"index: attribute[{node.attr} = {_render_literal(node.literal)}]"
    return f"scan: {node.attr} {node.op} {_render_literal(node.literal)}"


def explain(node) -> str:
    """Textual plan: which indexes serve which leaves, which fall back to scan."""
    lines: list[str] = []

    def walk(n, depth: int):
        pad = "  " * depth
        if isinstance(n, (And, Or)):
            lines.append(f"{pad}{'AND (intersection)' if isinstance(n, And) else 'OR (union)'}")
            for child in n.children:
                walk(child, depth + 1)
        elif isinstance(n, Not):
            lines.append(f"{pad}NOT (complement of active set)")
            walk(n.child, depth + 1)
        else:
            lines.append(pad + leaf_plan(n))

    walk(node, 0)
    return "\n".join(lines)


# --- result pages ------------------------------------------------------------


@dataclass(frozen=True)
class EntitySummary:
    entity_id: str
    qualified_name: str
    type_name: str

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "qualified_name": self.qualified_name,
            "type_name": self.type_name,
        }


@dataclass(frozen=True)
class ResultPage:
    hits: tuple[EntitySummary, ...]
    total: int
    cursor: str | None

    def to_dict(self) -> dict:
        return {
            "hits": [h.to_dict() for h in self.hits],
            "total": self.total,
            "cursor": self.cursor,
        }


def encode_cursor(epoch: int, after: str) -> str:
    raw = json.dumps({"epoch": epoch, "after": after}).encode("utf-8")
    return base64.urlsafe_b64encode(raw).decode("ascii")


def decode_cursor(token: str) -> tuple[int, str]:
    try:
        raw = json.loads(base64.urlsafe_b64decode(token.encode("ascii")))
        return int(raw["epoch"]), str(raw["after"])
    except (ValueError, KeyError, TypeError, binascii.Error) as exc:
        raise CursorInvalid(f"malformed cursor: {exc}") from exc

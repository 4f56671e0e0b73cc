"""Thesaurus trees: categories, leaf terms and typed inter-term relations.

A category has at most one parent (tree per thesaurus); a term is always a
leaf under a category. Relations (synonym/antonym/related) connect terms,
possibly across thesauri, and are stored symmetrically. Expansion walks the
relation graph so a term with no direct data can still lead to data through
its synonyms.

Pure structures and the interchange-document parser live here; the catalog
owns the registries and mutation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import InvariantViolation, ThesaurusParseError

RELATION_KINDS = ("synonym", "antonym", "related")


@dataclass(frozen=True)
class Thesaurus:
    thesaurus_id: str
    title: str
    language: str

    def to_dict(self) -> dict:
        return {
            "thesaurus_id": self.thesaurus_id,
            "title": self.title,
            "language": self.language,
        }


@dataclass(frozen=True)
class Category:
    category_id: str
    thesaurus_id: str
    label: str
    parent: str | None = None

    def to_dict(self) -> dict:
        return {
            "category_id": self.category_id,
            "thesaurus_id": self.thesaurus_id,
            "label": self.label,
            "parent": self.parent,
        }


@dataclass(frozen=True)
class Term:
    term_id: str
    thesaurus_id: str
    label: str
    parent: str  # category_id, mandatory

    def to_dict(self) -> dict:
        return {
            "term_id": self.term_id,
            "thesaurus_id": self.thesaurus_id,
            "label": self.label,
            "parent": self.parent,
        }


def expand(
    seed: str,
    kinds: set[str],
    max_depth: int | None,
    adjacency: dict[str, dict[str, str]],
) -> set[str]:
    """Closure of the relation graph restricted to ``kinds``, up to max_depth hops.

    Always contains the seed. ``max_depth=None`` means unbounded.
    """
    result = {seed}
    frontier = deque([(seed, 0)])
    while frontier:
        term, depth = frontier.popleft()
        if max_depth is not None and depth >= max_depth:
            continue
        for other, kind in adjacency.get(term, {}).items():
            if kind in kinds and other not in result:
                result.add(other)
                frontier.append((other, depth + 1))
    return result


# --- interchange format -----------------------------------------------------
#
# {"thesaurus_id": str, "title": str, "language": str,
#  "categories": [{"label": str, "children": [<node>...]}],
#  "relations": [{"from": [thesaurus_id, [label...]],
#                 "to": [thesaurus_id, [label...]], "relation": str}]}
# where a term node is {"term": str} and a category node has label+children.


@dataclass
class ParsedThesaurus:
    thesaurus_id: str
    title: str
    language: str
    categories: list[tuple[tuple[str, ...], str]]  # (parent path, label), pre-order
    terms: list[tuple[tuple[str, ...], str]]
    relations: list[tuple[tuple[str, tuple[str, ...]], tuple[str, tuple[str, ...]], str]]

    @property
    def counts(self) -> dict:
        return {
            "categories": len(self.categories),
            "terms": len(self.terms),
            "relations": len(self.relations),
        }


def parse_interchange(doc: dict) -> ParsedThesaurus:
    """Validate an interchange document; raises ThesaurusParseError with a JSON path."""
    if not isinstance(doc, dict):
        raise ThesaurusParseError("document must be an object")
    for key in ("thesaurus_id", "title", "language"):
        if not isinstance(doc.get(key), str) or not doc.get(key):
            raise ThesaurusParseError(f"missing or non-string {key!r}", f"$.{key}")
    categories: list[tuple[tuple[str, ...], str]] = []
    terms: list[tuple[tuple[str, ...], str]] = []

    def walk(node, parent_path: tuple[str, ...], path: str, sibling_labels: set[str]):
        if not isinstance(node, dict):
            raise ThesaurusParseError("node must be an object", path)
        if "term" in node:
            if "children" in node:
                raise InvariantViolation(f"{path}: a term cannot have children")
            if set(node) != {"term"}:
                raise ThesaurusParseError("a term node carries only its label", path)
            label = node["term"]
            if not isinstance(label, str) or not label:
                raise ThesaurusParseError("term label must be a non-empty string", path)
            if not parent_path:
                raise ThesaurusParseError("a term must sit under a category", path)
            if label in sibling_labels:
                raise ThesaurusParseError(f"duplicate label {label!r} under one parent", path)
            sibling_labels.add(label)
            terms.append((parent_path, label))
            return
        label = node.get("label")
        if not isinstance(label, str) or not label:
            raise ThesaurusParseError("category needs a non-empty label", path)
        if label in sibling_labels:
            raise ThesaurusParseError(f"duplicate label {label!r} under one parent", path)
        sibling_labels.add(label)
        children = node.get("children", [])
        if not isinstance(children, list):
            raise ThesaurusParseError("children must be a list", f"{path}.children")
        categories.append((parent_path, label))
        child_labels: set[str] = set()
        for i, child in enumerate(children):
            walk(child, parent_path + (label,), f"{path}.children[{i}]", child_labels)

    roots = doc.get("categories", [])
    if not isinstance(roots, list):
        raise ThesaurusParseError("categories must be a list", "$.categories")
    root_labels: set[str] = set()
    for i, node in enumerate(roots):
        if isinstance(node, dict) and "term" in node:
            raise ThesaurusParseError("a term must sit under a category", f"$.categories[{i}]")
        walk(node, (), f"$.categories[{i}]", root_labels)

    relations: list[tuple] = []
    raw_relations = doc.get("relations", [])
    if not isinstance(raw_relations, list):
        raise ThesaurusParseError("relations must be a list", "$.relations")
    for i, rel in enumerate(raw_relations):
        path = f"$.relations[{i}]"
        if not isinstance(rel, dict):
            raise ThesaurusParseError("relation must be an object", path)
        kind = rel.get("relation")
        if kind not in RELATION_KINDS:
            raise ThesaurusParseError(f"relation must be one of {RELATION_KINDS}", path)
        endpoints = []
        for side in ("from", "to"):
            ref = rel.get(side)
            if (
                not isinstance(ref, list)
                or len(ref) != 2
                or not isinstance(ref[0], str)
                or not isinstance(ref[1], list)
                or not all(isinstance(p, str) for p in ref[1])
                or not ref[1]
            ):
                raise ThesaurusParseError(
                    "endpoint must be [thesaurus_id, [label, ...]]", f"{path}.{side}"
                )
            endpoints.append((ref[0], tuple(ref[1])))
        relations.append((endpoints[0], endpoints[1], kind))

    return ParsedThesaurus(
        thesaurus_id=doc["thesaurus_id"],
        title=doc["title"],
        language=doc["language"],
        categories=categories,
        terms=terms,
        relations=relations,
    )


def export_interchange(
    thesaurus: Thesaurus,
    categories: list[Category],
    terms: list[Term],
    relations: list[tuple[tuple[str, tuple[str, ...]], tuple[str, tuple[str, ...]], str]],
) -> dict:
    """Build the interchange document; children sorted by label for determinism."""
    by_parent: dict[str | None, list[Category]] = {}
    for cat in categories:
        by_parent.setdefault(cat.parent, []).append(cat)
    terms_by_parent: dict[str, list[Term]] = {}
    for term in terms:
        terms_by_parent.setdefault(term.parent, []).append(term)

    def render(cat: Category) -> dict:
        children: list[dict] = [
            render(c) for c in sorted(by_parent.get(cat.category_id, []), key=lambda c: c.label)
        ]
        children += [
            {"term": t.label}
            for t in sorted(terms_by_parent.get(cat.category_id, []), key=lambda t: t.label)
        ]
        return {"label": cat.label, "children": children}

    return {
        "thesaurus_id": thesaurus.thesaurus_id,
        "title": thesaurus.title,
        "language": thesaurus.language,
        "categories": [render(c) for c in sorted(by_parent.get(None, []), key=lambda c: c.label)],
        "relations": [
            {"from": [f[0], list(f[1])], "to": [t[0], list(t[1])], "relation": kind}
            for f, t, kind in sorted(relations)
        ],
    }

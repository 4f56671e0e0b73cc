"""Shared test machinery for the search language: a random catalog builder,
a random query generator, and an independent full-scan oracle evaluator.

The oracle never touches the indexes or the library evaluator: it walks every
active entity and decides each AST node with its own logic, so it can catch
index/planner bugs.
"""

from __future__ import annotations

import random
from collections import deque

from lakecat.catalog import Catalog
from lakecat.medal import parse_iso_date
from lakecat.query import And, AttrPredicate, Facet, Literal, Not, Or

DATE_POOL = ("2016-02-10", "2019-06-01", "2020-12-29", "2021-01-05")
STRING_POOL = ("tmp", "objects", "musee", "report", "Shield data", "x")
NAME_POOL = ("objects", "musee", "location", "notes.txt", "tmp")


def build_random_catalog(
    cat: Catalog,
    rng: random.Random,
    n_entities: int = 60,
    n_types: int = 3,
    n_classifications: int = 4,
    n_terms: int = 3,
) -> dict:
    """Populate a catalog with mixed-type entities, tags and term associations."""
    attr_specs = [
        {"name": "name", "type": "string"},
        {"name": "size", "type": "int"},
        {"name": "ratio", "type": "float"},
        {"name": "flag", "type": "boolean"},
        {"name": "when", "type": "date"},
        {"name": "labels", "type": "array<string>"},
    ]
    type_names = []
    for t in range(n_types):
        # types declare a sliding window of the attributes so coverage varies
        chosen = attr_specs[t % 3 :] if t % 2 else attr_specs
        name = f"type{t}"
        cat.register_type_dict({"type_name": name, "attributes": chosen})
        type_names.append((name, [a["name"] for a in chosen]))
    classification_names = []
    for c in range(n_classifications):
        parent = classification_names[0] if c == 2 and classification_names else None
        cat.define_classification(f"class{c}", parent=parent)
        classification_names.append(f"class{c}")
    cat.create_thesaurus("th", "T", "fr")
    root = cat.add_category("th", "root")
    terms = [cat.add_term("th", f"term{i}", root.category_id) for i in range(n_terms)]
    if n_terms >= 2:
        cat.relate_terms(terms[0].term_id, terms[1].term_id, "synonym")
    entity_ids = []
    for i in range(n_entities):
        type_name, declared = type_names[rng.randrange(len(type_names))]
        attrs = {}
        for attr in declared:
            if rng.random() < 0.25:
                continue  # leave some attributes absent
            if attr == "name":
                attrs[attr] = rng.choice(NAME_POOL)
            elif attr == "size":
                attrs[attr] = rng.randint(0, 2000)
            elif attr == "ratio":
                attrs[attr] = rng.choice([0.5, 1.0, 2.5, 1000.0, rng.random() * 10])
            elif attr == "flag":
                attrs[attr] = rng.random() < 0.5
            elif attr == "when":
                attrs[attr] = rng.choice(DATE_POOL)
            elif attr == "labels":
                attrs[attr] = rng.sample(list(STRING_POOL), rng.randint(0, 2))
        entity = cat.create_entity(type_name, f"lake://gen/e{i:04d}", attrs, "gen")
        entity_ids.append(entity.entity_id)
        for name in classification_names:
            if rng.random() < 0.3:
                cat.tag(entity.entity_id, name, actor="gen")
        for term in terms:
            if rng.random() < 0.2:
                cat.associate(entity.entity_id, term.term_id)
        if rng.random() < 0.1:
            cat.delete_entity(entity.entity_id, actor="gen")
    return {
        "types": [t for t, _ in type_names],
        "classifications": classification_names,
        "terms": [t.label for t in terms],
        "entity_ids": entity_ids,
    }


def random_query(rng: random.Random, vocab: dict, depth: int = 3):
    if depth <= 0 or rng.random() < 0.4:
        roll = rng.random()
        if roll < 0.45:
            attr, kind = rng.choice(
                [
                    ("name", "string"),
                    ("size", "int"),
                    ("ratio", "float"),
                    ("flag", "boolean"),
                    ("when", "date"),
                    ("ghost", "int"),  # attribute no type declares
                ]
            )
            if kind == "string":
                op = rng.choice(["=", "!=", "CONTAINS", ">", "<="])
                lit = Literal("string", rng.choice(STRING_POOL))
            elif kind == "boolean":
                op = rng.choice(["=", "!="])
                lit = Literal("boolean", rng.random() < 0.5)
            elif kind == "date":
                op = rng.choice(["=", "!=", ">", ">=", "<", "<="])
                lit = Literal("date", rng.choice(DATE_POOL))
            else:
                op = rng.choice(["=", "!=", ">", ">=", "<", "<="])
                if rng.random() < 0.5:
                    lit = Literal("int", rng.choice([0, 1, 5, 500, 1000, 2000]))
                else:
                    lit = Literal("float", rng.choice([0.5, 1.0, 2.5, 1000.0]))
            return AttrPredicate(attr, op, lit)
        if roll < 0.65:
            return Facet("classification", rng.choice(vocab["classifications"] + ["ghost"]))
        if roll < 0.75:
            return Facet("term", rng.choice(vocab["terms"] + ["ghost"]))
        if roll < 0.85:
            return Facet("term-expanded", rng.choice(vocab["terms"]))
        if roll < 0.95:
            return Facet("type", rng.choice(vocab["types"]))
        return Facet("name", rng.choice(NAME_POOL))
    roll = rng.random()
    if roll < 0.4:
        return And(tuple(random_query(rng, vocab, depth - 1) for _ in range(rng.randint(2, 3))))
    if roll < 0.8:
        return Or(tuple(random_query(rng, vocab, depth - 1) for _ in range(rng.randint(2, 3))))
    return Not(random_query(rng, vocab, depth - 1))


# --- the oracle ------------------------------------------------------------------


def _display_name(entity) -> str:
    name = entity.attributes.get("name")
    if isinstance(name, str) and name:
        return name
    return entity.qualified_name.rsplit("/", 1)[-1]


def _classification_descendants(cat: Catalog, name: str) -> set[str]:
    if name not in cat.state.classifications:
        return set()
    children: dict[str, set[str]] = {}
    for c in cat.state.classifications.values():
        if c.parent:
            children.setdefault(c.parent, set()).add(c.name)
    out, frontier = {name}, deque([name])
    while frontier:
        for child in children.get(frontier.popleft(), ()):
            if child not in out:
                out.add(child)
                frontier.append(child)
    return out


def _synonym_closure(cat: Catalog, term_id: str) -> set[str]:
    out, frontier = {term_id}, deque([term_id])
    while frontier:
        node = frontier.popleft()
        for other, kind in cat.state.term_relations.get(node, {}).items():
            if kind == "synonym" and other not in out:
                out.add(other)
                frontier.append(other)
    return out


def _attr_matches(cat: Catalog, entity, pred: AttrPredicate) -> bool:
    schema = cat.state.types[entity.type_name][entity.type_version]
    spec = next((s for s in schema.attributes if s.name == pred.attr), None)
    if spec is None or pred.attr not in entity.attributes:
        return False
    value = entity.attributes[pred.attr]
    akind = str(spec.attr_type)
    lkind = pred.literal.kind
    lit = pred.literal.value
    if pred.op == "CONTAINS":
        return akind == "string" and lkind == "string" and str(lit).lower() in value.lower()
    if akind == "string" and lkind == "string":
        pass
    elif akind in ("int", "float") and lkind in ("int", "float"):
        value, lit = float(value), float(lit)
    elif akind == "date" and lkind == "date":
        value, lit = parse_iso_date(value), parse_iso_date(str(lit))
    elif akind == "boolean" and lkind == "boolean":
        if pred.op not in ("=", "!="):
            return False
    else:
        return False
    return {
        "=": value == lit,
        "!=": value != lit,
        ">": value > lit,
        ">=": value >= lit,
        "<": value < lit,
        "<=": value <= lit,
    }[pred.op]


def _entity_satisfies(cat: Catalog, entity, node) -> bool:
    if isinstance(node, Or):
        return any(_entity_satisfies(cat, entity, c) for c in node.children)
    if isinstance(node, And):
        return all(_entity_satisfies(cat, entity, c) for c in node.children)
    if isinstance(node, Not):
        return not _entity_satisfies(cat, entity, node.child)
    if isinstance(node, Facet):
        if node.kind == "classification":
            mine = cat.state.memberships.get(entity.entity_id, set())
            return bool(mine & _classification_descendants(cat, node.value))
        if node.kind in ("term", "term-expanded"):
            wanted: set[str] = set()
            for tid, term in cat.state.terms.items():
                if term.label == node.value:
                    wanted |= (
                        _synonym_closure(cat, tid) if node.kind == "term-expanded" else {tid}
                    )
            mine = cat.state.entity_terms.get(entity.entity_id, set())
            return bool(mine & wanted)
        if node.kind == "type":
            return entity.type_name == node.value
        return _display_name(entity) == node.value
    return _attr_matches(cat, entity, node)


def oracle_execute(cat: Catalog, node) -> set[str]:
    """Naive full scan: evaluate the predicate per active entity, no indexes."""
    return {
        e.entity_id
        for e in cat.state.entities.values()
        if e.status == "active" and _entity_satisfies(cat, e, node)
    }

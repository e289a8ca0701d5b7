"""Class vocabulary plus the identity/inclusion mapping between referable
categories and raw label classes, with attribute refinements and spatial
relation rules.

Document format (YAML, canonical form sorts entries by name):

    classes:      list of {id, name}
    categories:   list of {name, kind: identity|inclusion, members: [class ids]}
    attributes:   list of {name, category, members: [class ids]}
    references:   list of {name, kind, members}   # reference-only groups for relations
    relations:    list of {name, kind: adjacency|containment, connective,
                           reference, subjects?: [category names]}
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

ADJACENCY_CONNECTIVES = frozenset({"with", "along", "along with"})
CONTAINMENT_CONNECTIVES = frozenset({"surrounded by", "in", "on", "driving on"})


class TaxonomyError(Exception):
    pass


class ParseError(TaxonomyError):
    pass


class DanglingClassId(TaxonomyError):
    pass


class EmptyCategory(TaxonomyError):
    pass


class ConnectiveKindMismatch(TaxonomyError):
    pass


class UnknownCategory(TaxonomyError):
    pass


class UnknownAttribute(TaxonomyError):
    pass


class AttributeCategoryMismatch(TaxonomyError):
    pass


@dataclass(frozen=True)
class ReferableCategory:
    name: str
    member_ids: frozenset[int]
    kind: str  # "identity" | "inclusion"


@dataclass(frozen=True)
class AttributeRule:
    name: str
    category: str
    refined_ids: frozenset[int]


@dataclass(frozen=True)
class RelationRule:
    name: str  # full surface phrase, e.g. "in the parking area"
    kind: str  # "adjacency" | "containment"
    connective: str
    reference: str  # category or reference-group name
    subjects: tuple[str, ...] = ()  # subject categories the relation applies to; empty = all

    @property
    def strength(self) -> str:
        """Containment strictness implied by the connective."""
        return "surrounded" if self.connective == "surrounded by" else "on"


@dataclass(frozen=True)
class Violation:
    entry: str
    rule: str
    message: str


@dataclass(frozen=True)
class Taxonomy:
    classes: tuple[tuple[int, str], ...]  # (class id, class name)
    categories: tuple[ReferableCategory, ...]
    attributes: tuple[AttributeRule, ...]
    relations: tuple[RelationRule, ...]
    references: tuple[ReferableCategory, ...] = ()

    def class_ids(self) -> set[int]:
        return {cid for cid, _ in self.classes}

    def class_name(self, cid: int) -> str:
        for i, name in self.classes:
            if i == cid:
                return name
        raise KeyError(cid)

    def category(self, name: str) -> ReferableCategory:
        for c in self.categories:
            if c.name == name:
                return c
        raise UnknownCategory(f"unknown category {name!r}")

    def attribute(self, name: str) -> AttributeRule:
        for a in self.attributes:
            if a.name == name:
                return a
        raise UnknownAttribute(f"unknown attribute {name!r}")

    def relation(self, name: str) -> RelationRule:
        for r in self.relations:
            if r.name == name:
                return r
        raise TaxonomyError(f"unknown relation {name!r}")

    def attributes_for(self, category: str) -> tuple[AttributeRule, ...]:
        return tuple(a for a in self.attributes if a.category == category)

    def relations_for(self, category: str) -> tuple[RelationRule, ...]:
        """Relations applicable to a subject category: the reference must differ
        from the subject, and any subject restriction must include it."""
        return tuple(
            r
            for r in self.relations
            if r.reference != category and (not r.subjects or category in r.subjects)
        )


def resolve_category(tax: Taxonomy, category: str, attribute: str | None = None) -> set[int]:
    """Class ids named by a category, optionally refined by an attribute."""
    cat = tax.category(category)
    if attribute is None:
        return set(cat.member_ids)
    attr = tax.attribute(attribute)
    if attr.category != category:
        raise AttributeCategoryMismatch(
            f"attribute {attribute!r} refines {attr.category!r}, not {category!r}"
        )
    return set(attr.refined_ids)


def resolve_reference(tax: Taxonomy, name: str) -> set[int]:
    """Class ids for a relation's reference: a category or a reference-only group."""
    for c in tax.categories + tax.references:
        if c.name == name:
            return set(c.member_ids)
    raise UnknownCategory(f"unknown reference {name!r}")


def validate_taxonomy(tax: Taxonomy) -> list[Violation]:
    """All invariant violations as data; empty list iff the taxonomy is valid."""
    out: list[Violation] = []
    ids = [cid for cid, _ in tax.classes]
    id_set = set(ids)
    for cid in sorted({i for i in ids if ids.count(i) > 1}):
        out.append(Violation(f"class {cid}", "duplicate-class-id", f"class id {cid} appears more than once"))

    groups = list(tax.categories) + list(tax.references)
    seen: set[str] = set()
    for grp in groups:
        where = f"category {grp.name!r}" if grp in tax.categories else f"reference {grp.name!r}"
        if grp.name in seen:
            out.append(Violation(where, "duplicate-name", f"{grp.name!r} defined more than once"))
        seen.add(grp.name)
        if not grp.member_ids:
            out.append(Violation(where, "empty-category", "member set is empty"))
        if grp.kind == "identity" and len(grp.member_ids) != 1:
            out.append(Violation(where, "identity-arity", "identity mapping must have exactly one member"))
        if grp.kind not in ("identity", "inclusion"):
            out.append(Violation(where, "bad-kind", f"kind must be identity or inclusion, got {grp.kind!r}"))
        for mid in sorted(grp.member_ids - id_set):
            out.append(Violation(where, "dangling-class-id", f"member id {mid} is not a declared class"))

    category_names = {c.name for c in tax.categories}
    for attr in tax.attributes:
        where = f"attribute {attr.name!r}"
        if not attr.refined_ids:
            out.append(Violation(where, "empty-category", "refined member set is empty"))
        for mid in sorted(attr.refined_ids - id_set):
            out.append(Violation(where, "dangling-class-id", f"member id {mid} is not a declared class"))
        if attr.category not in category_names:
            out.append(Violation(where, "unknown-category", f"targets unknown category {attr.category!r}"))
        else:
            cat = tax.category(attr.category)
            if not attr.refined_ids <= cat.member_ids:
                extra = sorted(attr.refined_ids - cat.member_ids)
                out.append(Violation(where, "not-a-subset", f"refined ids {extra} outside category members"))

    reference_names = category_names | {r.name for r in tax.references}
    for rel in tax.relations:
        where = f"relation {rel.name!r}"
        if rel.kind == "adjacency":
            if rel.connective not in ADJACENCY_CONNECTIVES:
                out.append(Violation(where, "connective-kind-mismatch",
                                     f"connective {rel.connective!r} is not an adjacency connective"))
        elif rel.kind == "containment":
            if rel.connective not in CONTAINMENT_CONNECTIVES:
                out.append(Violation(where, "connective-kind-mismatch",
                                     f"connective {rel.connective!r} is not a containment connective"))
        else:
            out.append(Violation(where, "bad-kind", f"kind must be adjacency or containment, got {rel.kind!r}"))
        if rel.reference not in reference_names:
            out.append(Violation(where, "unknown-reference", f"reference {rel.reference!r} not defined"))
        for subj in rel.subjects:
            if subj not in category_names:
                out.append(Violation(where, "unknown-subject", f"subject {subj!r} is not a category"))
    return out


_VIOLATION_ERRORS = {
    "dangling-class-id": DanglingClassId,
    "empty-category": EmptyCategory,
    "connective-kind-mismatch": ConnectiveKindMismatch,
}


def _require_keys(entry: dict, keys: set[str], where: str) -> None:
    missing = keys - set(entry)
    if missing:
        raise ParseError(f"{where}: missing keys {sorted(missing)}")


def _yaml_str(value) -> str:
    # YAML 1.1 parses bare on/off/yes/no as booleans; map them back.
    if value is True:
        return "on"
    if value is False:
        return "off"
    return str(value)


def loads_taxonomy(text: str) -> Taxonomy:
    """Parse and validate a taxonomy document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be a mapping")
    for section in ("classes", "categories", "attributes", "relations"):
        if section not in doc:
            raise ParseError(f"missing section {section!r}")
        if not isinstance(doc[section], list):
            raise ParseError(f"section {section!r} must be a list")

    classes = []
    for entry in doc["classes"]:
        _require_keys(entry, {"id", "name"}, "classes")
        classes.append((int(entry["id"]), str(entry["name"])))

    def _group(entry: dict, where: str) -> ReferableCategory:
        _require_keys(entry, {"name", "kind", "members"}, where)
        return ReferableCategory(
            name=str(entry["name"]),
            kind=str(entry["kind"]),
            member_ids=frozenset(int(m) for m in entry["members"]),
        )

    categories = tuple(_group(e, "categories") for e in doc["categories"])
    references = tuple(_group(e, "references") for e in doc.get("references") or [])

    attributes = []
    for entry in doc["attributes"]:
        _require_keys(entry, {"name", "category", "members"}, "attributes")
        attributes.append(
            AttributeRule(
                name=str(entry["name"]),
                category=str(entry["category"]),
                refined_ids=frozenset(int(m) for m in entry["members"]),
            )
        )

    relations = []
    for entry in doc["relations"]:
        _require_keys(entry, {"name", "kind", "connective", "reference"}, "relations")
        relations.append(
            RelationRule(
                name=str(entry["name"]),
                kind=str(entry["kind"]),
                connective=_yaml_str(entry["connective"]),
                reference=str(entry["reference"]),
                subjects=tuple(str(s) for s in entry.get("subjects", ())),
            )
        )

    tax = Taxonomy(
        classes=tuple(classes),
        categories=categories,
        attributes=tuple(attributes),
        relations=tuple(relations),
        references=references,
    )
    violations = validate_taxonomy(tax)
    if violations:
        first = violations[0]
        err = _VIOLATION_ERRORS.get(first.rule, ParseError)
        raise err(f"{first.entry}: {first.message}")
    return tax


def load_taxonomy(path: str | Path) -> Taxonomy:
    return loads_taxonomy(Path(path).read_text(encoding="utf-8"))


def dumps_taxonomy(tax: Taxonomy) -> str:
    """Canonical serialization: fixed section and key order, entries sorted by
    id (classes) or name, member lists ascending."""
    doc: dict = {
        "classes": [{"id": cid, "name": name} for cid, name in sorted(tax.classes)],
        "categories": [
            {"name": c.name, "kind": c.kind, "members": sorted(c.member_ids)}
            for c in sorted(tax.categories, key=lambda c: c.name)
        ],
        "attributes": [
            {"name": a.name, "category": a.category, "members": sorted(a.refined_ids)}
            for a in sorted(tax.attributes, key=lambda a: a.name)
        ],
    }
    if tax.references:
        doc["references"] = [
            {"name": r.name, "kind": r.kind, "members": sorted(r.member_ids)}
            for r in sorted(tax.references, key=lambda r: r.name)
        ]
    doc["relations"] = []
    for r in sorted(tax.relations, key=lambda r: r.name):
        entry = {"name": r.name, "kind": r.kind, "connective": r.connective, "reference": r.reference}
        if r.subjects:
            entry["subjects"] = sorted(r.subjects)
        doc["relations"].append(entry)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, allow_unicode=True, width=100)


def save_taxonomy(tax: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(dumps_taxonomy(tax), encoding="utf-8")


def taxonomy_hash(tax: Taxonomy) -> str:
    return hashlib.sha256(dumps_taxonomy(tax).encode("utf-8")).hexdigest()


def default_taxonomy() -> Taxonomy:
    """The bundled aerial-scene taxonomy (14 categories, 5 attributes, 7 relations)."""
    text = resources.files("refseg.data").joinpath("aerial_taxonomy.yaml").read_text(encoding="utf-8")
    return loads_taxonomy(text)

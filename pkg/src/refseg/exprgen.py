"""Referring-expression grammar: a fixed three-slot template
"<attribute?> <category> <relation?>" rendered to canonical lower-case text,
plus the inverse parser and token statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

from .taxonomy import Taxonomy

# Connective words and articles, excluded from word-cloud counts.
STOP_TOKENS = frozenset({"a", "along", "by", "driving", "in", "on", "surrounded", "the", "with"})


class ExpressionError(Exception):
    pass


class InvalidCombination(ExpressionError):
    pass


class ExpressionParseError(ExpressionError):
    pass


class UnrecognizedCategory(ExpressionParseError):
    pass


class AmbiguousParse(ExpressionParseError):
    def __init__(self, text: str, candidates: list["Expression"]):
        listing = "; ".join(f"({e.category!r}, {e.attribute!r}, {e.relation!r})" for e in candidates)
        super().__init__(f"{text!r} admits {len(candidates)} parses: {listing}")
        self.candidates = candidates


@dataclass(frozen=True)
class ExpressionSpan:
    role: str  # "category" | "attribute" | "relation"
    start: int
    end: int


@dataclass(frozen=True)
class Expression:
    """Structured referring expression plus its canonical rendered text."""

    category: str
    attribute: str | None
    relation: str | None
    text: str

    def spans(self) -> tuple[ExpressionSpan, ...]:
        """Non-overlapping character spans of each role; concatenating the span
        substrings with single spaces reconstructs the text."""
        out = []
        pos = 0
        if self.attribute is not None:
            out.append(ExpressionSpan("attribute", pos, pos + len(self.attribute)))
            pos += len(self.attribute) + 1
        out.append(ExpressionSpan("category", pos, pos + len(self.category)))
        pos += len(self.category) + 1
        if self.relation is not None:
            out.append(ExpressionSpan("relation", pos, pos + len(self.relation)))
        return tuple(out)


def render(tax: Taxonomy, category: str, attribute: str | None = None,
           relation: str | None = None) -> Expression:
    """Validate a slot combination against the taxonomy and render its canonical text."""
    cat = tax.category(category)
    if attribute is not None:
        attr = tax.attribute(attribute)
        if attr.category != category:
            raise InvalidCombination(
                f"attribute {attribute!r} refines {attr.category!r}, not {category!r}")
    if relation is not None:
        rel = tax.relation(relation)
        if rel.reference == category:
            raise InvalidCombination(f"relation {relation!r} cannot reference its own subject")
        if rel.subjects and category not in rel.subjects:
            raise InvalidCombination(f"relation {relation!r} does not apply to {category!r}")
    text = " ".join(p for p in (attribute, cat.name, relation) if p is not None)
    return Expression(category=category, attribute=attribute, relation=relation, text=text)


def enumerate_expressions(tax: Taxonomy) -> list[Expression]:
    """All template instantiations the taxonomy permits, in taxonomy order:
    per category, (no attribute + each targeting attribute) x (no relation +
    each applicable relation)."""
    out = []
    for cat in tax.categories:
        attrs: list[str | None] = [None] + [a.name for a in tax.attributes_for(cat.name)]
        rels: list[str | None] = [None] + [r.name for r in tax.relations_for(cat.name)]
        for attribute in attrs:
            for relation in rels:
                out.append(render(tax, cat.name, attribute, relation))
    return out


@lru_cache(maxsize=8)
def _parse_table(tax: Taxonomy) -> dict[str, list[Expression]]:
    table: dict[str, list[Expression]] = {}
    for e in enumerate_expressions(tax):
        table.setdefault(e.text, []).append(e)
    return table


def parse(text: str, tax: Taxonomy) -> Expression:
    """Recognize a canonical expression back into its structured slots;
    parse(render(e)) == e."""
    matches = _parse_table(tax).get(text, [])
    if len(matches) == 1:
        return matches[0]
    if len(matches) > 1:
        raise AmbiguousParse(text, matches)
    words = tuple(text.split())
    heads = {tuple(c.name.split()) for c in tax.categories}
    found = any(words[i : i + len(h)] == h for h in heads for i in range(len(words)))
    if not found:
        raise UnrecognizedCategory(f"no known category in {text!r}")
    raise ExpressionParseError(f"{text!r} is not a canonical expression for this taxonomy")


def word_cloud_counts(expressions: list[str]) -> list[tuple[str, int]]:
    """Token frequencies over whitespace-split expressions, stop connectives
    excluded, ordered by descending count then token."""
    counts = Counter()
    for text in expressions:
        counts.update(tok for tok in text.split() if tok not in STOP_TOKENS)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))

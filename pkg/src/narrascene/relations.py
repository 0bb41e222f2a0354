"""Canonical spatial relations: phrase normalization, grid offsets, and the predicate checker.

Grid coordinates are (x, y) with y growing downward, so ``above`` means a smaller y.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, NamedTuple

from .errors import NonCanonicalRelation

if TYPE_CHECKING:
    from .llm import LLMGateway

OFFSET_DISTANCE = 3


class CanonicalRelation(str, Enum):
    ABOVE = "above"
    BELOW = "below"
    AT_LEFT_OF = "at_left_of"
    AT_RIGHT_OF = "at_right_of"
    ON_TOP_OF = "on_top_of"

    @classmethod
    def parse(cls, text: str) -> CanonicalRelation:
        key = re.sub(r"[\s\-]+", "_", text.strip().lower())
        try:
            return cls(key)
        except ValueError:
            raise NonCanonicalRelation(f"{text!r} is not a canonical relation name") from None


@dataclass(frozen=True)
class GridOffset:
    dx: int
    dy: int
    overlap: bool = False


OFFSETS: dict[CanonicalRelation, GridOffset] = {
    CanonicalRelation.AT_LEFT_OF: GridOffset(-OFFSET_DISTANCE, 0),
    CanonicalRelation.AT_RIGHT_OF: GridOffset(OFFSET_DISTANCE, 0),
    CanonicalRelation.ABOVE: GridOffset(0, -OFFSET_DISTANCE),
    CanonicalRelation.BELOW: GridOffset(0, OFFSET_DISTANCE),
    CanonicalRelation.ON_TOP_OF: GridOffset(0, 0, overlap=True),
}


class Target(NamedTuple):
    x: int
    y: int
    layer_shift: bool


class Position(NamedTuple):
    x: int
    y: int
    layer: int


def apply_offset(anchor: tuple[int, int], relation: CanonicalRelation) -> Target:
    off = OFFSETS[relation]
    return Target(anchor[0] + off.dx, anchor[1] + off.dy, off.overlap)


def check_predicate(a: Position, b: Position, relation: CanonicalRelation) -> bool:
    """Does ``a <relation> b`` hold? Directional inequalities; on-top-of needs the same cell and a higher layer."""
    if relation is CanonicalRelation.AT_LEFT_OF:
        return a.x < b.x
    if relation is CanonicalRelation.AT_RIGHT_OF:
        return a.x > b.x
    if relation is CanonicalRelation.ABOVE:
        return a.y < b.y
    if relation is CanonicalRelation.BELOW:
        return a.y > b.y
    return a.x == b.x and a.y == b.y and a.layer > b.layer


def normalize_phrase(phrase: str) -> str:
    return " ".join(re.sub(r"[_\-]", " ", phrase.lower()).split())


BUILTIN_RELATIONS: dict[str, CanonicalRelation] = {
    # canonical names and their plain-English spellings
    "above": CanonicalRelation.ABOVE,
    "below": CanonicalRelation.BELOW,
    "at left of": CanonicalRelation.AT_LEFT_OF,
    "at the left of": CanonicalRelation.AT_LEFT_OF,
    "to the left of": CanonicalRelation.AT_LEFT_OF,
    "left of": CanonicalRelation.AT_LEFT_OF,
    "at right of": CanonicalRelation.AT_RIGHT_OF,
    "at the right of": CanonicalRelation.AT_RIGHT_OF,
    "to the right of": CanonicalRelation.AT_RIGHT_OF,
    "right of": CanonicalRelation.AT_RIGHT_OF,
    "on top of": CanonicalRelation.ON_TOP_OF,
    # free-form phrases
    "contains": CanonicalRelation.ON_TOP_OF,
    "sits atop": CanonicalRelation.ON_TOP_OF,
    "on": CanonicalRelation.ON_TOP_OF,
    "stands near": CanonicalRelation.AT_LEFT_OF,
    "next to": CanonicalRelation.AT_RIGHT_OF,
    "walks along": CanonicalRelation.ON_TOP_OF,
    "stands before": CanonicalRelation.AT_LEFT_OF,
    "leads to": CanonicalRelation.AT_RIGHT_OF,
    "hide behind": CanonicalRelation.AT_RIGHT_OF,
    "glows with": CanonicalRelation.ON_TOP_OF,
    "filters through": CanonicalRelation.ABOVE,
}
# third-person and plural verb forms of the same phrases
for _phrase, _rel in list(BUILTIN_RELATIONS.items()):
    _verb, _, _rest = _phrase.partition(" ")
    if _rest and _verb not in ("on", "next", "at", "to", "left", "right"):
        _alt = _verb[:-1] if _verb.endswith("s") else _verb + "s"
        BUILTIN_RELATIONS.setdefault(f"{_alt} {_rest}", _rel)


@dataclass(frozen=True)
class RelationMapTable:
    entries: Mapping[str, CanonicalRelation] = field(default_factory=lambda: dict(BUILTIN_RELATIONS))

    def lookup(self, phrase: str) -> CanonicalRelation | None:
        return self.entries.get(normalize_phrase(phrase))

    def with_overrides(self, overrides: Mapping[str, str | CanonicalRelation]) -> RelationMapTable:
        merged = dict(self.entries)
        for k, v in overrides.items():
            merged[normalize_phrase(k)] = v if isinstance(v, CanonicalRelation) else CanonicalRelation.parse(v)
        return RelationMapTable(merged)

    @classmethod
    def load(cls, path: str | Path, *, include_builtin: bool = True) -> RelationMapTable:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise NonCanonicalRelation(f"{path}: relation table must map phrase -> canonical name")
        base = cls() if include_builtin else cls({})
        return base.with_overrides(doc)

    def to_dict(self) -> dict[str, str]:
        return {k: self.entries[k].value for k in sorted(self.entries)}


@dataclass
class RelationReview:
    """Log of every phrase -> canonical mapping applied during a run, for human review."""

    entries: dict[str, dict[str, str]] = field(default_factory=dict)

    def record(self, phrase: str, relation: CanonicalRelation, source: str) -> None:
        self.entries.setdefault(normalize_phrase(phrase), {"canonical": relation.value, "source": source})

    def to_list(self) -> list[dict[str, str]]:
        return [{"phrase": k, **self.entries[k]} for k in sorted(self.entries)]


def normalize_relation(
    phrase: str,
    table: RelationMapTable | None = None,
    gateway: LLMGateway | None = None,
    review: RelationReview | None = None,
) -> CanonicalRelation:
    if not phrase or not phrase.strip():
        raise ValueError("relation phrase is empty")
    table = table if table is not None else RelationMapTable()
    hit = table.lookup(phrase)
    if hit is not None:
        if review is not None:
            review.record(phrase, hit, "table")
        return hit
    if gateway is not None and gateway.can_query:
        rel = gateway.normalize_relation(phrase)
        if review is not None:
            review.record(phrase, rel, "llm")
        return rel
    raise NonCanonicalRelation(f"no mapping for relation phrase {phrase!r}")
